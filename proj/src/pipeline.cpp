#include "scriptkit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "scriptkit/error.hpp"
#include "scriptkit/prompt.hpp"
#include "scriptkit/rng.hpp"

namespace scriptkit {

namespace {

std::string format_fraction(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", fraction);
    return buf;
}

std::string format_metric(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", value);
    return buf;
}

}  // namespace

ConceptMethod method_from_name(const std::string& name) {
    if (name == "baseline") return ConceptMethod::Baseline;
    if (name == "cra") return ConceptMethod::Cra;
    if (name == "cg") return ConceptMethod::Cg;
    if (name == "gold") return ConceptMethod::Gold;
    throw Error("unknown method \"" + name + "\" (baseline|cra|cg|gold)");
}

const char* method_name(ConceptMethod method) {
    switch (method) {
        case ConceptMethod::Baseline: return "baseline";
        case ConceptMethod::Cra: return "cra";
        case ConceptMethod::Cg: return "cg";
        case ConceptMethod::Gold: return "gold";
    }
    return "baseline";
}

Json config_echo(const RunConfig& config) {
    Json echo;
    echo["method"] = method_name(config.method);
    echo["k"] = config.k;
    echo["fraction"] = config.fraction;
    echo["scheme"] = scheme_name(config.scheme);
    echo["beta"] = config.beta;
    echo["phi"] = config.phi;
    echo["seed"] = config.seed;
    echo["ratios"] = config.ratios;
    echo["exclude_self"] = config.exclude_self;
    echo["eval_split"] = config.eval_split;
    echo["corpus"] = config.corpus_path.string();
    echo["out_dir"] = config.out_dir.string();
    echo["generator"] = config.generator;
    echo["cg_endpoint"] = config.cg_endpoint;
    echo["max_steps"] = config.max_steps;
    echo["concurrency"] = config.concurrency;
    echo["bleu_mode"] = bleu_mode_name(config.bleu_mode);
    echo["repetition_threshold"] = config.repetition_threshold;
    echo["decode_hints"] = config.decode_hints;
    return echo;
}

std::vector<std::size_t> select_instances(
    const std::vector<TaskInstance>& instances, const std::string& eval_split) {
    std::vector<std::size_t> selection;
    if (eval_split == "all") {
        for (std::size_t i = 0; i < instances.size(); ++i) selection.push_back(i);
        return selection;
    }
    const Split split = split_from_name(eval_split);
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].split == split) selection.push_back(i);
    }
    return selection;
}

std::vector<ConceptRow> derive_concept_rows(
    const Tcd& tcd, const RetrievalIndex& index,
    const std::vector<TaskInstance>& instances,
    const std::vector<std::size_t>& selection, const RunConfig& config) {
    std::vector<ConceptRow> rows;
    rows.reserve(selection.size());
    RemoteOptions remote;
    remote.timeout_ms = config.timeout_ms;
    remote.retries = config.retries;

    for (std::size_t i : selection) {
        const TaskInstance& instance = instances[i];
        ConceptRow row;
        row.instance_index = i;
        row.method = method_name(config.method);
        switch (config.method) {
            case ConceptMethod::Cra: {
                row.k = config.k;
                row.neighbors =
                    index.top_k(instance.key(), config.k, config.exclude_self);
                CraResult cra = aggregate_cra(tcd, row.neighbors, config.k);
                row.concepts = std::move(cra.concepts);
                row.fallback_used = cra.fallback_used;
                if (row.fallback_used) {
                    std::cerr << "[concepts] empty intersection for instance "
                              << i << "; using top-1 neighbor set\n";
                }
                break;
            }
            case ConceptMethod::Cg:
                if (config.cg_endpoint.empty()) {
                    throw Error("method cg requires a concept-generator endpoint");
                }
                row.concepts =
                    concepts_remote(config.cg_endpoint, instance.key(), remote);
                break;
            case ConceptMethod::Gold:
                row.fraction = config.fraction;
                row.concepts =
                    gold_concepts(tcd, instance, config.fraction, config.seed);
                break;
            case ConceptMethod::Baseline:
                break;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void save_concept_rows(const std::vector<ConceptRow>& rows,
                       const std::filesystem::path& path) {
    JsonlWriter writer(path);
    for (const ConceptRow& row : rows) {
        Json object;
        object["instance_index"] = row.instance_index;
        object["method"] = row.method;
        object["k"] = row.k ? Json(*row.k) : Json(nullptr);
        object["fraction"] = row.fraction ? Json(*row.fraction) : Json(nullptr);
        Json neighbors = Json::array();
        for (const RetrievalHit& hit : row.neighbors) {
            neighbors.push_back(Json{{"key", hit.key}, {"score", hit.score}});
        }
        object["neighbors"] = neighbors;
        object["concepts"] = row.concepts;
        object["fallback_used"] = row.fallback_used;
        writer.write(object);
    }
}

std::vector<ConceptRow> load_concept_rows(const std::filesystem::path& path) {
    std::vector<ConceptRow> rows;
    read_jsonl(path, [&](long line_no, const Json& object) {
        ConceptRow row;
        try {
            row.instance_index = object.at("instance_index").get<std::size_t>();
            row.method = object.at("method").get<std::string>();
            if (!object.at("k").is_null()) row.k = object.at("k").get<std::size_t>();
            if (!object.at("fraction").is_null()) {
                row.fraction = object.at("fraction").get<double>();
            }
            for (const Json& n : object.at("neighbors")) {
                row.neighbors.push_back(
                    {n.at("key").get<std::string>(), n.at("score").get<double>()});
            }
            row.concepts = object.at("concepts").get<std::vector<std::string>>();
            row.fallback_used = object.at("fallback_used").get<bool>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("bad concept row: ") + e.what(), line_no);
        }
        rows.push_back(std::move(row));
    });
    return rows;
}

void save_prompt_rows(const std::vector<PromptRow>& rows,
                      const std::filesystem::path& path) {
    JsonlWriter writer(path);
    for (const PromptRow& row : rows) {
        Json object;
        object["instance_index"] = row.instance_index;
        object["prompt"] = row.prompt;
        object["concepts"] = row.concepts;
        writer.write(object);
    }
}

std::vector<PromptRow> load_prompt_rows(const std::filesystem::path& path) {
    std::vector<PromptRow> rows;
    read_jsonl(path, [&](long line_no, const Json& object) {
        PromptRow row;
        try {
            row.instance_index = object.at("instance_index").get<std::size_t>();
            row.prompt = object.at("prompt").get<std::string>();
            row.concepts = object.at("concepts").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("bad prompt row: ") + e.what(), line_no);
        }
        rows.push_back(std::move(row));
    });
    return rows;
}

void save_output_rows(const std::vector<OutputRow>& rows,
                      const std::filesystem::path& path) {
    JsonlWriter writer(path);
    for (const OutputRow& row : rows) {
        Json object;
        object["instance_index"] = row.instance_index;
        object["steps"] = row.steps;
        writer.write(object);
    }
}

std::vector<OutputRow> load_output_rows(const std::filesystem::path& path) {
    std::vector<OutputRow> rows;
    read_jsonl(path, [&](long line_no, const Json& object) {
        OutputRow row;
        try {
            row.instance_index = object.at("instance_index").get<std::size_t>();
            row.steps = object.at("steps").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("bad output row: ") + e.what(), line_no);
        }
        rows.push_back(std::move(row));
    });
    return rows;
}

std::vector<GenResponse> generate_batch(const Generator& generator,
                                        const std::vector<GenRequest>& requests,
                                        int concurrency) {
    std::vector<GenResponse> responses(requests.size());
    if (requests.empty()) return responses;

    const int workers = std::max(
        1, std::min<int>(concurrency, static_cast<int>(requests.size())));
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;

    auto work = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) break;
            try {
                responses[i] = generator.generate(requests[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                break;
            }
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (int t = 0; t < workers; ++t) threads.emplace_back(work);
        for (std::thread& t : threads) t.join();
    }
    if (error) std::rethrow_exception(error);
    return responses;
}

std::uint64_t instance_seed(std::uint64_t seed, std::size_t instance_index) {
    return fnv1a64_u64(instance_index,
                       fnv1a64_u64(seed, 1469598103934665603ULL));
}

void export_negatives(const std::vector<TaskInstance>& instances,
                      const std::vector<std::size_t>& selection, const Tcd& tcd,
                      const ParaphraseLexicon& lexicon, NegativeScheme scheme,
                      std::uint64_t seed, const std::filesystem::path& path) {
    NegativeSamplerContext context;
    context.tcd = &tcd;
    context.corpus_instances = &instances;
    context.lexicon = &lexicon;

    JsonlWriter writer(path);
    for (std::size_t i : selection) {
        std::vector<NegativeSample> negatives = compose_negatives(
            instances[i], context, scheme, instance_seed(seed, i));
        Json object;
        object["instance_index"] = i;
        object["scheme"] = scheme_name(scheme);
        Json list = Json::array();
        for (const NegativeSample& sample : negatives) {
            list.push_back(Json{{"strategy", strategy_name(sample.strategy)},
                                {"text", sample.text}});
        }
        object["negatives"] = list;
        writer.write(object);
    }
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string bytes = buffer.str();
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return hex;
}

namespace {

class StageTimer {
public:
    StageTimer(RunRecord& record, std::string name)
        : record_(record), name_(std::move(name)),
          start_(std::chrono::steady_clock::now()) {}

    void finish(std::initializer_list<std::filesystem::path> files) {
        StageRecord stage;
        stage.name = name_;
        for (const std::filesystem::path& file : files) {
            stage.files.emplace_back(file.string(), file_digest(file));
        }
        stage.millis = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start_)
                           .count();
        record_.stages.push_back(std::move(stage));
    }

private:
    RunRecord& record_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

template <typename Fn>
auto run_stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(std::string("stage ") + name + ": " + e.what(),
                    e.exit_code());
    } catch (const std::exception& e) {
        throw Error(std::string("stage ") + name + ": " + e.what());
    }
}

}  // namespace

RunRecord run(const RunConfig& config, const Generator* generator) {
    RunRecord record;
    record.config = config_echo(config);
    std::filesystem::create_directories(config.out_dir);

    // dataset: split manifest + instances
    StageTimer dataset_timer(record, "dataset");
    std::vector<Article> articles;
    std::vector<TaskInstance> instances;
    run_stage("dataset", [&] {
        articles = load_corpus(config.corpus_path);
        const SplitManifest manifest =
            split_articles(articles, config.ratios, config.seed);
        save_manifest(manifest, config.out_dir / "manifest.json");
        instances = make_instances(articles, manifest, config.seed);
        save_instances(instances, config.out_dir / "instances.jsonl");
        return 0;
    });
    dataset_timer.finish({config.out_dir / "manifest.json",
                          config.out_dir / "instances.jsonl"});

    // dictionary
    StageTimer tcd_timer(record, "tcd");
    Tcd tcd;
    run_stage("tcd", [&] {
        tcd = build_tcd(articles);
        save_tcd(tcd, config.out_dir / "tcd.jsonl");
        return 0;
    });
    tcd_timer.finish({config.out_dir / "tcd.jsonl"});

    const std::vector<std::size_t> selection =
        select_instances(instances, config.eval_split);

    auto encoder = std::make_shared<HashedTfidfEncoder>(tcd);
    auto index = std::make_shared<RetrievalIndex>(tcd, encoder);

    // concept derivation (baseline serializes prompts with no concepts)
    std::vector<ConceptRow> concept_rows;
    if (config.method != ConceptMethod::Baseline) {
        StageTimer concepts_timer(record, "concepts");
        run_stage("concepts", [&] {
            concept_rows =
                derive_concept_rows(tcd, *index, instances, selection, config);
            save_concept_rows(concept_rows, config.out_dir / "concepts.jsonl");
            return 0;
        });
        concepts_timer.finish({config.out_dir / "concepts.jsonl"});
    }

    // prompts
    StageTimer prompts_timer(record, "prompts");
    std::vector<PromptRow> prompt_rows;
    run_stage("prompts", [&] {
        prompt_rows.reserve(selection.size());
        for (std::size_t s = 0; s < selection.size(); ++s) {
            const std::size_t i = selection[s];
            PromptRow row;
            row.instance_index = i;
            if (!concept_rows.empty()) row.concepts = concept_rows[s].concepts;
            row.prompt = build_prompt(instances[i], row.concepts).serialized;
            prompt_rows.push_back(std::move(row));
        }
        save_prompt_rows(prompt_rows, config.out_dir / "prompts.jsonl");
        return 0;
    });
    prompts_timer.finish({config.out_dir / "prompts.jsonl"});

    // generation
    StageTimer generate_timer(record, "generate");
    std::vector<OutputRow> output_rows;
    run_stage("generate", [&] {
        std::unique_ptr<Generator> owned;
        const Generator* active = generator;
        if (!active) {
            if (config.generator == "stub") {
                owned = std::make_unique<StubGenerator>(index,
                                                        steps_by_key(articles));
            } else if (config.generator == "echo") {
                owned = std::make_unique<EchoConceptsGenerator>();
            } else {
                RemoteOptions options;
                options.timeout_ms = config.timeout_ms;
                options.retries = config.retries;
                owned = std::make_unique<RemoteGenerator>(config.generator,
                                                          options);
            }
            active = owned.get();
        }
        std::vector<GenRequest> requests;
        requests.reserve(prompt_rows.size());
        for (const PromptRow& row : prompt_rows) {
            requests.push_back(
                {row.prompt, config.max_steps, config.decode_hints});
        }
        const std::vector<GenResponse> responses =
            generate_batch(*active, requests, config.concurrency);
        output_rows.reserve(responses.size());
        for (std::size_t s = 0; s < responses.size(); ++s) {
            output_rows.push_back(
                {prompt_rows[s].instance_index, responses[s].steps});
        }
        save_output_rows(output_rows, config.out_dir / "outputs.jsonl");
        return 0;
    });
    generate_timer.finish({config.out_dir / "outputs.jsonl"});

    // evaluation
    StageTimer evaluate_timer(record, "evaluate");
    run_stage("evaluate", [&] {
        std::vector<EvalPair> pairs;
        std::vector<TaskInstance> eval_instances;
        std::vector<std::vector<std::string>> hypothesis_steps;
        std::vector<std::vector<std::string>> prompt_concepts;
        for (std::size_t s = 0; s < output_rows.size(); ++s) {
            const TaskInstance& instance = instances[output_rows[s].instance_index];
            EvalPair pair;
            pair.instance_index = output_rows[s].instance_index;
            std::string hyp, ref;
            for (std::size_t j = 0; j < output_rows[s].steps.size(); ++j) {
                if (j > 0) hyp += '\n';
                hyp += output_rows[s].steps[j];
            }
            for (std::size_t j = 0; j < instance.target.size(); ++j) {
                if (j > 0) ref += '\n';
                ref += instance.target[j];
            }
            pair.hypothesis = std::move(hyp);
            pair.reference = std::move(ref);
            pairs.push_back(std::move(pair));
            eval_instances.push_back(instance);
            hypothesis_steps.push_back(output_rows[s].steps);
            prompt_concepts.push_back(prompt_rows[s].concepts);
        }
        record.report = evaluate_pairs(pairs, config.bleu_mode);
        record.report.repetition_threshold = config.repetition_threshold;
        record.report.diagnostics = script_diagnostics(
            eval_instances, hypothesis_steps, tcd, prompt_concepts,
            config.repetition_threshold);
        save_report(record.report, config.out_dir / "report.json");
        return 0;
    });
    evaluate_timer.finish({config.out_dir / "report.json"});

    Json record_json;
    record_json["config"] = record.config;
    Json stages = Json::array();
    for (const StageRecord& stage : record.stages) {
        Json files = Json::array();
        for (const auto& [file, digest] : stage.files) {
            files.push_back(Json{{"file", file}, {"fnv1a64", digest}});
        }
        stages.push_back(Json{{"name", stage.name},
                              {"files", files},
                              {"millis", stage.millis}});
    }
    record_json["stages"] = stages;
    write_json_file(config.out_dir / "run_record.json", record_json);
    return record;
}

std::vector<RunRecord> sweep_gold(const RunConfig& config,
                                  const std::vector<double>& fractions,
                                  const Generator* generator) {
    if (fractions.empty()) throw Error("sweep needs at least one fraction");
    std::vector<double> unique;
    for (double f : fractions) {
        if (std::find(unique.begin(), unique.end(), f) != unique.end()) {
            std::cerr << "[sweep] duplicate fraction " << format_fraction(f)
                      << " dropped\n";
            continue;
        }
        unique.push_back(f);
    }

    std::filesystem::create_directories(config.out_dir);
    std::vector<RunRecord> records;
    std::ofstream csv(config.out_dir / "sweep.csv", std::ios::binary);
    if (!csv) throw Error("cannot write sweep.csv");
    csv << "fraction,bleu1,bleu2,bleu3,bleu4,rouge2_f,meteor\n";

    for (double fraction : unique) {
        RunConfig sub = config;
        sub.method = ConceptMethod::Gold;
        sub.fraction = fraction;
        sub.out_dir = config.out_dir / ("gold_" + format_fraction(fraction));
        RunRecord record = run(sub, generator);
        csv << format_fraction(fraction) << ','
            << format_metric(record.report.bleu1) << ','
            << format_metric(record.report.bleu2) << ','
            << format_metric(record.report.bleu3) << ','
            << format_metric(record.report.bleu4) << ','
            << format_metric(record.report.rouge2) << ','
            << format_metric(record.report.meteor_score) << '\n';
        records.push_back(std::move(record));
    }
    return records;
}

}  // namespace scriptkit
