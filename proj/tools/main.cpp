// scriptkit command line: dictionary construction, dataset derivation,
// concept acquisition, prompting, negative sampling, generation, and
// evaluation as composable subcommands over JSONL artifacts.

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scriptkit/contrastive.hpp"
#include "scriptkit/corpus.hpp"
#include "scriptkit/error.hpp"
#include "scriptkit/genservice.hpp"
#include "scriptkit/jsonl.hpp"
#include "scriptkit/metrics.hpp"
#include "scriptkit/pipeline.hpp"
#include "scriptkit/prompt.hpp"
#include "scriptkit/retrieval.hpp"
#include "scriptkit/tcd.hpp"

namespace sk = scriptkit;

namespace {

struct CliState {
    std::uint64_t seed = 42;

    // make-dataset
    std::string corpus_path;
    std::string out_dir = ".";
    std::vector<int> ratios = {6, 2, 2};

    // build-tcd / derive-concepts / ...
    std::string tcd_path;
    std::string instances_path;
    std::string manifest_path;
    std::string out_path;
    std::string method = "cra";
    std::size_t k = 2;
    double fraction = 1.0;
    bool exclude_self = true;
    std::string split = "test";

    // sample-negatives
    std::string scheme = "A";
    std::string lexicon_path;

    // generate / remote
    std::string prompts_path;
    std::string endpoint;
    bool use_stub = false;
    bool use_echo = false;
    int max_steps = 16;
    int timeout_ms = 30000;
    int retries = 2;
    int concurrency = 4;
    std::string bearer_token;

    // make-prompts
    std::string concepts_path;

    // evaluate
    std::string outputs_path;
    std::string bleu_mode = "cumulative";
    double repetition_threshold = 0.8;
    std::vector<std::string> external_scores;

    // loss
    std::string matrices_path;

    // run / sweep-gold
    std::string generator = "stub";
    std::string cg_endpoint;
    std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};

    bool stats = false;
};

sk::RunConfig run_config_from(const CliState& state) {
    sk::RunConfig config;
    config.method = sk::method_from_name(state.method);
    config.k = state.k;
    config.fraction = state.fraction;
    config.scheme = sk::scheme_from_name(state.scheme);
    config.seed = state.seed;
    config.ratios = {state.ratios[0], state.ratios[1], state.ratios[2]};
    config.exclude_self = state.exclude_self;
    config.eval_split = state.split;
    config.corpus_path = state.corpus_path;
    config.out_dir = state.out_dir;
    config.generator = state.generator;
    config.cg_endpoint = state.cg_endpoint;
    config.max_steps = state.max_steps;
    config.timeout_ms = state.timeout_ms;
    config.retries = state.retries;
    config.concurrency = state.concurrency;
    config.bleu_mode = sk::bleu_mode_from_name(state.bleu_mode);
    config.repetition_threshold = state.repetition_threshold;
    return config;
}

void print_report_line(const sk::EvalReport& report) {
    std::printf(
        "pairs=%zu bleu1=%.4f bleu2=%.4f bleu3=%.4f bleu4=%.4f "
        "rouge2=%.4f meteor=%.4f\n",
        report.n_pairs, report.bleu1, report.bleu2, report.bleu3, report.bleu4,
        report.rouge2, report.meteor_score);
}

int cmd_build_tcd(const CliState& state) {
    const auto articles = sk::load_corpus(state.corpus_path);
    const sk::Tcd tcd = sk::build_tcd(articles);
    sk::save_tcd(tcd, state.out_path);
    const sk::TcdStats stats = sk::tcd_stats(tcd);
    std::printf("wrote %s: %zu keys, %.4f concepts/key\n",
                state.out_path.c_str(), stats.key_count,
                stats.avg_concepts_per_key);
    if (state.stats) {
        const sk::CorpusStats cs = sk::corpus_stats(articles);
        std::printf("corpus: %zu articles, %.4f tokens/step, %.4f steps/article\n",
                    cs.article_count, cs.avg_tokens_per_step,
                    cs.avg_steps_per_article);
    }
    return 0;
}

int cmd_make_dataset(const CliState& state) {
    const auto articles = sk::load_corpus(state.corpus_path);
    const sk::SplitManifest manifest = sk::split_articles(
        articles, {state.ratios[0], state.ratios[1], state.ratios[2]},
        state.seed);
    const auto instances = sk::make_instances(articles, manifest, state.seed);
    std::filesystem::create_directories(state.out_dir);
    sk::save_manifest(manifest, std::filesystem::path(state.out_dir) / "manifest.json");
    sk::save_instances(instances,
                       std::filesystem::path(state.out_dir) / "instances.jsonl");
    std::printf("wrote %zu instances from %zu articles into %s\n",
                instances.size(), articles.size(), state.out_dir.c_str());
    return 0;
}

int cmd_derive_concepts(const CliState& state) {
    const sk::Tcd tcd = sk::load_tcd(state.tcd_path);
    const auto instances = sk::load_instances(state.instances_path);
    auto encoder = std::make_shared<sk::HashedTfidfEncoder>(tcd);
    sk::RetrievalIndex index(tcd, encoder);

    sk::RunConfig config = run_config_from(state);
    const auto selection = sk::select_instances(instances, state.split);
    const auto rows =
        sk::derive_concept_rows(tcd, index, instances, selection, config);
    sk::save_concept_rows(rows, state.out_path);
    std::printf("wrote %zu concept rows to %s\n", rows.size(),
                state.out_path.c_str());
    return 0;
}

int cmd_make_prompts(const CliState& state) {
    const auto instances = sk::load_instances(state.instances_path);
    std::vector<sk::PromptRow> rows;
    if (!state.concepts_path.empty()) {
        for (const sk::ConceptRow& row :
             sk::load_concept_rows(state.concepts_path)) {
            sk::PromptRow prompt;
            prompt.instance_index = row.instance_index;
            prompt.concepts = row.concepts;
            prompt.prompt =
                sk::build_prompt(instances.at(row.instance_index), row.concepts)
                    .serialized;
            rows.push_back(std::move(prompt));
        }
    } else {
        const auto selection = sk::select_instances(instances, state.split);
        for (std::size_t i : selection) {
            sk::PromptRow prompt;
            prompt.instance_index = i;
            prompt.prompt = sk::build_prompt(instances[i], {}).serialized;
            rows.push_back(std::move(prompt));
        }
    }
    sk::save_prompt_rows(rows, state.out_path);
    std::printf("wrote %zu prompts to %s\n", rows.size(), state.out_path.c_str());
    return 0;
}

int cmd_sample_negatives(const CliState& state) {
    const sk::Tcd tcd = sk::load_tcd(state.tcd_path);
    const auto instances = sk::load_instances(state.instances_path);
    const sk::ParaphraseLexicon lexicon =
        state.lexicon_path.empty() ? sk::ParaphraseLexicon::builtin()
                                   : sk::ParaphraseLexicon::load(state.lexicon_path);
    const auto selection = sk::select_instances(instances, state.split);
    sk::export_negatives(instances, selection, tcd, lexicon,
                         sk::scheme_from_name(state.scheme), state.seed,
                         state.out_path);
    std::printf("wrote negatives for %zu instances to %s\n", selection.size(),
                state.out_path.c_str());
    return 0;
}

int cmd_export_cg_train(const CliState& state) {
    const sk::Tcd tcd = sk::load_tcd(state.tcd_path);
    const sk::SplitManifest manifest = sk::load_manifest(state.manifest_path);
    const sk::CgTrainData data = sk::export_cg_training(tcd, manifest);
    sk::save_cg_training(data, state.out_path);
    std::printf("wrote %zu pairs (%zu with empty targets) to %s\n",
                data.pairs.size(), data.empty_target_count,
                state.out_path.c_str());
    return 0;
}

int cmd_generate(const CliState& state) {
    const auto prompts = sk::load_prompt_rows(state.prompts_path);
    std::unique_ptr<sk::Generator> generator;
    if (state.use_stub || state.use_echo) {
        if (state.use_echo) {
            generator = std::make_unique<sk::EchoConceptsGenerator>();
        } else {
            const auto articles = sk::load_corpus(state.corpus_path);
            const sk::Tcd tcd = sk::build_tcd(articles);
            auto encoder = std::make_shared<sk::HashedTfidfEncoder>(tcd);
            auto index = std::make_shared<sk::RetrievalIndex>(tcd, encoder);
            generator = std::make_unique<sk::StubGenerator>(
                index, sk::steps_by_key(articles));
        }
    } else if (!state.endpoint.empty()) {
        sk::RemoteOptions options;
        options.timeout_ms = state.timeout_ms;
        options.retries = state.retries;
        options.bearer_token = state.bearer_token;
        generator = std::make_unique<sk::RemoteGenerator>(state.endpoint, options);
    } else {
        throw sk::Error("generate needs --endpoint, --stub, or --echo",
                        sk::ExitCode::Usage);
    }

    std::vector<sk::GenRequest> requests;
    requests.reserve(prompts.size());
    for (const sk::PromptRow& row : prompts) {
        requests.push_back({row.prompt, state.max_steps,
                            sk::Json{{"length_penalty", 1.2}, {"beam", 5}}});
    }
    const auto responses =
        sk::generate_batch(*generator, requests, state.concurrency);
    std::vector<sk::OutputRow> rows;
    rows.reserve(responses.size());
    for (std::size_t i = 0; i < responses.size(); ++i) {
        rows.push_back({prompts[i].instance_index, responses[i].steps});
    }
    sk::save_output_rows(rows, state.out_path);
    std::printf("wrote %zu outputs to %s\n", rows.size(), state.out_path.c_str());
    return 0;
}

int cmd_evaluate(const CliState& state) {
    const auto instances = sk::load_instances(state.instances_path);
    const auto outputs = sk::load_output_rows(state.outputs_path);

    std::vector<sk::EvalPair> pairs;
    std::vector<sk::TaskInstance> eval_instances;
    std::vector<std::vector<std::string>> hypothesis_steps;
    for (const sk::OutputRow& row : outputs) {
        const sk::TaskInstance& instance = instances.at(row.instance_index);
        sk::EvalPair pair;
        pair.instance_index = row.instance_index;
        for (std::size_t j = 0; j < row.steps.size(); ++j) {
            if (j > 0) pair.hypothesis += '\n';
            pair.hypothesis += row.steps[j];
        }
        for (std::size_t j = 0; j < instance.target.size(); ++j) {
            if (j > 0) pair.reference += '\n';
            pair.reference += instance.target[j];
        }
        pairs.push_back(std::move(pair));
        eval_instances.push_back(instance);
        hypothesis_steps.push_back(row.steps);
    }

    sk::EvalReport report =
        sk::evaluate_pairs(pairs, sk::bleu_mode_from_name(state.bleu_mode));
    report.repetition_threshold = state.repetition_threshold;

    if (!state.tcd_path.empty() && !state.prompts_path.empty()) {
        const sk::Tcd tcd = sk::load_tcd(state.tcd_path);
        const auto prompts = sk::load_prompt_rows(state.prompts_path);
        std::vector<std::vector<std::string>> prompt_concepts(outputs.size());
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            for (const sk::PromptRow& row : prompts) {
                if (row.instance_index == outputs[i].instance_index) {
                    prompt_concepts[i] = row.concepts;
                    break;
                }
            }
        }
        report.diagnostics =
            sk::script_diagnostics(eval_instances, hypothesis_steps, tcd,
                                   prompt_concepts, state.repetition_threshold);
    }

    for (const std::string& kv : state.external_scores) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw sk::Error("--external expects name=value", sk::ExitCode::Usage);
        }
        report.external[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }

    sk::save_report(report, state.out_path);
    print_report_line(report);
    return 0;
}

int cmd_loss(const CliState& state) {
    const sk::LossBatch batch = sk::load_loss_batch(state.matrices_path);
    const sk::LossBundle bundle = sk::compute_loss_bundle(batch);
    sk::Json out;
    out["l_g"] = bundle.l_g;
    out["l_cl"] = bundle.l_cl;
    out["l_total"] = bundle.l_total;
    out["beta"] = bundle.beta;
    out["grad_b"] = bundle.grad_b;
    out["grad_w"] = bundle.grad_w;
    out["n_negatives"] = batch.h_negs.size();
    out["n_absent"] = batch.absent_count;
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"goal-oriented script completion toolkit"};
    app.set_config("--config")->expected(0, 1);
    app.fallthrough();
    CliState state;
    app.add_option("--seed", state.seed, "global random seed")
        ->capture_default_str();

    auto* build_tcd = app.add_subcommand("build-tcd",
                                         "build the task concept dictionary");
    build_tcd->add_option("--corpus", state.corpus_path, "articles.jsonl")
        ->required();
    build_tcd->add_option("--out", state.out_path, "tcd.jsonl")->required();
    build_tcd->add_flag("--stats", state.stats, "also print corpus statistics");

    auto* make_dataset =
        app.add_subcommand("make-dataset", "split articles and derive instances");
    make_dataset->add_option("--corpus", state.corpus_path, "articles.jsonl")
        ->required();
    make_dataset->add_option("--out-dir", state.out_dir, "output directory")
        ->required();
    make_dataset->add_option("--ratios", state.ratios, "train dev test ratios")
        ->expected(3);

    auto* derive = app.add_subcommand("derive-concepts",
                                      "acquire concepts per instance");
    derive->add_option("--tcd", state.tcd_path, "tcd.jsonl")->required();
    derive->add_option("--instances", state.instances_path, "instances.jsonl")
        ->required();
    derive->add_option("--out", state.out_path, "concepts.jsonl")->required();
    derive->add_option("--method", state.method, "cra|cg|gold")
        ->capture_default_str();
    derive->add_option("--k", state.k, "CRA neighbor count")
        ->capture_default_str();
    derive->add_option("--fraction", state.fraction, "gold-concept fraction")
        ->capture_default_str();
    derive->add_flag("--exclude-self,!--no-exclude-self", state.exclude_self,
                     "drop the query's own key from retrieval");
    derive->add_option("--split", state.split, "train|dev|test|all")
        ->capture_default_str();
    derive->add_option("--endpoint", state.cg_endpoint,
                       "concept-generator service URL (method cg)");

    auto* make_prompts =
        app.add_subcommand("make-prompts", "serialize model inputs");
    make_prompts
        ->add_option("--instances", state.instances_path, "instances.jsonl")
        ->required();
    make_prompts->add_option("--concepts", state.concepts_path,
                             "concepts.jsonl (omit for baseline prompts)");
    make_prompts->add_option("--out", state.out_path, "prompts.jsonl")
        ->required();
    make_prompts->add_option("--split", state.split,
                             "split for baseline prompts")
        ->capture_default_str();

    auto* negatives =
        app.add_subcommand("sample-negatives", "construct hard negatives");
    negatives->add_option("--tcd", state.tcd_path, "tcd.jsonl")->required();
    negatives->add_option("--instances", state.instances_path, "instances.jsonl")
        ->required();
    negatives->add_option("--out", state.out_path, "negatives.jsonl")->required();
    negatives->add_option("--scheme", state.scheme, "A|B|C|D")
        ->capture_default_str();
    negatives->add_option("--split", state.split, "train|dev|test|all")
        ->default_val("train");
    negatives->add_option("--lexicon", state.lexicon_path,
                          "paraphrase lexicon TSV (default: built-in)");

    auto* cg_train = app.add_subcommand("export-cg-train",
                                        "export concept-generator pairs");
    cg_train->add_option("--tcd", state.tcd_path, "tcd.jsonl")->required();
    cg_train->add_option("--manifest", state.manifest_path, "manifest.json")
        ->required();
    cg_train->add_option("--out", state.out_path, "cg_train.jsonl")->required();

    auto* generate = app.add_subcommand("generate", "produce completions");
    generate->add_option("--prompts", state.prompts_path, "prompts.jsonl")
        ->required();
    generate->add_option("--out", state.out_path, "outputs.jsonl")->required();
    generate->add_option("--endpoint", state.endpoint, "generator service URL");
    generate->add_flag("--stub", state.use_stub,
                       "use the built-in nearest-neighbor generator");
    generate->add_flag("--echo", state.use_echo,
                       "use the concept-echo diagnostic generator");
    generate->add_option("--corpus", state.corpus_path,
                         "articles.jsonl (needed by --stub)");
    generate->add_option("--max-steps", state.max_steps, "step budget")
        ->capture_default_str();
    generate->add_option("--timeout-ms", state.timeout_ms, "request timeout")
        ->capture_default_str();
    generate->add_option("--retries", state.retries, "retries after failure")
        ->capture_default_str();
    generate->add_option("--concurrency", state.concurrency,
                         "max in-flight requests")
        ->capture_default_str();
    generate->add_option("--bearer-token", state.bearer_token,
                         "Authorization bearer token");

    auto* evaluate = app.add_subcommand("evaluate", "score generated outputs");
    evaluate->add_option("--instances", state.instances_path, "instances.jsonl")
        ->required();
    evaluate->add_option("--outputs", state.outputs_path, "outputs.jsonl")
        ->required();
    evaluate->add_option("--out", state.out_path, "report.json")->required();
    evaluate->add_option("--tcd", state.tcd_path,
                         "tcd.jsonl (enables hallucination diagnostics)");
    evaluate->add_option("--prompts", state.prompts_path,
                         "prompts.jsonl (enables hallucination diagnostics)");
    evaluate->add_option("--bleu-mode", state.bleu_mode, "cumulative|individual")
        ->capture_default_str();
    evaluate
        ->add_option("--repetition-threshold", state.repetition_threshold,
                     "Jaccard threshold for history repetition")
        ->capture_default_str();
    evaluate->add_option("--external", state.external_scores,
                         "externally computed score, name=value");

    auto* loss = app.add_subcommand("loss", "compute loss kernels from a batch file");
    loss->add_option("--matrices", state.matrices_path, "SKL1 batch file")
        ->required();

    auto* run_cmd = app.add_subcommand("run", "full pipeline in one call");
    run_cmd->add_option("--corpus", state.corpus_path, "articles.jsonl")
        ->required();
    run_cmd->add_option("--out-dir", state.out_dir, "artifact directory")
        ->required();
    run_cmd->add_option("--method", state.method, "baseline|cra|cg|gold")
        ->default_val("baseline");
    run_cmd->add_option("--k", state.k, "CRA neighbors")->capture_default_str();
    run_cmd->add_option("--fraction", state.fraction, "gold fraction")
        ->capture_default_str();
    run_cmd->add_option("--generator", state.generator,
                        "stub | echo | endpoint URL")
        ->capture_default_str();
    run_cmd->add_option("--cg-endpoint", state.cg_endpoint,
                        "concept-generator URL (method cg)");
    run_cmd->add_option("--eval-split", state.split, "train|dev|test|all")
        ->capture_default_str();
    run_cmd->add_option("--ratios", state.ratios, "train dev test ratios")
        ->expected(3);
    run_cmd->add_flag("--exclude-self,!--no-exclude-self", state.exclude_self,
                      "drop the query's own key from retrieval");
    run_cmd->add_option("--concurrency", state.concurrency, "generate workers")
        ->capture_default_str();
    run_cmd->add_option("--max-steps", state.max_steps, "step budget")
        ->capture_default_str();
    run_cmd->add_option("--bleu-mode", state.bleu_mode, "cumulative|individual")
        ->capture_default_str();

    auto* sweep = app.add_subcommand("sweep-gold",
                                     "gold-fraction sweep with CSV summary");
    sweep->add_option("--corpus", state.corpus_path, "articles.jsonl")
        ->required();
    sweep->add_option("--out-dir", state.out_dir, "artifact directory")
        ->required();
    sweep->add_option("--fractions", state.fractions, "fractions to sweep")
        ->expected(-1);
    sweep->add_option("--generator", state.generator, "stub | echo | URL")
        ->capture_default_str();
    sweep->add_option("--eval-split", state.split, "train|dev|test|all")
        ->capture_default_str();
    sweep->add_option("--concurrency", state.concurrency, "generate workers")
        ->capture_default_str();

    app.require_subcommand(1);

    try {
        app.parse(argc, argv);
        if (build_tcd->parsed()) return cmd_build_tcd(state);
        if (make_dataset->parsed()) return cmd_make_dataset(state);
        if (derive->parsed()) return cmd_derive_concepts(state);
        if (make_prompts->parsed()) return cmd_make_prompts(state);
        if (negatives->parsed()) return cmd_sample_negatives(state);
        if (cg_train->parsed()) return cmd_export_cg_train(state);
        if (generate->parsed()) return cmd_generate(state);
        if (evaluate->parsed()) return cmd_evaluate(state);
        if (loss->parsed()) return cmd_loss(state);
        if (run_cmd->parsed()) {
            const sk::RunRecord record = sk::run(run_config_from(state));
            print_report_line(record.report);
            return 0;
        }
        if (sweep->parsed()) {
            sk::RunConfig config = run_config_from(state);
            const auto records = sk::sweep_gold(config, state.fractions);
            for (std::size_t i = 0; i < records.size(); ++i) {
                print_report_line(records[i].report);
            }
            return 0;
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(sk::ExitCode::Usage);
    } catch (const sk::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(sk::ExitCode::Data);
    }
}
