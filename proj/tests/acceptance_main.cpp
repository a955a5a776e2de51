// Acceptance suite: runs every release criterion against the bundled
// fixture corpus and prints one PASS/FAIL line per criterion. Exits
// non-zero if any criterion fails. The full-scale dictionary spot check
// needs a user-supplied corpus (--wikihow-dump <articles.jsonl>) and is
// reported as SKIP when absent.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "oracles.hpp"
#include "scriptkit/contrastive.hpp"
#include "scriptkit/corpus.hpp"
#include "scriptkit/genservice.hpp"
#include "scriptkit/metrics.hpp"
#include "scriptkit/pipeline.hpp"
#include "scriptkit/prompt.hpp"
#include "scriptkit/retrieval.hpp"
#include "scriptkit/rng.hpp"
#include "scriptkit/tcd.hpp"
#include "scriptkit/text.hpp"

using namespace scriptkit;

namespace {

struct CheckFailure {
    std::string message;
};

void require(bool condition, const std::string& message) {
    if (!condition) throw CheckFailure{message};
}

std::filesystem::path fixture_path() { return SCRIPTKIT_FIXTURE; }

std::filesystem::path scratch_dir() {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path() /
               ("scriptkit-acceptance-" + std::to_string(++counter));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string wikihow_dump_path;

// --- 1. dictionary construction oracle --------------------------------------

void criterion_tcd_oracle() {
    const auto articles = load_corpus(fixture_path());
    const Tcd tcd = build_tcd(articles);
    const auto recount = oracle::recount_tcd(articles);

    require(tcd.entries.size() == recount.concepts_by_key.size(),
            "entry count differs from recount");
    for (const auto& [key, concepts] : recount.concepts_by_key) {
        auto it = tcd.entries.find(key);
        require(it != tcd.entries.end(), "missing key: " + key);
        require(it->second.concepts == concepts,
                "concept set differs for key: " + key);
    }
    require(tcd.entries.size() == 18, "fixture should collapse to 18 keys");
}

// --- 2. intersection oracle ---------------------------------------------------

void criterion_intersection_oracle() {
    const auto articles = load_corpus(fixture_path());
    const Tcd tcd = build_tcd(articles);
    auto encoder = std::make_shared<HashedTfidfEncoder>(tcd);
    const RetrievalIndex index(tcd, encoder);

    std::vector<std::string> keys;
    for (const auto& [key, entry] : tcd.entries) keys.push_back(key);

    Xoshiro256 rng(1001);
    for (int round = 0; round < 200; ++round) {
        const std::size_t k = 1 + rng.below(3);
        const std::string& query = keys[rng.below(keys.size())];
        const auto hits = index.top_k(query, k, true);

        std::vector<std::set<std::string>> sets;
        for (const auto& hit : hits) {
            const auto& s = tcd.entries.at(hit.key).concepts;
            sets.emplace_back(s.begin(), s.end());
        }
        const auto expected = oracle::intersect_by_count(sets);
        const auto result = aggregate_cra(tcd, hits, k);

        require(result.fallback_used == (expected.empty() && k > 1),
                "fallback fired out of step with the oracle");
        if (!result.fallback_used) {
            std::vector<std::string> sorted = result.concepts;
            std::sort(sorted.begin(), sorted.end());
            require(sorted == expected, "intersection differs from oracle");
        }
    }
}

// --- 3. retrieval exactness ----------------------------------------------------

void criterion_retrieval_exactness() {
    const auto articles = load_corpus(fixture_path());
    const Tcd tcd = build_tcd(articles);
    auto encoder = std::make_shared<HashedTfidfEncoder>(tcd);
    const RetrievalIndex index(tcd, encoder);

    std::vector<std::string> keys;
    for (const auto& [key, entry] : tcd.entries) keys.push_back(key);
    const char* extras[] = {"store",   "fresh fruit", "engine",
                            "kimchi",  "wash basil",  "flight tracking",
                            "cake in a cooker"};

    Xoshiro256 rng(2002);
    for (int round = 0; round < 100; ++round) {
        std::string query;
        if (round % 3 == 0) {
            query = keys[rng.below(keys.size())];
        } else if (round % 3 == 1) {
            query = keys[rng.below(keys.size())] + " " + extras[rng.below(7)];
        } else {
            query = extras[rng.below(7)];
        }
        const std::size_t k = 1 + rng.below(5);
        const bool exclude = rng.below(2) == 1;
        const std::string canonical =
            scriptkit::normalize_whitespace(scriptkit::to_lower(query));

        const auto hits = index.top_k(query, k, exclude);
        const auto expected = oracle::rank_keys(*encoder, keys, canonical, k,
                                                exclude ? canonical : "");
        require(hits.size() == expected.size(), "hit count differs");
        for (std::size_t i = 0; i < hits.size(); ++i) {
            require(hits[i].key == expected[i].key, "ranking differs at " +
                                                        std::to_string(i));
            require(std::abs(hits[i].score - expected[i].score) < 1e-9,
                    "score differs");
        }
    }

    // exclusion removes exactly the canonical self key
    for (const std::string& key : keys) {
        const auto all = index.top_k(key, keys.size(), false);
        const auto excl = index.top_k(key, keys.size(), true);
        require(all.size() == excl.size() + 1, "exclusion count wrong");
        for (const auto& hit : excl) {
            require(hit.key != key, "self key survived exclusion");
        }
    }
}

// --- 4. prompt grammar ----------------------------------------------------------

void criterion_prompt_grammar() {
    TaskInstance instance;
    instance.goal = "How to Store Peaches";
    instance.preference = "Keeping Peaches in the Fridge";
    instance.history = {
        "Rinse the peaches to clean off any dirt or debris.",
        "Dry the peaches with clean paper towels or a clean hand towel."};
    instance.target = {"t"};
    const auto prompt =
        build_prompt(instance, {"peach", "freezer", "container", "half"});
    require(prompt.serialized ==
                "<s>How to Store Peaches (Keeping Peaches in the Fridge) ### "
                "peach, freezer, container, half ### </s>"
                "Rinse the peaches to clean off any dirt or debris.</s>"
                "Dry the peaches with clean paper towels or a clean hand "
                "towel.</s>",
            "serialized layout is not byte-exact");

    static const char alphabet[] =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _-.!?";
    Xoshiro256 rng(3003);
    auto field = [&](std::size_t max_len) {
        const std::size_t len = 1 + rng.below(max_len);
        std::string out;
        for (std::size_t i = 0; i < len; ++i) {
            out.push_back(alphabet[rng.below(sizeof(alphabet) - 1)]);
        }
        return out;
    };

    for (int round = 0; round < 1000; ++round) {
        TaskInstance random;
        random.goal = field(20);
        while (!random.goal.empty() &&
               (random.goal.back() == ')' || random.goal.back() == ' ')) {
            random.goal.pop_back();
        }
        if (random.goal.empty()) random.goal = "g";
        if (rng.below(2)) random.preference = field(12);
        const std::size_t steps = rng.below(4);
        for (std::size_t i = 0; i < steps; ++i) {
            random.history.push_back(field(24));
        }
        random.target = {"t"};
        std::vector<std::string> concepts;
        const std::size_t n = rng.below(5);
        for (std::size_t i = 0; i < n; ++i) {
            std::string c = field(10);
            for (char& ch : c) {
                if (ch == ',') ch = 'x';
            }
            concepts.push_back(c);
        }

        const auto built = build_prompt(random, concepts);
        const auto fields = parse_prompt(built.serialized);
        require(fields.goal == random.goal, "goal round trip failed");
        require(fields.preference == random.preference,
                "preference round trip failed");
        require(fields.concepts == concepts, "concept round trip failed");
        require(fields.history == random.history, "history round trip failed");
    }
}

// --- 5. loss kernels --------------------------------------------------------------

void criterion_loss_kernels() {
    require(std::abs(hinge_loss(0.3, {0.4}, 0.5) - 0.6) < 1e-15,
            "hinge value for (0.3, 0.4, 0.5) is not 0.6");
    require(std::abs(joint_loss(1.0, 0.6, 0.3) - 1.18) < 1e-12,
            "joint loss for (1.0, 0.6, 0.3) is not 1.18");

    Xoshiro256 rng(4004);
    int checked = 0;
    while (checked < 100) {
        const std::size_t d = 2 + rng.below(15);
        const std::size_t t_pos = 1 + rng.below(8);
        const std::size_t n_negs = 1 + rng.below(3);

        oracle::FlatProblem problem;
        problem.phi = 0.5;
        problem.head.b = rng.real() - 0.5;
        for (std::size_t j = 0; j < d; ++j) {
            problem.head.w.push_back(2.0 * rng.real() - 1.0);
        }
        problem.h_pos = Matrix(t_pos, d);
        for (double& v : problem.h_pos.data) v = 2.0 * rng.real() - 1.0;
        for (std::size_t k = 0; k < n_negs; ++k) {
            Matrix h(1 + rng.below(8), d);
            for (double& v : h.data) v = 2.0 * rng.real() - 1.0;
            problem.h_negs.push_back(std::move(h));
        }

        const auto result = contrastive_loss(problem.h_pos, problem.h_negs,
                                             problem.head, problem.phi);
        bool near_kink = false;
        for (double c_neg : result.c_negs) {
            if (std::abs(problem.phi + c_neg - result.c_pos) < 1e-4) {
                near_kink = true;
            }
        }
        if (near_kink) continue;  // kink draws have no defined derivative

        std::vector<double> analytic;
        for (double g : result.grad_w) analytic.push_back(g);
        analytic.push_back(result.grad_b);
        for (double g : result.grad_h_pos.data) analytic.push_back(g);
        for (const auto& m : result.grad_h_negs) {
            for (double g : m.data) analytic.push_back(g);
        }
        const auto numeric = oracle::finite_difference_grad(problem, 1e-5);
        require(numeric.size() == analytic.size(), "gradient size mismatch");
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            const double scale =
                std::max({std::abs(numeric[i]), std::abs(analytic[i]), 1e-8});
            require(std::abs(numeric[i] - analytic[i]) / scale < 1e-4,
                    "gradient check failed at component " + std::to_string(i));
        }
        ++checked;
    }
}

// --- 6. negative-sampler contracts --------------------------------------------------

void criterion_negative_contracts() {
    const auto articles = load_corpus(fixture_path());
    const Tcd tcd = build_tcd(articles);

    NegativeSamplerContext context;
    context.tcd = &tcd;
    context.lexicon = &ParaphraseLexicon::builtin();

    std::size_t seen = 0;
    std::size_t replacement_checked = 0;
    for (std::uint64_t seed = 0; seen < 500; ++seed) {
        const auto manifest = split_articles(articles, {6, 2, 2}, seed);
        const auto instances = make_instances(articles, manifest, seed);
        context.corpus_instances = &instances;
        for (std::size_t i = 0; i < instances.size(); ++i, ++seen) {
            const TaskInstance& instance = instances[i];
            const std::uint64_t sample_seed = instance_seed(seed, i);

            const auto negatives =
                compose_negatives(instance, context, NegativeScheme::A,
                                  sample_seed);
            require(negatives.size() == 2, "scheme A must yield 2 samples");
            require(!negatives[0].text.empty() && !negatives[1].text.empty(),
                    "scheme A yielded an empty negative");

            const auto pseudo =
                neg_pseudo_targets(instance, instances, sample_seed);
            std::size_t steps = 1;
            for (std::size_t at = 0;
                 (at = pseudo.text.find("</s>", at)) != std::string::npos;
                 at += 4) {
                ++steps;
            }
            require(steps == instance.target.size(),
                    "pseudo-target length differs from |target|");

            try {
                const auto detail =
                    concept_replacement_detail(instance, tcd, sample_seed);
                const auto& own = tcd.entries.at(instance.key()).concepts;
                std::string rebuilt;
                std::size_t cursor = 0;
                for (const auto& span : detail.spans) {
                    require(span.position >= cursor, "span order broken");
                    rebuilt +=
                        detail.positive.substr(cursor, span.position - cursor);
                    rebuilt += span.replacement;
                    require(own.count(scriptkit::to_lower(detail.positive.substr(
                                span.position, span.length))) == 1,
                            "replaced span is not an own concept surface");
                    cursor = span.position + span.length;
                }
                rebuilt += detail.positive.substr(cursor);
                require(rebuilt == detail.text,
                        "bytes outside replaced spans changed");
                require(detail.text != detail.positive,
                        "replacement produced the positive text");
                ++replacement_checked;
            } catch (const InapplicableError&) {
                // fine: not every instance has concept occurrences
            }
        }
    }
    require(seen >= 500, "fewer than 500 seeded instances were produced");
    require(replacement_checked >= 100,
            "too few applicable concept-replacement cases");
}

// --- 7. metrics oracles -----------------------------------------------------------

void criterion_metric_oracles() {
    static const char* vocab[] = {"the", "cat", "sat", "mat", "dog",
                                  "ran", "on",  "a",   "big", "rug"};
    Xoshiro256 rng(5005);
    std::vector<EvalPair> pairs;
    oracle::BleuInputs inputs;
    for (std::size_t i = 0; i < 50; ++i) {
        auto sentence = [&] {
            const std::size_t len = 1 + rng.below(12);
            std::string s;
            for (std::size_t j = 0; j < len; ++j) {
                if (j) s += ' ';
                s += vocab[rng.below(10)];
            }
            return s;
        };
        EvalPair pair;
        pair.hypothesis = sentence();
        pair.reference = sentence();
        pair.instance_index = i;
        inputs.pairs.emplace_back(pair.hypothesis, pair.reference);
        pairs.push_back(std::move(pair));
    }

    for (int k = 1; k <= 4; ++k) {
        require(std::abs(bleu_k(pairs, k) - oracle::bleu(inputs, k)) < 1e-9,
                "BLEU-" + std::to_string(k) + " differs from oracle");
    }
    require(std::abs(rouge2_f(pairs) - oracle::rouge2(inputs)) < 1e-9,
            "ROUGE-2 differs from oracle");
    require(std::abs(meteor(pairs) - oracle::meteor_exact(inputs)) < 1e-9,
            "METEOR differs from oracle");

    const std::vector<EvalPair> identity = {{"a b c d e", "a b c d e", 0}};
    for (int k = 1; k <= 4; ++k) {
        require(std::abs(bleu_k(identity, k) - 100.0) < 1e-9,
                "identity BLEU is not 100");
    }
    require(std::abs(rouge2_f(identity) - 100.0) < 1e-9,
            "identity ROUGE-2 is not 100");
    require(std::abs(meteor(identity) - 100.0 * (1.0 - 0.5 / 125.0)) < 1e-9,
            "identity METEOR misses the closed form");

    const std::vector<EvalPair> disjoint = {{"x y z", "p q r", 0}};
    require(bleu_k(disjoint, 1) == 0.0, "disjoint BLEU-1 is not 0");
    require(rouge2_f(disjoint) == 0.0, "disjoint ROUGE-2 is not 0");
    require(meteor(disjoint) == 0.0, "disjoint METEOR is not 0");
}

// --- 8. determinism ---------------------------------------------------------------

void criterion_determinism() {
    const auto base = scratch_dir();
    RunConfig config;
    config.corpus_path = fixture_path();
    config.method = ConceptMethod::Cra;
    config.k = 2;
    config.generator = "stub";
    config.eval_split = "test";
    config.seed = 42;

    config.out_dir = base / "one";
    config.concurrency = 1;
    run(config);
    config.out_dir = base / "two";
    config.concurrency = 8;
    run(config);

    for (const char* name :
         {"manifest.json", "instances.jsonl", "tcd.jsonl", "concepts.jsonl",
          "prompts.jsonl", "outputs.jsonl", "report.json"}) {
        const std::string a = slurp(base / "one" / name);
        const std::string b = slurp(base / "two" / name);
        require(!a.empty(), std::string(name) + " is empty");
        require(a == b, std::string(name) + " differs across runs");
    }
    std::filesystem::remove_all(base);
}

// --- 9. gold-fraction direction ----------------------------------------------------

void criterion_gold_direction() {
    const auto base = scratch_dir();
    RunConfig config;
    config.corpus_path = fixture_path();
    config.out_dir = base;
    config.eval_split = "all";
    config.seed = 42;

    const EchoConceptsGenerator echo;
    const auto records = sweep_gold(config, {0.0, 0.5, 1.0}, &echo);
    require(records.size() == 3, "sweep did not produce 3 runs");
    require(records[0].report.bleu1 <= records[1].report.bleu1 + 1e-9,
            "BLEU-1 dropped from fraction 0 to 0.5");
    require(records[1].report.bleu1 <= records[2].report.bleu1 + 1e-9,
            "BLEU-1 dropped from fraction 0.5 to 1.0");
    std::filesystem::remove_all(base);
}

// --- 10. protocol conformance --------------------------------------------------------

void criterion_protocol() {
    httplib::Server server;
    std::string last_body;
    int failures = 0;
    server.Post("/generate",
                [&](const httplib::Request& req, httplib::Response& res) {
                    last_body = req.body;
                    res.set_content(
                        R"({"steps": ["Step one.", "Step two."], "finished": true})",
                        "application/json");
                });
    server.Post("/not-json", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("no json here", "text/plain");
    });
    server.Post("/always-500",
                [&](const httplib::Request&, httplib::Response& res) {
                    ++failures;
                    res.status = 500;
                });
    server.Post("/concepts", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"concepts_text": "peach, container, peach"})",
                        "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    require(port > 0, "mock server failed to bind");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);

    RemoteOptions options;
    options.timeout_ms = 2000;
    options.retries = 2;
    options.backoff_base_ms = 1;

    try {
        TaskInstance instance;
        instance.goal = "How to Store Peaches";
        instance.preference = "Keeping Peaches in the Fridge";
        instance.history = {"Rinse the peaches to clean off any dirt or debris."};
        instance.target = {"t"};
        const auto prompt = build_prompt(instance, {"peach", "freezer"});

        GenRequest request;
        request.prompt = prompt.serialized;
        const auto response =
            generate_remote(base + "/generate", request, options);
        require(response.steps.size() == 2, "round trip lost steps");
        require(Json::parse(last_body).at("prompt").get<std::string>() ==
                    prompt.serialized,
                "request bytes differ from prompt builder output");

        bool protocol_raised = false;
        try {
            generate_remote(base + "/not-json", request, options);
        } catch (const ProtocolError& e) {
            protocol_raised = true;
            require(e.raw_body() == "no json here", "raw body not preserved");
        }
        require(protocol_raised, "malformed response did not raise");

        bool transport_raised = false;
        try {
            generate_remote(base + "/always-500", request, options);
        } catch (const TransportError&) {
            transport_raised = true;
        }
        require(transport_raised, "retry exhaustion did not raise");
        require(failures == 3, "expected exactly retries+1 attempts");

        const auto concepts =
            concepts_remote(base + "/concepts", "store peaches", options);
        require(concepts == std::vector<std::string>{"peach", "container"},
                "concept parsing failed");
    } catch (...) {
        server.stop();
        listener.join();
        throw;
    }
    server.stop();
    listener.join();
}

// --- 11. full-scale spot check --------------------------------------------------------

void criterion_full_scale() {
    const auto articles = load_corpus(wikihow_dump_path);
    const Tcd tcd = build_tcd(articles);
    const TcdStats stats = tcd_stats(tcd);
    const double keys = static_cast<double>(stats.key_count);
    require(std::abs(keys - 206621.0) / 206621.0 <= 0.05,
            "key count outside +/-5% of 206621: " +
                std::to_string(stats.key_count));
    require(std::abs(stats.avg_concepts_per_key - 10.37) / 10.37 <= 0.25,
            "avg concepts/key outside +/-25% of 10.37: " +
                std::to_string(stats.avg_concepts_per_key));
}

struct Criterion {
    int number;
    const char* name;
    double budget_seconds;
    std::function<void()> body;
    bool optional = false;
};

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--wikihow-dump") == 0 && i + 1 < argc) {
            wikihow_dump_path = argv[++i];
        }
    }

    const std::vector<Criterion> criteria = {
        {1, "dictionary construction equals brute-force recount", 1.0,
         criterion_tcd_oracle},
        {2, "intersection equals membership-count oracle, fallback iff empty",
         5.0, criterion_intersection_oracle},
        {3, "retrieval ranking equals exhaustive cosine oracle", 5.0,
         criterion_retrieval_exactness},
        {4, "prompt grammar byte-exact and parse inverts build", 10.0,
         criterion_prompt_grammar},
        {5, "loss kernels: gradients, hinge value, joint value", 10.0,
         criterion_loss_kernels},
        {6, "negative samplers honor their contracts on 500 instances", 30.0,
         criterion_negative_contracts},
        {7, "metrics agree with independent oracles", 10.0,
         criterion_metric_oracles},
        {8, "fixture run is byte-identical across runs and thread counts",
         20.0, criterion_determinism},
        {9, "gold-fraction sweep is non-decreasing in BLEU-1", 20.0,
         criterion_gold_direction},
        {10, "generator protocol: round trip, malformed, retries", 20.0,
         criterion_protocol},
        {11, "full-scale wikihow dictionary stats in expected ranges", 600.0,
         criterion_full_scale, true},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        if (criterion.optional && wikihow_dump_path.empty()) {
            std::printf("[SKIP] %2d. %s (pass --wikihow-dump <articles.jsonl>)\n",
                        criterion.number, criterion.name);
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        std::string failure;
        try {
            criterion.body();
        } catch (const CheckFailure& f) {
            failure = f.message;
        } catch (const std::exception& e) {
            failure = e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start)
                .count();
        if (failure.empty() && seconds > criterion.budget_seconds) {
            failure = "exceeded time budget of " +
                      std::to_string(criterion.budget_seconds) + "s";
        }
        if (failure.empty()) {
            std::printf("[PASS] %2d. %s (%.2fs)\n", criterion.number,
                        criterion.name, seconds);
        } else {
            ++failures;
            std::printf("[FAIL] %2d. %s (%.2fs): %s\n", criterion.number,
                        criterion.name, seconds, failure.c_str());
        }
    }
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
