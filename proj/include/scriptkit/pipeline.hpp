// End-to-end orchestration: dataset -> dictionary -> concepts -> prompts ->
// generation -> evaluation, plus the gold-fraction sweep. Stages run
// sequentially and write one artifact file each; fixed seeds make every
// artifact byte-reproducible regardless of the generate stage's concurrency
// (responses are reassociated by instance index and written in input order).

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scriptkit/contrastive.hpp"
#include "scriptkit/corpus.hpp"
#include "scriptkit/genservice.hpp"
#include "scriptkit/metrics.hpp"
#include "scriptkit/retrieval.hpp"
#include "scriptkit/tcd.hpp"

namespace scriptkit {

enum class ConceptMethod { Baseline, Cra, Cg, Gold };

ConceptMethod method_from_name(const std::string& name);
const char* method_name(ConceptMethod method);

struct RunConfig {
    ConceptMethod method = ConceptMethod::Baseline;
    std::size_t k = 2;        // CRA neighbors
    double fraction = 1.0;    // gold-concept fraction
    NegativeScheme scheme = NegativeScheme::A;
    double beta = 0.3;
    double phi = 0.5;
    std::uint64_t seed = 42;
    std::array<int, 3> ratios{6, 2, 2};
    bool exclude_self = true;
    std::string eval_split = "test";  // train|dev|test|all
    std::filesystem::path corpus_path;
    std::filesystem::path out_dir;
    std::string generator = "stub";  // stub | echo | endpoint URL
    std::string cg_endpoint;         // concept-generator service (method=cg)
    int max_steps = 16;
    int timeout_ms = 30000;
    int retries = 2;
    int concurrency = 4;
    BleuMode bleu_mode = BleuMode::Cumulative;
    double repetition_threshold = 0.8;
    Json decode_hints = Json{{"length_penalty", 1.2}, {"beam", 5}};
};

Json config_echo(const RunConfig& config);

struct StageRecord {
    std::string name;
    // Every artifact the stage produced, with fnv1a64 digests of its bytes.
    std::vector<std::pair<std::string, std::string>> files;
    double millis = 0.0;
};

struct RunRecord {
    Json config;
    std::vector<StageRecord> stages;
    EvalReport report;
};

// Executes all stages in order, writing the artifact files into
// config.out_dir. A non-null generator overrides config.generator (used by
// tests to inject diagnostic generators). Any stage failure aborts with the
// stage name prefixed to the cause.
RunRecord run(const RunConfig& config, const Generator* generator = nullptr);

// One gold-method run per fraction (shared seed), writing each run into
// out_dir/gold_<fraction>/ and a CSV of (fraction, metric) rows to
// out_dir/sweep.csv. Duplicate fractions are dropped with a warning on
// stderr; an empty list is an error.
std::vector<RunRecord> sweep_gold(const RunConfig& config,
                                  const std::vector<double>& fractions,
                                  const Generator* generator = nullptr);

// --- stage building blocks, shared with the CLI ----------------------------

struct ConceptRow {
    std::size_t instance_index = 0;
    std::string method;
    std::optional<std::size_t> k;
    std::optional<double> fraction;
    std::vector<RetrievalHit> neighbors;
    std::vector<std::string> concepts;
    bool fallback_used = false;
};

struct PromptRow {
    std::size_t instance_index = 0;
    std::string prompt;
    std::vector<std::string> concepts;
};

struct OutputRow {
    std::size_t instance_index = 0;
    std::vector<std::string> steps;
};

std::vector<std::size_t> select_instances(
    const std::vector<TaskInstance>& instances, const std::string& eval_split);

std::vector<ConceptRow> derive_concept_rows(
    const Tcd& tcd, const RetrievalIndex& index,
    const std::vector<TaskInstance>& instances,
    const std::vector<std::size_t>& selection, const RunConfig& config);

void save_concept_rows(const std::vector<ConceptRow>& rows,
                       const std::filesystem::path& path);
std::vector<ConceptRow> load_concept_rows(const std::filesystem::path& path);

void save_prompt_rows(const std::vector<PromptRow>& rows,
                      const std::filesystem::path& path);
std::vector<PromptRow> load_prompt_rows(const std::filesystem::path& path);

void save_output_rows(const std::vector<OutputRow>& rows,
                      const std::filesystem::path& path);
std::vector<OutputRow> load_output_rows(const std::filesystem::path& path);

// Bounded-concurrency batch generation; responses land at their request's
// index so output order never depends on scheduling.
std::vector<GenResponse> generate_batch(const Generator& generator,
                                        const std::vector<GenRequest>& requests,
                                        int concurrency);

// negatives.jsonl rows for the selected instances; the per-instance seed is
// derived from (seed, instance index).
void export_negatives(const std::vector<TaskInstance>& instances,
                      const std::vector<std::size_t>& selection, const Tcd& tcd,
                      const ParaphraseLexicon& lexicon, NegativeScheme scheme,
                      std::uint64_t seed, const std::filesystem::path& path);

std::uint64_t instance_seed(std::uint64_t seed, std::size_t instance_index);

std::string file_digest(const std::filesystem::path& path);

}  // namespace scriptkit
