// Corpus-level automatic evaluation.
//
// BLEU pools clipped n-gram counts over the whole corpus (cumulative by
// default: geometric mean of p_1..p_k with the brevity penalty, no
// smoothing, so any zero precision zeroes the score). ROUGE-2 is per-pair
// bigram F1 macro-averaged. METEOR is the exact-match stage only (greedy
// left-to-right unigram alignment, F = 10PR/(R+9P), chunk penalty
// 0.5*(chunks/matches)^3) -- no stem or synonym stages, so values compare
// within this toolkit, not against scores from resource-backed scorers.
// Everything tokenizes on whitespace after case folding.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scriptkit/corpus.hpp"
#include "scriptkit/tcd.hpp"

namespace scriptkit {

struct EvalPair {
    std::string hypothesis;  // generated steps joined by newline
    std::string reference;   // target steps joined by newline, non-empty
    std::size_t instance_index = 0;
};

enum class BleuMode { Cumulative, Individual };

BleuMode bleu_mode_from_name(const std::string& name);
const char* bleu_mode_name(BleuMode mode);

// Corpus BLEU-k in [0, 100].
double bleu_k(const std::vector<EvalPair>& pairs, int k,
              BleuMode mode = BleuMode::Cumulative);

// Macro-averaged bigram F1 in [0, 100]; pairs whose reference has fewer
// than two tokens contribute 0.
double rouge2_f(const std::vector<EvalPair>& pairs);

// Macro-averaged exact-match score in [0, 100].
double meteor(const std::vector<EvalPair>& pairs);

struct Diagnostics {
    double repetition_rate = 0.0;     // hypothesis steps echoing history
    double hallucination_rate = 0.0;  // concepts outside entry and prompt
};

// repetition: fraction of hypothesis steps whose case-folded unigram
// Jaccard with any history step reaches the threshold. hallucination:
// fraction of extracted hypothesis concepts absent from both the
// instance's dictionary entry and its prompt concepts.
Diagnostics script_diagnostics(
    const std::vector<TaskInstance>& instances,
    const std::vector<std::vector<std::string>>& hypothesis_steps,
    const Tcd& tcd,
    const std::vector<std::vector<std::string>>& prompt_concepts,
    double repetition_threshold = 0.8);

struct EvalReport {
    double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
    double rouge2 = 0;
    double meteor_score = 0;
    std::optional<Diagnostics> diagnostics;
    std::map<std::string, double> external;  // BERTScore/... slots
    std::size_t n_pairs = 0;
    BleuMode bleu_mode = BleuMode::Cumulative;
    double repetition_threshold = 0.8;
};

EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs,
                          BleuMode mode = BleuMode::Cumulative);

void save_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace scriptkit
