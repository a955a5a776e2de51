// Hard-negative construction and the training loss kernels.
//
// Three corruption strategies produce negatives close enough to a positive
// completion to be instructive: replacing task concepts with same-category
// foreign ones, inserting paraphrased history steps into the target, and
// gluing together steps sampled from other same-category tasks. The loss
// side is pure numerics: negative log-likelihood for generation, a hinge
// (triplet) loss over sigmoid-pooled correctness scores with analytic
// gradients, and the beta-weighted joint objective.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scriptkit/corpus.hpp"
#include "scriptkit/tcd.hpp"

namespace scriptkit {

enum class NegativeStrategy {
    ConceptReplacement,
    ParaphrasedInsertion,
    PseudoTargets,
};

const char* strategy_name(NegativeStrategy strategy);

struct NegativeSample {
    std::string text;  // candidate steps joined by "</s>"; "" when absent
    NegativeStrategy strategy = NegativeStrategy::ConceptReplacement;
    std::uint64_t seed = 0;

    bool empty() const { return text.empty(); }
};

std::string join_steps(const std::vector<std::string>& steps);

// Word-for-word substitution table used by the paraphraser. Swappable: the
// bundled table also ships as data/paraphrase_lexicon.tsv.
class ParaphraseLexicon {
public:
    static const ParaphraseLexicon& builtin();
    static ParaphraseLexicon load(const std::filesystem::path& path);

    const std::string* lookup(const std::string& lowercase_token) const;
    std::size_t size() const { return table_.size(); }

private:
    std::map<std::string, std::string> table_;
};

// Substitutes every token found in the lexicon, restoring the original
// token's leading capitalization. When nothing fires, prepends "Then " and
// lowercases the old initial token.
std::string paraphrase_step(const std::string& step,
                            const ParaphraseLexicon& lexicon);

struct ReplacementSpan {
    std::size_t position = 0;  // byte offset into the positive text
    std::size_t length = 0;    // replaced span length
    std::string replacement;
};

struct ConceptReplacementDetail {
    std::string positive;
    std::string text;
    std::vector<ReplacementSpan> spans;  // left to right, non-overlapping
};

// Every occurrence of the instance's own dictionary concepts inside the
// joined target text (longest match, left to right, case-insensitive
// substring) is replaced by a seeded uniform draw from the concepts of
// other same-category keys. Donors that are also the instance's own
// concepts are excluded so the output always differs from the positive.
// Replacement is verbatim; surrounding characters, including inflection
// tails the match left behind, stay byte-identical.
ConceptReplacementDetail concept_replacement_detail(
    const TaskInstance& instance, const Tcd& tcd, std::uint64_t seed);

NegativeSample neg_concept_replacement(const TaskInstance& instance,
                                       const Tcd& tcd, std::uint64_t seed);

// Paraphrases min(2, |history|) seeded history steps and inserts each at a
// seeded position among the target steps.
NegativeSample neg_paraphrased_insertion(const TaskInstance& instance,
                                         const ParaphraseLexicon& lexicon,
                                         std::uint64_t seed);

// Draws |target| steps uniformly with replacement from same-category
// instances, never from the instance's own article.
NegativeSample neg_pseudo_targets(
    const TaskInstance& instance,
    const std::vector<TaskInstance>& corpus_instances, std::uint64_t seed);

enum class NegativeScheme { A, B, C, D };

NegativeScheme scheme_from_name(const std::string& name);
const char* scheme_name(NegativeScheme scheme);

struct NegativeSamplerContext {
    const Tcd* tcd = nullptr;
    const std::vector<TaskInstance>* corpus_instances = nullptr;
    const ParaphraseLexicon* lexicon = nullptr;
};

// Always returns exactly two samples. Scheme A pairs concept replacement
// with paraphrased insertion and backfills an inapplicable slot with pseudo
// targets; schemes B/C/D draw from the strategy pairs (insertion, pseudo),
// (replacement, insertion), (replacement, pseudo) and leave inapplicable
// slots as empty-string samples, which the loss side skips.
std::vector<NegativeSample> compose_negatives(
    const TaskInstance& instance, const NegativeSamplerContext& context,
    NegativeScheme scheme, std::uint64_t seed);

// --- loss kernels ----------------------------------------------------------

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct ScoringHead {
    std::vector<double> w;
    double b = 0.0;
};

// Negative log-likelihood: -sum of the entries. Entries must be <= 0.
double generation_loss(const std::vector<double>& token_logprobs);

// sigma(mean over tokens of (w . h_t + b))
double sample_score(const Matrix& hidden, const ScoringHead& head);

// sum_k max(0, phi + c_k_neg - c_pos) straight from the scores.
double hinge_loss(double c_pos, const std::vector<double>& c_negs, double phi);

struct ContrastiveResult {
    double l_cl = 0.0;
    double c_pos = 0.0;
    std::vector<double> c_negs;
    std::vector<double> grad_w;
    double grad_b = 0.0;
    Matrix grad_h_pos;
    std::vector<Matrix> grad_h_negs;
};

// Hinge loss over pooled scores with analytic gradients w.r.t. the head and
// every hidden-state matrix. The subgradient at the hinge kink is 0.
// Empty-string negatives must be filtered out before this call.
ContrastiveResult contrastive_loss(const Matrix& h_pos,
                                   const std::vector<Matrix>& h_negs,
                                   const ScoringHead& head, double phi);

double joint_loss(double l_g, double l_cl, double beta);

struct LossBundle {
    double l_g = 0.0;
    double l_cl = 0.0;
    double l_total = 0.0;
    double beta = 0.0;
    std::vector<double> grad_w;
    double grad_b = 0.0;
    Matrix grad_h_pos;
    std::vector<Matrix> grad_h_negs;
};

// Binary batch format for cross-implementation kernel checks ("SKL1"):
// all fields little-endian, doubles IEEE-754 binary64.
//
//   char[4]  magic "SKL1"
//   u32      d, t_pos, n_neg, n_logprobs
//   f64      phi, beta
//   f64      b
//   f64[d]   w
//   f64[t_pos*d]            h_pos (row-major)
//   n_neg times: u32 t_k, f64[t_k*d] h_k   (t_k == 0 marks an absent sample)
//   f64[n_logprobs]         token log-probabilities
struct LossBatch {
    double phi = 0.5;
    double beta = 0.3;
    ScoringHead head;
    Matrix h_pos;
    std::vector<Matrix> h_negs;  // absent samples excluded, see absent_count
    std::size_t absent_count = 0;
    std::vector<double> token_logprobs;
};

void save_loss_batch(const LossBatch& batch, const std::filesystem::path& path);
LossBatch load_loss_batch(const std::filesystem::path& path);
LossBundle compute_loss_bundle(const LossBatch& batch);

}  // namespace scriptkit
