#include "scriptkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "scriptkit/error.hpp"
#include "scriptkit/jsonl.hpp"
#include "scriptkit/text.hpp"

namespace scriptkit {

namespace {

std::vector<std::string> metric_tokens(const std::string& text) {
    return whitespace_tokens(to_lower(text));
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + i,
                                          tokens.begin() + i + n)];
    }
    return counts;
}

std::size_t clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
    std::size_t overlap = 0;
    for (const auto& [gram, count] : hyp) {
        auto it = ref.find(gram);
        if (it != ref.end()) overlap += std::min(count, it->second);
    }
    return overlap;
}

}  // namespace

BleuMode bleu_mode_from_name(const std::string& name) {
    if (name == "cumulative") return BleuMode::Cumulative;
    if (name == "individual") return BleuMode::Individual;
    throw Error("unknown BLEU mode \"" + name + "\" (cumulative|individual)");
}

const char* bleu_mode_name(BleuMode mode) {
    return mode == BleuMode::Cumulative ? "cumulative" : "individual";
}

double bleu_k(const std::vector<EvalPair>& pairs, int k, BleuMode mode) {
    if (pairs.empty()) throw Error("bleu_k needs at least one pair");
    if (k < 1 || k > 4) throw Error("BLEU order must be in 1..4");

    std::vector<std::size_t> matched(k, 0), total(k, 0);
    std::size_t hyp_len = 0, ref_len = 0;
    for (const EvalPair& pair : pairs) {
        const std::vector<std::string> hyp = metric_tokens(pair.hypothesis);
        const std::vector<std::string> ref = metric_tokens(pair.reference);
        hyp_len += hyp.size();
        ref_len += ref.size();
        for (int n = 1; n <= k; ++n) {
            const NgramCounts hyp_counts = count_ngrams(hyp, n);
            matched[n - 1] += clipped_overlap(hyp_counts, count_ngrams(ref, n));
            for (const auto& [gram, count] : hyp_counts) total[n - 1] += count;
        }
    }
    if (hyp_len == 0) return 0.0;

    const double bp =
        hyp_len >= ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) /
                                 static_cast<double>(hyp_len));

    if (mode == BleuMode::Individual) {
        if (total[k - 1] == 0 || matched[k - 1] == 0) return 0.0;
        const double p = static_cast<double>(matched[k - 1]) /
                         static_cast<double>(total[k - 1]);
        return bp * p * 100.0;
    }

    double log_precision = 0.0;
    for (int n = 1; n <= k; ++n) {
        if (total[n - 1] == 0 || matched[n - 1] == 0) return 0.0;
        log_precision += std::log(static_cast<double>(matched[n - 1]) /
                                  static_cast<double>(total[n - 1]));
    }
    return bp * std::exp(log_precision / k) * 100.0;
}

double rouge2_f(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw Error("rouge2_f needs at least one pair");
    double total = 0.0;
    for (const EvalPair& pair : pairs) {
        const std::vector<std::string> hyp = metric_tokens(pair.hypothesis);
        const std::vector<std::string> ref = metric_tokens(pair.reference);
        if (ref.size() < 2 || hyp.size() < 2) continue;  // contributes 0
        const NgramCounts hyp_bigrams = count_ngrams(hyp, 2);
        const NgramCounts ref_bigrams = count_ngrams(ref, 2);
        const std::size_t overlap = clipped_overlap(hyp_bigrams, ref_bigrams);
        if (overlap == 0) continue;
        const double p = static_cast<double>(overlap) /
                         static_cast<double>(hyp.size() - 1);
        const double r = static_cast<double>(overlap) /
                         static_cast<double>(ref.size() - 1);
        total += 2.0 * p * r / (p + r);
    }
    return total / static_cast<double>(pairs.size()) * 100.0;
}

double meteor(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw Error("meteor needs at least one pair");
    double total = 0.0;
    for (const EvalPair& pair : pairs) {
        const std::vector<std::string> hyp = metric_tokens(pair.hypothesis);
        const std::vector<std::string> ref = metric_tokens(pair.reference);
        if (hyp.empty() || ref.empty()) continue;

        // Greedy left-to-right exact alignment, each ref token used once.
        std::vector<bool> used(ref.size(), false);
        std::vector<std::pair<std::size_t, std::size_t>> alignment;
        for (std::size_t i = 0; i < hyp.size(); ++i) {
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (!used[j] && hyp[i] == ref[j]) {
                    used[j] = true;
                    alignment.emplace_back(i, j);
                    break;
                }
            }
        }
        if (alignment.empty()) continue;

        const double m = static_cast<double>(alignment.size());
        const double p = m / static_cast<double>(hyp.size());
        const double r = m / static_cast<double>(ref.size());
        const double f = 10.0 * p * r / (r + 9.0 * p);

        std::size_t chunks = 1;
        for (std::size_t i = 1; i < alignment.size(); ++i) {
            if (alignment[i].first != alignment[i - 1].first + 1 ||
                alignment[i].second != alignment[i - 1].second + 1) {
                ++chunks;
            }
        }
        const double penalty =
            0.5 * std::pow(static_cast<double>(chunks) / m, 3.0);
        total += f * (1.0 - penalty);
    }
    return total / static_cast<double>(pairs.size()) * 100.0;
}

Diagnostics script_diagnostics(
    const std::vector<TaskInstance>& instances,
    const std::vector<std::vector<std::string>>& hypothesis_steps,
    const Tcd& tcd,
    const std::vector<std::vector<std::string>>& prompt_concepts,
    double repetition_threshold) {
    if (instances.size() != hypothesis_steps.size() ||
        instances.size() != prompt_concepts.size()) {
        throw Error("diagnostics inputs must be aligned lists");
    }

    std::size_t steps_total = 0, steps_repeated = 0;
    std::size_t concepts_total = 0, concepts_hallucinated = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const TaskInstance& instance = instances[i];
        for (const std::string& step : hypothesis_steps[i]) {
            ++steps_total;
            for (const std::string& past : instance.history) {
                if (unigram_jaccard(step, past) >= repetition_threshold) {
                    ++steps_repeated;
                    break;
                }
            }
        }

        const TcdEntry* entry = tcd.find(instance.key());
        const std::set<std::string> prompt_set(prompt_concepts[i].begin(),
                                               prompt_concepts[i].end());
        ConceptSet produced;
        for (const std::string& step : hypothesis_steps[i]) {
            ConceptSet step_concepts = extract_concepts(step);
            produced.insert(step_concepts.begin(), step_concepts.end());
        }
        for (const std::string& c : produced) {
            ++concepts_total;
            const bool known = (entry && entry->concepts.count(c)) ||
                               prompt_set.count(c);
            if (!known) ++concepts_hallucinated;
        }
    }

    Diagnostics diagnostics;
    if (steps_total > 0) {
        diagnostics.repetition_rate = static_cast<double>(steps_repeated) /
                                      static_cast<double>(steps_total);
    }
    if (concepts_total > 0) {
        diagnostics.hallucination_rate =
            static_cast<double>(concepts_hallucinated) /
            static_cast<double>(concepts_total);
    }
    return diagnostics;
}

EvalReport evaluate_pairs(const std::vector<EvalPair>& pairs, BleuMode mode) {
    EvalReport report;
    report.n_pairs = pairs.size();
    report.bleu_mode = mode;
    report.bleu1 = bleu_k(pairs, 1, mode);
    report.bleu2 = bleu_k(pairs, 2, mode);
    report.bleu3 = bleu_k(pairs, 3, mode);
    report.bleu4 = bleu_k(pairs, 4, mode);
    report.rouge2 = rouge2_f(pairs);
    report.meteor_score = meteor(pairs);
    return report;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
    Json object;
    object["n_pairs"] = report.n_pairs;
    object["bleu1"] = report.bleu1;
    object["bleu2"] = report.bleu2;
    object["bleu3"] = report.bleu3;
    object["bleu4"] = report.bleu4;
    object["rouge2_f"] = report.rouge2;
    object["meteor"] = report.meteor_score;
    if (report.diagnostics) {
        object["repetition_rate"] = report.diagnostics->repetition_rate;
        object["hallucination_rate"] = report.diagnostics->hallucination_rate;
    } else {
        object["repetition_rate"] = nullptr;
        object["hallucination_rate"] = nullptr;
    }
    object["external"] = report.external;
    Json config;
    config["bleu_mode"] = bleu_mode_name(report.bleu_mode);
    config["repetition_threshold"] = report.repetition_threshold;
    object["config"] = config;
    write_json_file(path, object);
}

}  // namespace scriptkit
