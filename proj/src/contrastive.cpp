#include "scriptkit/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "scriptkit/error.hpp"
#include "scriptkit/rng.hpp"
#include "scriptkit/text.hpp"

namespace scriptkit {

namespace {

constexpr const char* kStepSep = "</s>";

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_alnum_char(char c) {
    return (c >= '0' && c <= '9') || is_upper(c) || (c >= 'a' && c <= 'z');
}

// Default paraphrase table; data/paraphrase_lexicon.tsv carries the same
// pairs for callers who want to swap it out.
const std::map<std::string, std::string>& builtin_pairs() {
    static const std::map<std::string, std::string> pairs = {
        {"add", "pour in"},       {"allow", "let"},
        {"apply", "spread"},      {"attach", "fasten"},
        {"bake", "cook"},         {"begin", "start"},
        {"check", "inspect"},     {"choose", "pick"},
        {"clean", "scrub"},       {"close", "shut"},
        {"combine", "mix"},       {"cool", "chill"},
        {"cut", "slice"},         {"drain", "strain"},
        {"dry", "wipe"},          {"ensure", "make sure"},
        {"fill", "load"},         {"find", "locate"},
        {"finish", "complete"},   {"fix", "repair"},
        {"flip", "turn over"},    {"gather", "collect"},
        {"grab", "take"},         {"heat", "warm"},
        {"insert", "slot in"},    {"inspect", "examine"},
        {"keep", "hold"},         {"lift", "raise"},
        {"mix", "stir"},          {"open", "unseal"},
        {"place", "set"},         {"pour", "tip"},
        {"prepare", "ready"},     {"press", "push"},
        {"put", "place"},         {"remove", "take out"},
        {"repeat", "redo"},       {"replace", "swap"},
        {"rinse", "wash"},        {"rub", "massage"},
        {"seal", "close"},        {"select", "pick"},
        {"shake", "agitate"},     {"slice", "cut"},
        {"spread", "smear"},      {"start", "begin"},
        {"store", "keep"},        {"tighten", "secure"},
        {"turn", "rotate"},       {"wait", "pause"},
        {"wash", "rinse"},        {"wipe", "rub"},
    };
    return pairs;
}

struct TokenRef {
    std::size_t begin = 0;
    std::size_t length = 0;
};

std::vector<TokenRef> token_spans(const std::string& text) {
    std::vector<TokenRef> spans;
    std::size_t i = 0;
    while (i < text.size()) {
        if (is_alnum_char(text[i])) {
            std::size_t begin = i;
            while (i < text.size() && is_alnum_char(text[i])) ++i;
            spans.push_back({begin, i - begin});
        } else {
            ++i;
        }
    }
    return spans;
}

}  // namespace

const char* strategy_name(NegativeStrategy strategy) {
    switch (strategy) {
        case NegativeStrategy::ConceptReplacement: return "concept_replacement";
        case NegativeStrategy::ParaphrasedInsertion: return "paraphrased_insertion";
        case NegativeStrategy::PseudoTargets: return "pseudo_targets";
    }
    return "concept_replacement";
}

NegativeScheme scheme_from_name(const std::string& name) {
    if (name == "A") return NegativeScheme::A;
    if (name == "B") return NegativeScheme::B;
    if (name == "C") return NegativeScheme::C;
    if (name == "D") return NegativeScheme::D;
    throw Error("unknown negative-sampling scheme \"" + name + "\"");
}

const char* scheme_name(NegativeScheme scheme) {
    switch (scheme) {
        case NegativeScheme::A: return "A";
        case NegativeScheme::B: return "B";
        case NegativeScheme::C: return "C";
        case NegativeScheme::D: return "D";
    }
    return "A";
}

std::string join_steps(const std::vector<std::string>& steps) {
    std::string joined;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i > 0) joined += kStepSep;
        joined += steps[i];
    }
    return joined;
}

const ParaphraseLexicon& ParaphraseLexicon::builtin() {
    static const ParaphraseLexicon lexicon = [] {
        ParaphraseLexicon l;
        l.table_ = builtin_pairs();
        return l;
    }();
    return lexicon;
}

ParaphraseLexicon ParaphraseLexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open lexicon " + path.string());
    ParaphraseLexicon lexicon;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
            throw SchemaError("lexicon line must be \"word<TAB>replacement\"",
                              line_no);
        }
        lexicon.table_[to_lower(line.substr(0, tab))] = line.substr(tab + 1);
    }
    return lexicon;
}

const std::string* ParaphraseLexicon::lookup(
    const std::string& lowercase_token) const {
    auto it = table_.find(lowercase_token);
    return it == table_.end() ? nullptr : &it->second;
}

std::string paraphrase_step(const std::string& step,
                            const ParaphraseLexicon& lexicon) {
    const std::vector<TokenRef> tokens = token_spans(step);
    std::string out;
    std::size_t cursor = 0;
    bool fired = false;
    for (const TokenRef& token : tokens) {
        out.append(step, cursor, token.begin - cursor);
        const std::string raw = step.substr(token.begin, token.length);
        if (const std::string* sub = lexicon.lookup(to_lower(raw))) {
            std::string replacement = *sub;
            if (is_upper(raw.front()) && !replacement.empty() &&
                replacement.front() >= 'a' && replacement.front() <= 'z') {
                replacement.front() =
                    static_cast<char>(replacement.front() - 'a' + 'A');
            }
            out += replacement;
            fired = true;
        } else {
            out += raw;
        }
        cursor = token.begin + token.length;
    }
    out.append(step, cursor, step.size() - cursor);

    if (!fired) {
        std::string lowered = step;
        if (!tokens.empty()) {
            for (std::size_t i = tokens[0].begin;
                 i < tokens[0].begin + tokens[0].length; ++i) {
                if (is_upper(lowered[i])) {
                    lowered[i] = static_cast<char>(lowered[i] - 'A' + 'a');
                }
            }
        }
        return "Then " + lowered;
    }
    return out;
}

ConceptReplacementDetail concept_replacement_detail(
    const TaskInstance& instance, const Tcd& tcd, std::uint64_t seed) {
    const std::string key = instance.key();
    const TcdEntry* entry = tcd.find(key);
    if (!entry) throw Error("instance key \"" + key + "\" not in dictionary");

    // Donor pool: concepts of other same-category keys, minus the
    // instance's own concepts so every replacement changes the text.
    std::set<std::string> donor_set;
    auto category = tcd.category_index.find(instance.category);
    if (category != tcd.category_index.end()) {
        for (const std::string& other : category->second) {
            if (other == key) continue;
            for (const std::string& c : tcd.entries.at(other).concepts) {
                if (!entry->concepts.count(c)) donor_set.insert(c);
            }
        }
    }
    if (donor_set.empty()) {
        throw InapplicableError("no donor concepts in category \"" +
                                instance.category + "\"");
    }
    const std::vector<std::string> donors(donor_set.begin(), donor_set.end());

    ConceptReplacementDetail detail;
    detail.positive = join_steps(instance.target);
    const std::string haystack = to_lower(detail.positive);

    // Longest concept first so "airtight container" wins over "container"
    // at the same start position.
    std::vector<std::string> needles(entry->concepts.begin(),
                                     entry->concepts.end());
    std::sort(needles.begin(), needles.end(),
              [](const std::string& a, const std::string& b) {
                  if (a.size() != b.size()) return a.size() > b.size();
                  return a < b;
              });

    Xoshiro256 stream = derive_stream(seed, key, 1);
    std::size_t pos = 0;
    while (pos < haystack.size()) {
        const std::string* matched = nullptr;
        for (const std::string& needle : needles) {
            if (needle.empty() || needle.size() > haystack.size() - pos) continue;
            if (haystack.compare(pos, needle.size(), needle) == 0) {
                matched = &needle;
                break;
            }
        }
        if (matched) {
            ReplacementSpan span;
            span.position = pos;
            span.length = matched->size();
            span.replacement = donors[stream.below(donors.size())];
            detail.spans.push_back(std::move(span));
            pos += matched->size();
        } else {
            ++pos;
        }
    }
    if (detail.spans.empty()) {
        throw InapplicableError("no concept occurrences in target steps");
    }

    std::size_t cursor = 0;
    for (const ReplacementSpan& span : detail.spans) {
        detail.text.append(detail.positive, cursor, span.position - cursor);
        detail.text += span.replacement;
        cursor = span.position + span.length;
    }
    detail.text.append(detail.positive, cursor,
                       detail.positive.size() - cursor);
    return detail;
}

NegativeSample neg_concept_replacement(const TaskInstance& instance,
                                       const Tcd& tcd, std::uint64_t seed) {
    NegativeSample sample;
    sample.strategy = NegativeStrategy::ConceptReplacement;
    sample.seed = seed;
    sample.text = concept_replacement_detail(instance, tcd, seed).text;
    return sample;
}

NegativeSample neg_paraphrased_insertion(const TaskInstance& instance,
                                         const ParaphraseLexicon& lexicon,
                                         std::uint64_t seed) {
    if (instance.history.empty()) {
        throw InapplicableError("instance has no history to paraphrase");
    }
    Xoshiro256 stream = derive_stream(seed, instance.key(), 2);

    std::vector<std::size_t> indices(instance.history.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    stream.shuffle(indices);
    const std::size_t m = std::min<std::size_t>(2, instance.history.size());

    std::vector<std::string> steps = instance.target;
    for (std::size_t i = 0; i < m; ++i) {
        std::string paraphrased =
            paraphrase_step(instance.history[indices[i]], lexicon);
        const std::size_t at = stream.below(steps.size() + 1);
        steps.insert(steps.begin() + at, std::move(paraphrased));
    }

    NegativeSample sample;
    sample.strategy = NegativeStrategy::ParaphrasedInsertion;
    sample.seed = seed;
    sample.text = join_steps(steps);
    return sample;
}

NegativeSample neg_pseudo_targets(
    const TaskInstance& instance,
    const std::vector<TaskInstance>& corpus_instances, std::uint64_t seed) {
    std::vector<const std::string*> pool;
    for (const TaskInstance& donor : corpus_instances) {
        if (donor.category != instance.category) continue;
        if (donor.article_id == instance.article_id) continue;
        for (const std::string& s : donor.history) pool.push_back(&s);
        for (const std::string& s : donor.target) pool.push_back(&s);
    }
    if (pool.empty()) {
        throw InapplicableError("no same-category donor steps outside article \"" +
                                instance.article_id + "\"");
    }

    const std::string positive = join_steps(instance.target);
    Xoshiro256 stream = derive_stream(seed, instance.key(), 3);

    NegativeSample sample;
    sample.strategy = NegativeStrategy::PseudoTargets;
    sample.seed = seed;
    for (int attempt = 0; attempt < 16; ++attempt) {
        std::vector<std::string> steps;
        steps.reserve(instance.target.size());
        for (std::size_t i = 0; i < instance.target.size(); ++i) {
            steps.push_back(*pool[stream.below(pool.size())]);
        }
        sample.text = join_steps(steps);
        if (sample.text != positive) return sample;
    }
    throw InapplicableError("donor pool cannot produce a differing sequence");
}

std::vector<NegativeSample> compose_negatives(
    const TaskInstance& instance, const NegativeSamplerContext& context,
    NegativeScheme scheme, std::uint64_t seed) {
    std::uint64_t sm = seed;
    std::uint64_t sub[4];
    for (std::uint64_t& s : sub) s = splitmix64(sm);

    auto attempt = [&](NegativeStrategy strategy,
                       std::uint64_t sub_seed) -> std::optional<NegativeSample> {
        try {
            switch (strategy) {
                case NegativeStrategy::ConceptReplacement:
                    return neg_concept_replacement(instance, *context.tcd,
                                                   sub_seed);
                case NegativeStrategy::ParaphrasedInsertion:
                    return neg_paraphrased_insertion(instance, *context.lexicon,
                                                     sub_seed);
                case NegativeStrategy::PseudoTargets:
                    return neg_pseudo_targets(
                        instance, *context.corpus_instances, sub_seed);
            }
        } catch (const InapplicableError&) {
        }
        return std::nullopt;
    };

    auto empty_sample = [](NegativeStrategy strategy, std::uint64_t sub_seed) {
        NegativeSample sample;
        sample.strategy = strategy;
        sample.seed = sub_seed;
        return sample;
    };

    std::vector<NegativeSample> negatives;
    if (scheme == NegativeScheme::A) {
        auto first = attempt(NegativeStrategy::ConceptReplacement, sub[0]);
        if (!first) first = attempt(NegativeStrategy::PseudoTargets, sub[1]);
        negatives.push_back(first ? *first
                                  : empty_sample(NegativeStrategy::PseudoTargets,
                                                 sub[1]));
        auto second = attempt(NegativeStrategy::ParaphrasedInsertion, sub[2]);
        if (!second) second = attempt(NegativeStrategy::PseudoTargets, sub[3]);
        negatives.push_back(second ? *second
                                   : empty_sample(NegativeStrategy::PseudoTargets,
                                                  sub[3]));
        return negatives;
    }

    NegativeStrategy pair[2];
    switch (scheme) {
        case NegativeScheme::B:
            pair[0] = NegativeStrategy::ParaphrasedInsertion;
            pair[1] = NegativeStrategy::PseudoTargets;
            break;
        case NegativeScheme::C:
            pair[0] = NegativeStrategy::ConceptReplacement;
            pair[1] = NegativeStrategy::ParaphrasedInsertion;
            break;
        default:
            pair[0] = NegativeStrategy::ConceptReplacement;
            pair[1] = NegativeStrategy::PseudoTargets;
            break;
    }
    for (int i = 0; i < 2; ++i) {
        auto sample = attempt(pair[i], sub[i]);
        negatives.push_back(sample ? *sample : empty_sample(pair[i], sub[i]));
    }
    return negatives;
}

// --- loss kernels ----------------------------------------------------------

double generation_loss(const std::vector<double>& token_logprobs) {
    double total = 0.0;
    for (double lp : token_logprobs) {
        if (lp > 0.0) {
            throw Error("log-probabilities must be <= 0, got " +
                        std::to_string(lp));
        }
        total += lp;
    }
    return -total;
}

double sample_score(const Matrix& hidden, const ScoringHead& head) {
    if (hidden.rows == 0) throw Error("hidden-state matrix has no tokens");
    if (hidden.cols != head.w.size()) {
        throw Error("hidden dimension mismatch: matrix has " +
                    std::to_string(hidden.cols) + " columns, head has " +
                    std::to_string(head.w.size()));
    }
    double pooled = 0.0;
    for (std::size_t t = 0; t < hidden.rows; ++t) {
        double z = head.b;
        for (std::size_t j = 0; j < hidden.cols; ++j) {
            z += head.w[j] * hidden.at(t, j);
        }
        pooled += z;
    }
    pooled /= static_cast<double>(hidden.rows);
    return 1.0 / (1.0 + std::exp(-pooled));
}

double hinge_loss(double c_pos, const std::vector<double>& c_negs, double phi) {
    double total = 0.0;
    for (double c_neg : c_negs) {
        total += std::max(0.0, phi + c_neg - c_pos);
    }
    return total;
}

ContrastiveResult contrastive_loss(const Matrix& h_pos,
                                   const std::vector<Matrix>& h_negs,
                                   const ScoringHead& head, double phi) {
    const std::size_t d = head.w.size();
    if (h_pos.cols != d) throw Error("positive matrix dimension mismatch");
    for (const Matrix& h : h_negs) {
        if (h.cols != d) throw Error("negative matrix dimension mismatch");
        if (h.rows == 0) throw Error("empty negatives must be filtered out");
    }

    ContrastiveResult result;
    result.c_pos = sample_score(h_pos, head);
    result.c_negs.reserve(h_negs.size());
    for (const Matrix& h : h_negs) result.c_negs.push_back(sample_score(h, head));
    result.l_cl = hinge_loss(result.c_pos, result.c_negs, phi);

    result.grad_w.assign(d, 0.0);
    result.grad_h_pos = Matrix(h_pos.rows, d);
    result.grad_h_negs.reserve(h_negs.size());

    auto mean_rows = [d](const Matrix& h) {
        std::vector<double> mean(d, 0.0);
        for (std::size_t t = 0; t < h.rows; ++t) {
            for (std::size_t j = 0; j < d; ++j) mean[j] += h.at(t, j);
        }
        for (double& v : mean) v /= static_cast<double>(h.rows);
        return mean;
    };

    // d c / d a for the sigmoid-pooled score, a = mean(w . h_t + b).
    const double dcpos = result.c_pos * (1.0 - result.c_pos);
    const std::vector<double> mean_pos = mean_rows(h_pos);

    std::size_t active = 0;
    for (std::size_t k = 0; k < h_negs.size(); ++k) {
        const bool hinge_active = phi + result.c_negs[k] - result.c_pos > 0.0;
        Matrix grad(h_negs[k].rows, d);
        if (hinge_active) {
            ++active;
            const double dcneg = result.c_negs[k] * (1.0 - result.c_negs[k]);
            const std::vector<double> mean_neg = mean_rows(h_negs[k]);
            for (std::size_t j = 0; j < d; ++j) {
                result.grad_w[j] += dcneg * mean_neg[j];
            }
            result.grad_b += dcneg;
            const double scale = dcneg / static_cast<double>(h_negs[k].rows);
            for (std::size_t t = 0; t < grad.rows; ++t) {
                for (std::size_t j = 0; j < d; ++j) {
                    grad.at(t, j) = scale * head.w[j];
                }
            }
        }
        result.grad_h_negs.push_back(std::move(grad));
    }

    if (active > 0) {
        const double weight = -static_cast<double>(active) * dcpos;
        for (std::size_t j = 0; j < d; ++j) {
            result.grad_w[j] += weight * mean_pos[j];
        }
        result.grad_b += weight;
        const double scale = weight / static_cast<double>(h_pos.rows);
        for (std::size_t t = 0; t < h_pos.rows; ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                result.grad_h_pos.at(t, j) = scale * head.w[j];
            }
        }
    }
    return result;
}

double joint_loss(double l_g, double l_cl, double beta) {
    return l_g + beta * l_cl;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, 4);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    out.write(buf, 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw SchemaError("truncated loss batch file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw SchemaError("truncated loss batch file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

constexpr char kMagic[4] = {'S', 'K', 'L', '1'};

}  // namespace

void save_loss_batch(const LossBatch& batch, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kMagic, 4);
    const std::uint32_t d = static_cast<std::uint32_t>(batch.head.w.size());
    put_u32(out, d);
    put_u32(out, static_cast<std::uint32_t>(batch.h_pos.rows));
    put_u32(out, static_cast<std::uint32_t>(batch.h_negs.size() +
                                            batch.absent_count));
    put_u32(out, static_cast<std::uint32_t>(batch.token_logprobs.size()));
    put_f64(out, batch.phi);
    put_f64(out, batch.beta);
    put_f64(out, batch.head.b);
    for (double v : batch.head.w) put_f64(out, v);
    for (double v : batch.h_pos.data) put_f64(out, v);
    for (const Matrix& h : batch.h_negs) {
        put_u32(out, static_cast<std::uint32_t>(h.rows));
        for (double v : h.data) put_f64(out, v);
    }
    for (std::size_t i = 0; i < batch.absent_count; ++i) put_u32(out, 0);
    for (double v : batch.token_logprobs) put_f64(out, v);
}

LossBatch load_loss_batch(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw SchemaError("not a loss batch file (bad magic)");
    }
    LossBatch batch;
    const std::uint32_t d = get_u32(in);
    const std::uint32_t t_pos = get_u32(in);
    const std::uint32_t n_neg = get_u32(in);
    const std::uint32_t n_logprobs = get_u32(in);
    batch.phi = get_f64(in);
    batch.beta = get_f64(in);
    batch.head.b = get_f64(in);
    batch.head.w.resize(d);
    for (double& v : batch.head.w) v = get_f64(in);
    if (t_pos == 0) throw SchemaError("positive sample must have tokens");
    batch.h_pos = Matrix(t_pos, d);
    for (double& v : batch.h_pos.data) v = get_f64(in);
    for (std::uint32_t k = 0; k < n_neg; ++k) {
        const std::uint32_t t_k = get_u32(in);
        if (t_k == 0) {
            ++batch.absent_count;
            continue;
        }
        Matrix h(t_k, d);
        for (double& v : h.data) v = get_f64(in);
        batch.h_negs.push_back(std::move(h));
    }
    batch.token_logprobs.resize(n_logprobs);
    for (double& v : batch.token_logprobs) v = get_f64(in);
    return batch;
}

LossBundle compute_loss_bundle(const LossBatch& batch) {
    LossBundle bundle;
    bundle.beta = batch.beta;
    bundle.l_g = generation_loss(batch.token_logprobs);
    ContrastiveResult cl =
        contrastive_loss(batch.h_pos, batch.h_negs, batch.head, batch.phi);
    bundle.l_cl = cl.l_cl;
    bundle.l_total = joint_loss(bundle.l_g, bundle.l_cl, batch.beta);
    bundle.grad_w = std::move(cl.grad_w);
    bundle.grad_b = cl.grad_b;
    bundle.grad_h_pos = std::move(cl.grad_h_pos);
    bundle.grad_h_negs = std::move(cl.grad_h_negs);
    return bundle;
}

}  // namespace scriptkit
