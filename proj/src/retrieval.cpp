#include "scriptkit/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "scriptkit/error.hpp"
#include "scriptkit/rng.hpp"
#include "scriptkit/text.hpp"

namespace scriptkit {

namespace {

std::vector<std::string> text_features(const std::string& text) {
    std::vector<std::string> tokens = alnum_tokens(text);
    std::vector<std::string> features = tokens;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        features.push_back(tokens[i] + " " + tokens[i + 1]);
    }
    return features;
}

std::uint32_t feature_index(const std::string& feature, std::uint32_t dimension) {
    return static_cast<std::uint32_t>(fnv1a64(feature) % dimension);
}

}  // namespace

double EmbeddingVector::dot(const EmbeddingVector& other) const {
    double sum = 0.0;
    auto a = entries.begin();
    auto b = other.entries.begin();
    while (a != entries.end() && b != other.entries.end()) {
        if (a->first < b->first) {
            ++a;
        } else if (b->first < a->first) {
            ++b;
        } else {
            sum += a->second * b->second;
            ++a;
            ++b;
        }
    }
    return sum;
}

double EmbeddingVector::norm() const {
    double sum = 0.0;
    for (const auto& [index, value] : entries) sum += value * value;
    return std::sqrt(sum);
}

HashedTfidfEncoder::HashedTfidfEncoder(std::uint32_t dimension)
    : dimension_(dimension) {}

HashedTfidfEncoder::HashedTfidfEncoder(const Tcd& tcd, std::uint32_t dimension)
    : dimension_(dimension), document_count_(tcd.entries.size()) {
    std::map<std::uint32_t, std::uint32_t> df;
    for (const auto& [canonical, entry] : tcd.entries) {
        std::vector<std::string> features = text_features(canonical);
        std::sort(features.begin(), features.end());
        features.erase(std::unique(features.begin(), features.end()),
                       features.end());
        for (const std::string& feature : features) {
            ++df[feature_index(feature, dimension_)];
        }
    }
    df_.assign(df.begin(), df.end());
}

double HashedTfidfEncoder::idf(std::uint32_t index) const {
    if (document_count_ == 0) return 1.0;
    auto it = std::lower_bound(
        df_.begin(), df_.end(), index,
        [](const auto& pair, std::uint32_t idx) { return pair.first < idx; });
    const std::uint32_t df =
        (it != df_.end() && it->first == index) ? it->second : 1;
    return std::log(1.0 + static_cast<double>(document_count_) /
                              static_cast<double>(df));
}

EmbeddingVector HashedTfidfEncoder::encode(const std::string& text) const {
    std::map<std::uint32_t, double> weights;
    for (const std::string& feature : text_features(text)) {
        weights[feature_index(feature, dimension_)] += 1.0;
    }
    EmbeddingVector vector;
    vector.dimension = dimension_;
    vector.entries.reserve(weights.size());
    double norm_sq = 0.0;
    for (const auto& [index, tf] : weights) {
        const double w = tf * idf(index);
        vector.entries.emplace_back(index, w);
        norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [index, value] : vector.entries) value *= inv;
    }
    return vector;
}

RetrievalIndex::RetrievalIndex(const Tcd& tcd,
                               std::shared_ptr<const Encoder> encoder)
    : encoder_(std::move(encoder)) {
    keys_.reserve(tcd.entries.size());
    vectors_.reserve(tcd.entries.size());
    for (const auto& [canonical, entry] : tcd.entries) {
        keys_.push_back(canonical);
        vectors_.push_back(encoder_->encode(canonical));
    }
}

std::vector<RetrievalHit> RetrievalIndex::top_k(const std::string& query_key,
                                                std::size_t k,
                                                bool exclude_self) const {
    if (k == 0) throw Error("k must be at least 1");
    const std::string self = normalize_whitespace(to_lower(query_key));
    const EmbeddingVector query = encoder_->encode(self);

    std::vector<RetrievalHit> hits;
    hits.reserve(keys_.size());
    for (std::size_t i = 0; i < keys_.size(); ++i) {
        if (exclude_self && keys_[i] == self) continue;
        double score = query.dot(vectors_[i]);
        hits.push_back({keys_[i], std::clamp(score, 0.0, 1.0)});
    }
    if (hits.empty()) throw Error("retrieval candidate pool is empty");

    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.key < b.key;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

CraResult aggregate_cra(const Tcd& tcd, const std::vector<RetrievalHit>& hits,
                        std::size_t k) {
    if (hits.empty()) throw Error("aggregate_cra needs at least one hit");
    const std::size_t used = std::min(k, hits.size());

    std::vector<const ConceptSet*> sets;
    std::map<std::string, std::size_t> occurrence;
    for (std::size_t i = 0; i < used; ++i) {
        const TcdEntry* entry = tcd.find(hits[i].key);
        if (!entry) throw Error("hit key \"" + hits[i].key + "\" not in dictionary");
        sets.push_back(&entry->concepts);
        for (const std::string& c : entry->concepts) ++occurrence[c];
    }

    CraResult result;
    std::vector<std::string> selected;
    for (const auto& [c, count] : occurrence) {
        if (count == used) selected.push_back(c);
    }
    if (selected.empty() && used > 1) {
        result.fallback_used = true;
        selected.assign(sets.front()->begin(), sets.front()->end());
    }

    std::sort(selected.begin(), selected.end(),
              [&](const std::string& a, const std::string& b) {
                  const std::size_t ca = occurrence.at(a);
                  const std::size_t cb = occurrence.at(b);
                  if (ca != cb) return ca > cb;
                  return a < b;
              });
    result.concepts = std::move(selected);
    return result;
}

std::vector<std::string> gold_concepts(const Tcd& tcd,
                                       const TaskInstance& instance,
                                       double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0) {
        throw Error("fraction must lie in [0, 1]");
    }
    const std::string key = instance.key();
    const TcdEntry* entry = tcd.find(key);
    if (!entry) throw Error("instance key \"" + key + "\" not in dictionary");

    std::vector<std::string> pool(entry->concepts.begin(),
                                  entry->concepts.end());
    Xoshiro256 stream = derive_stream(seed, key);
    stream.shuffle(pool);

    const std::size_t take = std::min(
        pool.size(), static_cast<std::size_t>(
                         std::ceil(fraction * static_cast<double>(pool.size()))));
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace scriptkit
