// Dense retrieval over task keys plus concept-set aggregation.
//
// Keys are embedded with a pluggable Encoder; the default is a hashed
// tf-idf bag of word unigrams and bigrams, which keeps the index free of
// model weights and makes every ranking reproducible. Search is an exact
// exhaustive cosine scan -- at dictionary scales up to ~10^6 keys this runs
// in milliseconds and keeps the ranking contract testable.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scriptkit/corpus.hpp"
#include "scriptkit/tcd.hpp"

namespace scriptkit {

// Sparse view of a fixed-dimension non-negative vector, unit L2 norm unless
// the source text had no features at all.
struct EmbeddingVector {
    std::uint32_t dimension = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;  // sorted by index

    double dot(const EmbeddingVector& other) const;
    double norm() const;
};

class Encoder {
public:
    virtual ~Encoder() = default;
    virtual EmbeddingVector encode(const std::string& text) const = 0;
    virtual std::string name() const = 0;
};

// Hashed bag of unigrams+bigrams: features hash with 64-bit FNV-1a modulo
// the dimension, weights are tf * idf with smooth idf = ln(1 + N/df) from
// the dictionary's key collection (df floors at 1 for unseen features; with
// no reference collection idf is uniformly 1), then L2-normalized.
class HashedTfidfEncoder : public Encoder {
public:
    static constexpr std::uint32_t kDefaultDimension = 65536;

    explicit HashedTfidfEncoder(std::uint32_t dimension = kDefaultDimension);
    HashedTfidfEncoder(const Tcd& tcd,
                       std::uint32_t dimension = kDefaultDimension);

    EmbeddingVector encode(const std::string& text) const override;
    std::string name() const override { return "hashed-tfidf"; }

private:
    double idf(std::uint32_t index) const;

    std::uint32_t dimension_;
    std::size_t document_count_ = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> df_;  // sorted
};

struct RetrievalHit {
    std::string key;   // canonical
    double score = 0;  // cosine, in [0, 1]
};

// Immutable search index over a dictionary's canonical keys. Queries are
// pure and safe to run concurrently.
class RetrievalIndex {
public:
    RetrievalIndex(const Tcd& tcd, std::shared_ptr<const Encoder> encoder);

    // Exhaustive cosine scan; hits sorted by score descending, ties by key
    // ascending. With exclude_self the entry whose canonical key equals the
    // canonicalized query is skipped.
    std::vector<RetrievalHit> top_k(const std::string& query_key,
                                    std::size_t k, bool exclude_self) const;

    const Encoder& encoder() const { return *encoder_; }

private:
    std::shared_ptr<const Encoder> encoder_;
    std::vector<std::string> keys_;
    std::vector<EmbeddingVector> vectors_;
};

struct CraResult {
    std::vector<std::string> concepts;
    bool fallback_used = false;
};

// Intersection of the top-k hits' concept sets. An empty intersection with
// k > 1 falls back to the top-1 hit's full set (an empty prompt would just
// degrade to the baseline, so the nearest neighbor's concepts are kept).
// Output order: occurrence count across the k retrieved sets descending,
// ties lexicographic.
CraResult aggregate_cra(const Tcd& tcd, const std::vector<RetrievalHit>& hits,
                        std::size_t k);

// Seeded sample of ceil(fraction * |set|) concepts from the instance's own
// dictionary entry, implemented as a seeded shuffle plus prefix take so a
// larger fraction always contains a smaller one; output sorted.
std::vector<std::string> gold_concepts(const Tcd& tcd,
                                       const TaskInstance& instance,
                                       double fraction, std::uint64_t seed);

}  // namespace scriptkit
