// Task concept dictionary: a key-value knowledge base mapping
// preference-conditioned goal keys to the noun-phrase concepts that appear
// in the matching solution steps.
//
// Concepts come from a deterministic rule-based chunker instead of a
// statistical tagger, so dictionary construction is reproducible with zero
// model dependencies. The chunker rules below are normative:
//
//   1. Tokens are maximal alphanumeric runs, lowercased. Whitespace between
//      tokens keeps them adjacent; any other character breaks adjacency.
//   2. The token stream is split at stopwords (bundled function-word list),
//      at tokens containing digits, and at punctuation breaks. The first
//      token of a sentence is dropped when it starts with an uppercase
//      letter in the source text (imperative verbs in instructional steps
//      are capitalized; already-normalized concept strings are not, which
//      keeps extraction idempotent on its own output).
//   3. Each remaining run, truncated to its first 4 tokens, becomes one
//      concept. The final token is singular-normalized by suffix stripping:
//      "ies" -> "y"; "es" dropped after ss/x/z/ch/sh/o when the token has at
//      least 5 characters; otherwise a trailing single "s" is dropped when
//      the token is longer than 3 characters. The normalizer is a
//      projection, so extraction is idempotent on its own outputs.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "scriptkit/corpus.hpp"

namespace scriptkit {

using ConceptSet = std::set<std::string>;

struct TaskKey {
    std::string goal;
    std::optional<std::string> preference;
    std::string canonical;
    std::string category;
    std::string article_id;
};

struct TcdEntry {
    TaskKey key;
    ConceptSet concepts;
};

struct Tcd {
    // Keyed by canonical form; iteration order is the persisted file order.
    std::map<std::string, TcdEntry> entries;
    std::map<std::string, std::vector<std::string>> category_index;

    const TcdEntry* find(const std::string& canonical) const {
        auto it = entries.find(canonical);
        return it == entries.end() ? nullptr : &it->second;
    }
};

bool is_stopword(std::string_view token);

std::string singular_normalize(std::string_view token);

ConceptSet extract_concepts(std::string_view text);

// One entry per (article, method); the concept set is the union of
// extract_concepts over the method's steps. Canonical-key collisions union
// their concept sets, and the surviving key metadata is the source with the
// lexicographically smallest article id, so the result is independent of
// article order.
Tcd build_tcd(const std::vector<Article>& articles);

struct TcdStats {
    std::size_t key_count = 0;
    double avg_concepts_per_key = 0.0;
};

TcdStats tcd_stats(const Tcd& tcd);

// tcd.jsonl, one entry per line sorted by canonical key; byte-stable.
void save_tcd(const Tcd& tcd, const std::filesystem::path& path);
Tcd load_tcd(const std::filesystem::path& path);

}  // namespace scriptkit
