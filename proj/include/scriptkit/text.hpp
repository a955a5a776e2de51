// Shared text primitives: normalization, tokenization, canonical task keys.
// These are normative for the whole toolkit -- the dictionary builder, the
// retrieval encoder, and the metrics all tokenize through this header, so a
// change here changes every downstream artifact.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scriptkit {

// ASCII-only case fold; bytes outside A-Z pass through untouched.
std::string to_lower(std::string_view text);

// Trims leading/trailing whitespace and collapses internal runs to one space.
std::string normalize_whitespace(std::string_view text);

// Maximal runs of whitespace-separated characters, after trimming.
std::vector<std::string> whitespace_tokens(std::string_view text);

// Maximal alphanumeric runs, lowercased. Everything else is a boundary.
std::vector<std::string> alnum_tokens(std::string_view text);

// Canonical task key: "goal (preference)" when a preference is present,
// else the goal alone; case-folded and whitespace-normalized. Preferences
// that are empty after normalization count as absent.
std::string canonical_key(std::string_view goal,
                          const std::optional<std::string>& preference);

// Jaccard similarity of the case-folded whitespace-token sets of two texts.
// Two empty token sets are identical, so their similarity is 1.
double unigram_jaccard(std::string_view a, std::string_view b);

}  // namespace scriptkit
