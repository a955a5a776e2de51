// Model-input serialization and concept-generator data preparation.
//
// The serialized form follows one fixed grammar:
//
//   "<s>" GOALPART " ### " CONCEPTS " ### " "</s>" (STEP "</s>")*
//
// GOALPART is the goal, or "goal (preference)" when a preference exists,
// in original casing. CONCEPTS joins the concept list with ", " (empty
// string when there are no concepts). STEP is each history step in order.
// The sentinel tokens "<s>"/"</s>" are literal text here; mapping them to a
// model's special-token ids is the generator service's job.
//
// Fields containing " ### " or "</s>" are rejected at build time rather
// than escaped, which keeps parse(build(x)) == x for everything accepted.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scriptkit/corpus.hpp"
#include "scriptkit/tcd.hpp"

namespace scriptkit {

struct ConceptPrompt {
    std::vector<std::string> concepts;
    std::string serialized;
};

struct PromptFields {
    std::string goal;
    std::optional<std::string> preference;
    std::vector<std::string> concepts;
    std::vector<std::string> history;
};

ConceptPrompt build_prompt(const TaskInstance& instance,
                           const std::vector<std::string>& concepts);

// Inverse of build_prompt for delimiter-free field values. Grammar
// violations raise ParseError with the byte offset of the problem.
PromptFields parse_prompt(const std::string& serialized);

struct CgTrainPair {
    std::string source;  // canonical task key
    std::string target;  // ", "-joined concepts, sorted lexicographically
};

struct CgTrainData {
    std::vector<CgTrainPair> pairs;      // sorted by source
    std::size_t empty_target_count = 0;  // kept pairs with no concepts
};

// One pair per dictionary entry whose source article is not assigned to dev
// or test; entries whose article id is absent from the manifest are
// external keys and are retained.
CgTrainData export_cg_training(const Tcd& tcd, const SplitManifest& manifest);

// Splits generator output on commas, trims whitespace, drops empties, and
// deduplicates keeping first occurrence.
std::vector<std::string> parse_cg_output(const std::string& text);

void save_cg_training(const CgTrainData& data,
                      const std::filesystem::path& path);

}  // namespace scriptkit
