// Corpus ingestion, article splitting, and task-instance derivation.
//
// An instructional article carries a goal, a category, and one or more
// methods (an optional preference plus ordered steps). Instances are one
// completion problem per (article, method): the method's steps cut at a
// seeded uniform point into an already-done history and a remaining target.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace scriptkit {

struct Method {
    std::optional<std::string> preference;
    std::vector<std::string> steps;  // source order, each non-empty
};

struct Article {
    std::string id;  // unique within a corpus file
    std::string goal;
    std::string category;
    std::vector<Method> methods;
};

enum class Split { Train, Dev, Test };

const char* split_name(Split split);
Split split_from_name(const std::string& name);

struct SplitManifest {
    std::uint64_t seed = 0;
    std::array<int, 3> ratios{6, 2, 2};
    std::map<std::string, Split> assignment;  // article id -> split
};

struct TaskInstance {
    std::string article_id;
    std::string goal;
    std::optional<std::string> preference;
    std::vector<std::string> history;  // may be empty
    std::vector<std::string> target;   // never empty
    std::string category;
    Split split = Split::Train;

    std::string key() const;  // canonical "goal (preference)" form
};

// Parses articles.jsonl. Validation failures report the offending line.
std::vector<Article> load_corpus(const std::filesystem::path& path);

// Article-level partition. Sizes are floor(fraction * N) per split with the
// remainder assigned to train; ids are shuffled with the seeded generator
// described in README.md and then cut train / dev / test.
SplitManifest split_articles(const std::vector<Article>& articles,
                             const std::array<int, 3>& ratios,
                             std::uint64_t seed);

// One instance per (article, method). The split point for an n-step method
// is drawn uniformly from {0, ..., n-1} on a stream derived from
// (seed, article id, method index), so history may be empty but the target
// never is.
std::vector<TaskInstance> make_instances(const std::vector<Article>& articles,
                                         const SplitManifest& manifest,
                                         std::uint64_t seed);

// History = steps[0, point), target = steps[point, n).
TaskInstance make_instance_at(const Article& article, std::size_t method_index,
                              std::size_t split_point, Split split);

struct CorpusStats {
    std::size_t article_count = 0;
    std::size_t step_count = 0;
    double avg_tokens_per_step = 0.0;   // whitespace tokens after trimming
    double avg_steps_per_article = 0.0; // all methods pooled
};

CorpusStats corpus_stats(const std::vector<Article>& articles);

void save_manifest(const SplitManifest& manifest,
                   const std::filesystem::path& path);
SplitManifest load_manifest(const std::filesystem::path& path);

void save_instances(const std::vector<TaskInstance>& instances,
                    const std::filesystem::path& path);
std::vector<TaskInstance> load_instances(const std::filesystem::path& path);

}  // namespace scriptkit
