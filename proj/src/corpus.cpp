#include "scriptkit/corpus.hpp"

#include <set>
#include <unordered_set>

#include "scriptkit/jsonl.hpp"
#include "scriptkit/rng.hpp"
#include "scriptkit/text.hpp"

namespace scriptkit {

namespace {

std::optional<std::string> preference_from_json(const Json& value) {
    if (value.is_null()) return std::nullopt;
    if (!value.is_string()) throw SchemaError("\"preference\" must be a string or null");
    return value.get<std::string>();
}

Json preference_to_json(const std::optional<std::string>& preference) {
    if (!preference) return nullptr;
    return *preference;
}

Article article_from_json(const Json& object, long line_no) {
    if (!object.is_object()) throw SchemaError("expected a JSON object", line_no);
    for (const char* field : {"id", "goal", "category", "methods"}) {
        if (!object.contains(field)) {
            throw SchemaError(std::string("missing \"") + field + "\"", line_no);
        }
    }
    Article article;
    try {
        article.id = object.at("id").get<std::string>();
        article.goal = object.at("goal").get<std::string>();
        article.category = object.at("category").get<std::string>();
        for (const Json& m : object.at("methods")) {
            Method method;
            method.preference = preference_from_json(m.at("preference"));
            for (const Json& s : m.at("steps")) {
                method.steps.push_back(s.get<std::string>());
            }
            article.methods.push_back(std::move(method));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad field type: ") + e.what(), line_no);
    }
    if (article.id.empty()) throw SchemaError("empty \"id\"", line_no);
    if (article.goal.empty()) throw SchemaError("empty \"goal\"", line_no);
    if (article.methods.empty()) throw SchemaError("article has no methods", line_no);
    for (const Method& method : article.methods) {
        if (method.steps.empty()) throw SchemaError("method has no steps", line_no);
        for (const std::string& step : method.steps) {
            if (step.empty()) throw SchemaError("empty step", line_no);
        }
    }
    return article;
}

}  // namespace

const char* split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Dev: return "dev";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "dev") return Split::Dev;
    if (name == "test") return Split::Test;
    throw SchemaError("unknown split \"" + name + "\"");
}

std::string TaskInstance::key() const { return canonical_key(goal, preference); }

std::vector<Article> load_corpus(const std::filesystem::path& path) {
    std::vector<Article> articles;
    std::unordered_set<std::string> seen_ids;
    read_jsonl(path, [&](long line_no, const Json& object) {
        Article article = article_from_json(object, line_no);
        if (!seen_ids.insert(article.id).second) {
            throw SchemaError("duplicate article id \"" + article.id + "\"", line_no);
        }
        articles.push_back(std::move(article));
    });
    return articles;
}

SplitManifest split_articles(const std::vector<Article>& articles,
                             const std::array<int, 3>& ratios,
                             std::uint64_t seed) {
    for (int r : ratios) {
        if (r <= 0) throw Error("split ratios must be positive");
    }
    if (articles.size() < 3) {
        throw Error("need at least 3 articles to form train/dev/test splits");
    }

    std::vector<std::string> ids;
    ids.reserve(articles.size());
    for (const Article& a : articles) ids.push_back(a.id);

    Xoshiro256 rng(seed);
    rng.shuffle(ids);

    const unsigned long long total =
        static_cast<unsigned long long>(ratios[0]) + ratios[1] + ratios[2];
    const std::size_t n = ids.size();
    auto floor_share = [&](int ratio) {
        return static_cast<std::size_t>(
            static_cast<unsigned long long>(n) * ratio / total);
    };
    std::size_t n_train = floor_share(ratios[0]);
    const std::size_t n_dev = floor_share(ratios[1]);
    const std::size_t n_test = floor_share(ratios[2]);
    n_train += n - n_train - n_dev - n_test;  // remainder goes to train

    SplitManifest manifest;
    manifest.seed = seed;
    manifest.ratios = ratios;
    for (std::size_t i = 0; i < n; ++i) {
        Split split = i < n_train                ? Split::Train
                      : i < n_train + n_dev      ? Split::Dev
                                                 : Split::Test;
        manifest.assignment.emplace(ids[i], split);
    }
    return manifest;
}

TaskInstance make_instance_at(const Article& article, std::size_t method_index,
                              std::size_t split_point, Split split) {
    const Method& method = article.methods.at(method_index);
    TaskInstance instance;
    instance.article_id = article.id;
    instance.goal = article.goal;
    instance.preference = method.preference;
    instance.category = article.category;
    instance.split = split;
    instance.history.assign(method.steps.begin(),
                            method.steps.begin() + split_point);
    instance.target.assign(method.steps.begin() + split_point,
                           method.steps.end());
    return instance;
}

std::vector<TaskInstance> make_instances(const std::vector<Article>& articles,
                                         const SplitManifest& manifest,
                                         std::uint64_t seed) {
    std::vector<TaskInstance> instances;
    for (const Article& article : articles) {
        auto it = manifest.assignment.find(article.id);
        if (it == manifest.assignment.end()) {
            throw Error("article \"" + article.id + "\" has no split assignment");
        }
        for (std::size_t m = 0; m < article.methods.size(); ++m) {
            Xoshiro256 stream = derive_stream(seed, article.id, m);
            const std::size_t n = article.methods[m].steps.size();
            const std::size_t point = static_cast<std::size_t>(stream.below(n));
            instances.push_back(make_instance_at(article, m, point, it->second));
        }
    }
    return instances;
}

CorpusStats corpus_stats(const std::vector<Article>& articles) {
    CorpusStats stats;
    stats.article_count = articles.size();
    std::size_t token_count = 0;
    for (const Article& article : articles) {
        for (const Method& method : article.methods) {
            stats.step_count += method.steps.size();
            for (const std::string& step : method.steps) {
                token_count += whitespace_tokens(step).size();
            }
        }
    }
    if (stats.step_count > 0) {
        stats.avg_tokens_per_step =
            static_cast<double>(token_count) / static_cast<double>(stats.step_count);
    }
    if (stats.article_count > 0) {
        stats.avg_steps_per_article = static_cast<double>(stats.step_count) /
                                      static_cast<double>(stats.article_count);
    }
    return stats;
}

void save_manifest(const SplitManifest& manifest,
                   const std::filesystem::path& path) {
    Json object;
    object["seed"] = manifest.seed;
    object["ratios"] = manifest.ratios;
    Json assignment = Json::object();
    for (const auto& [id, split] : manifest.assignment) {
        assignment[id] = split_name(split);
    }
    object["assignment"] = assignment;
    write_json_file(path, object);
}

SplitManifest load_manifest(const std::filesystem::path& path) {
    Json object = read_json_file(path);
    SplitManifest manifest;
    try {
        manifest.seed = object.at("seed").get<std::uint64_t>();
        manifest.ratios = object.at("ratios").get<std::array<int, 3>>();
        for (const auto& [id, split] : object.at("assignment").items()) {
            manifest.assignment.emplace(id, split_from_name(split.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    return manifest;
}

void save_instances(const std::vector<TaskInstance>& instances,
                    const std::filesystem::path& path) {
    JsonlWriter writer(path);
    for (const TaskInstance& instance : instances) {
        Json object;
        object["article_id"] = instance.article_id;
        object["goal"] = instance.goal;
        object["preference"] = preference_to_json(instance.preference);
        object["history"] = instance.history;
        object["target"] = instance.target;
        object["category"] = instance.category;
        object["split"] = split_name(instance.split);
        writer.write(object);
    }
}

std::vector<TaskInstance> load_instances(const std::filesystem::path& path) {
    std::vector<TaskInstance> instances;
    read_jsonl(path, [&](long line_no, const Json& object) {
        TaskInstance instance;
        try {
            instance.article_id = object.at("article_id").get<std::string>();
            instance.goal = object.at("goal").get<std::string>();
            instance.preference = preference_from_json(object.at("preference"));
            instance.history = object.at("history").get<std::vector<std::string>>();
            instance.target = object.at("target").get<std::vector<std::string>>();
            instance.category = object.at("category").get<std::string>();
            instance.split = split_from_name(object.at("split").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("bad instance: ") + e.what(), line_no);
        }
        if (instance.target.empty()) {
            throw SchemaError("instance target must not be empty", line_no);
        }
        instances.push_back(std::move(instance));
    });
    return instances;
}

}  // namespace scriptkit
