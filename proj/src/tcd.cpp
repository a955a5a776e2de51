#include "scriptkit/tcd.hpp"

#include <algorithm>
#include <unordered_set>

#include "scriptkit/jsonl.hpp"
#include "scriptkit/text.hpp"

namespace scriptkit {

namespace {

// Function words that terminate a concept chunk. English closed-class
// vocabulary: determiners, prepositions, conjunctions, pronouns, auxiliaries.
const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "a", "about", "above", "after", "again", "against", "all", "also",
        "am", "an", "and", "any", "are", "as", "at", "be", "because", "been",
        "before", "being", "below", "between", "both", "but", "by", "can",
        "cannot", "could", "did", "do", "does", "doing", "down", "during",
        "each", "either", "enough", "every", "few", "for", "from", "further",
        "had", "has", "have", "having", "he", "her", "here", "hers", "him",
        "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself",
        "just", "may", "me", "might", "more", "most", "must", "my", "neither",
        "no", "nor", "not", "now", "of", "off", "on", "once", "only", "onto",
        "or", "other", "our", "ours", "out", "over", "own", "per", "same",
        "shall", "she", "should", "so", "some", "such", "than", "that", "the",
        "their", "theirs", "them", "then", "there", "these", "they", "this",
        "those", "through", "to", "too", "under", "until", "up", "upon", "us",
        "very", "was", "we", "were", "what", "when", "where", "which", "while",
        "who", "whom", "why", "will", "with", "within", "without", "would",
        "you", "your", "yours",
    };
    return words;
}

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum_char(char c) {
    return is_digit(c) || is_upper(c) || (c >= 'a' && c <= 'z');
}
bool is_space_char(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
           c == '\f';
}
// Stems that take an "-es" plural: ss, x, z, ch, sh, o. A stem ending in a
// single "s" is left to the plain trailing-s rule instead, which keeps the
// normalizer a projection (normalizing twice changes nothing).
bool takes_es_plural(std::string_view stem) {
    if (stem.empty()) return false;
    const char last = stem.back();
    if (last == 'x' || last == 'z' || last == 'o') return true;
    if (stem.size() < 2) return false;
    const char prev = stem[stem.size() - 2];
    if (last == 's') return prev == 's';
    return last == 'h' && (prev == 'c' || prev == 's');
}

constexpr std::size_t kMaxConceptTokens = 4;

}  // namespace

bool is_stopword(std::string_view token) {
    return stopwords().count(std::string(token)) > 0;
}

std::string singular_normalize(std::string_view token) {
    std::string out(token);
    if (out.size() >= 3 && out.compare(out.size() - 3, 3, "ies") == 0) {
        out.replace(out.size() - 3, 3, "y");
    } else if (out.size() >= 5 && out.compare(out.size() - 2, 2, "es") == 0 &&
               takes_es_plural(std::string_view(out).substr(0, out.size() - 2))) {
        out.erase(out.size() - 2);
    } else if (out.size() > 3 && out.back() == 's' &&
               out[out.size() - 2] != 's') {
        out.pop_back();
    }
    return out;
}

ConceptSet extract_concepts(std::string_view text) {
    ConceptSet concepts;
    std::vector<std::string> run;

    auto flush_run = [&] {
        if (run.empty()) return;
        if (run.size() > kMaxConceptTokens) run.resize(kMaxConceptTokens);
        run.back() = singular_normalize(run.back());
        std::string chunk = run.front();
        for (std::size_t i = 1; i < run.size(); ++i) {
            chunk += ' ';
            chunk += run[i];
        }
        concepts.insert(std::move(chunk));
        run.clear();
    };

    bool sentence_start = true;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        char c = text[i];
        if (is_alnum_char(c)) {
            std::size_t begin = i;
            bool has_digit = false;
            while (i < n && is_alnum_char(text[i])) {
                has_digit |= is_digit(text[i]);
                ++i;
            }
            std::string_view raw = text.substr(begin, i - begin);
            const bool imperative = sentence_start && is_upper(raw.front());
            sentence_start = false;
            std::string token = to_lower(raw);
            if (has_digit || imperative || is_stopword(token)) {
                flush_run();
            } else {
                run.push_back(std::move(token));
            }
        } else {
            if (!is_space_char(c)) {
                flush_run();
                if (c == '.' || c == '!' || c == '?') sentence_start = true;
            }
            ++i;
        }
    }
    flush_run();
    return concepts;
}

Tcd build_tcd(const std::vector<Article>& articles) {
    Tcd tcd;
    for (const Article& article : articles) {
        for (const Method& method : article.methods) {
            TaskKey key;
            key.goal = article.goal;
            key.preference = method.preference;
            key.canonical = canonical_key(article.goal, method.preference);
            key.category = article.category;
            key.article_id = article.id;

            ConceptSet concepts;
            for (const std::string& step : method.steps) {
                ConceptSet step_concepts = extract_concepts(step);
                concepts.insert(step_concepts.begin(), step_concepts.end());
            }

            auto it = tcd.entries.find(key.canonical);
            if (it == tcd.entries.end()) {
                tcd.entries.emplace(key.canonical,
                                    TcdEntry{key, std::move(concepts)});
            } else {
                it->second.concepts.insert(concepts.begin(), concepts.end());
                if (key.article_id < it->second.key.article_id) {
                    it->second.key = key;
                }
            }
        }
    }
    for (const auto& [canonical, entry] : tcd.entries) {
        tcd.category_index[entry.key.category].push_back(canonical);
    }
    return tcd;
}

TcdStats tcd_stats(const Tcd& tcd) {
    TcdStats stats;
    stats.key_count = tcd.entries.size();
    if (stats.key_count == 0) return stats;
    std::size_t total = 0;
    for (const auto& [canonical, entry] : tcd.entries) {
        total += entry.concepts.size();
    }
    stats.avg_concepts_per_key =
        static_cast<double>(total) / static_cast<double>(stats.key_count);
    return stats;
}

void save_tcd(const Tcd& tcd, const std::filesystem::path& path) {
    JsonlWriter writer(path);
    for (const auto& [canonical, entry] : tcd.entries) {
        Json object;
        object["key"] = canonical;
        object["goal"] = entry.key.goal;
        object["preference"] =
            entry.key.preference ? Json(*entry.key.preference) : Json(nullptr);
        object["category"] = entry.key.category;
        object["article_id"] = entry.key.article_id;
        object["concepts"] = entry.concepts;
        writer.write(object);
    }
}

Tcd load_tcd(const std::filesystem::path& path) {
    Tcd tcd;
    read_jsonl(path, [&](long line_no, const Json& object) {
        TcdEntry entry;
        try {
            entry.key.canonical = object.at("key").get<std::string>();
            entry.key.goal = object.at("goal").get<std::string>();
            if (!object.at("preference").is_null()) {
                entry.key.preference = object.at("preference").get<std::string>();
            }
            entry.key.category = object.at("category").get<std::string>();
            entry.key.article_id = object.at("article_id").get<std::string>();
            for (const Json& c : object.at("concepts")) {
                entry.concepts.insert(c.get<std::string>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("bad entry: ") + e.what(), line_no);
        }
        std::string canonical = entry.key.canonical;
        if (!tcd.entries.emplace(canonical, std::move(entry)).second) {
            throw SchemaError("duplicate canonical key \"" + canonical + "\"",
                              line_no);
        }
    });
    for (const auto& [canonical, entry] : tcd.entries) {
        tcd.category_index[entry.key.category].push_back(canonical);
    }
    return tcd;
}

}  // namespace scriptkit
