#include "scriptkit/prompt.hpp"

#include <algorithm>

#include "scriptkit/error.hpp"
#include "scriptkit/jsonl.hpp"
#include "scriptkit/text.hpp"

namespace scriptkit {

namespace {

constexpr const char* kBos = "<s>";
constexpr const char* kEos = "</s>";
constexpr const char* kFieldSep = " ### ";

void reject_delimiters(const std::string& value, const char* field) {
    if (value.find(kFieldSep) != std::string::npos ||
        value.find(kEos) != std::string::npos) {
        throw Error(std::string("delimiter collision: ") + field +
                    " contains a reserved delimiter: \"" + value + "\"");
    }
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConceptPrompt build_prompt(const TaskInstance& instance,
                           const std::vector<std::string>& concepts) {
    reject_delimiters(instance.goal, "goal");
    if (instance.preference) reject_delimiters(*instance.preference, "preference");
    for (const std::string& c : concepts) reject_delimiters(c, "concept");
    for (const std::string& s : instance.history) reject_delimiters(s, "history step");

    std::string goal_part = instance.goal;
    if (instance.preference) {
        goal_part += " (";
        goal_part += *instance.preference;
        goal_part += ")";
    }

    std::string joined;
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        if (i > 0) joined += ", ";
        joined += concepts[i];
    }

    ConceptPrompt prompt;
    prompt.concepts = concepts;
    prompt.serialized = kBos;
    prompt.serialized += goal_part;
    prompt.serialized += kFieldSep;
    prompt.serialized += joined;
    prompt.serialized += kFieldSep;
    prompt.serialized += kEos;
    for (const std::string& step : instance.history) {
        prompt.serialized += step;
        prompt.serialized += kEos;
    }
    return prompt;
}

PromptFields parse_prompt(const std::string& serialized) {
    const std::size_t bos_len = std::string(kBos).size();
    const std::size_t sep_len = std::string(kFieldSep).size();
    const std::size_t eos_len = std::string(kEos).size();

    if (serialized.compare(0, bos_len, kBos) != 0) {
        throw ParseError("prompt must start with \"<s>\"", 0);
    }
    const std::size_t first_sep = serialized.find(kFieldSep, bos_len);
    if (first_sep == std::string::npos) {
        throw ParseError("missing first \" ### \" separator", bos_len);
    }
    const std::size_t second_sep = serialized.find(kFieldSep, first_sep + sep_len);
    if (second_sep == std::string::npos) {
        throw ParseError("missing second \" ### \" separator", first_sep + sep_len);
    }

    PromptFields fields;
    const std::string goal_part = serialized.substr(bos_len, first_sep - bos_len);
    if (!goal_part.empty() && goal_part.back() == ')') {
        const std::size_t open = goal_part.rfind(" (");
        if (open != std::string::npos) {
            fields.goal = goal_part.substr(0, open);
            fields.preference =
                goal_part.substr(open + 2, goal_part.size() - open - 3);
        } else {
            fields.goal = goal_part;
        }
    } else {
        fields.goal = goal_part;
    }

    const std::string concept_text =
        serialized.substr(first_sep + sep_len, second_sep - first_sep - sep_len);
    if (!concept_text.empty()) {
        std::size_t start = 0;
        while (true) {
            std::size_t comma = concept_text.find(", ", start);
            if (comma == std::string::npos) {
                fields.concepts.push_back(concept_text.substr(start));
                break;
            }
            fields.concepts.push_back(concept_text.substr(start, comma - start));
            start = comma + 2;
        }
    }

    std::size_t cursor = second_sep + sep_len;
    if (serialized.compare(cursor, eos_len, kEos) != 0) {
        throw ParseError("expected \"</s>\" after concept block", cursor);
    }
    cursor += eos_len;
    while (cursor < serialized.size()) {
        const std::size_t eos = serialized.find(kEos, cursor);
        if (eos == std::string::npos) {
            throw ParseError("history step not terminated by \"</s>\"", cursor);
        }
        fields.history.push_back(serialized.substr(cursor, eos - cursor));
        cursor = eos + eos_len;
    }
    return fields;
}

CgTrainData export_cg_training(const Tcd& tcd, const SplitManifest& manifest) {
    CgTrainData data;
    for (const auto& [canonical, entry] : tcd.entries) {
        auto it = manifest.assignment.find(entry.key.article_id);
        if (it != manifest.assignment.end() && it->second != Split::Train) {
            continue;  // evaluation-set articles stay out of the training data
        }
        CgTrainPair pair;
        pair.source = canonical;
        for (const std::string& c : entry.concepts) {  // set iterates sorted
            if (!pair.target.empty()) pair.target += ", ";
            pair.target += c;
        }
        if (pair.target.empty()) ++data.empty_target_count;
        data.pairs.push_back(std::move(pair));
    }
    return data;  // entries map iterates sorted by canonical already
}

std::vector<std::string> parse_cg_output(const std::string& text) {
    std::vector<std::string> concepts;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        std::string piece = trim(comma == std::string::npos
                                     ? text.substr(start)
                                     : text.substr(start, comma - start));
        if (!piece.empty() &&
            std::find(concepts.begin(), concepts.end(), piece) == concepts.end()) {
            concepts.push_back(std::move(piece));
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return concepts;
}

void save_cg_training(const CgTrainData& data,
                      const std::filesystem::path& path) {
    JsonlWriter writer(path);
    for (const CgTrainPair& pair : data.pairs) {
        Json object;
        object["source"] = pair.source;
        object["target"] = pair.target;
        writer.write(object);
    }
}

}  // namespace scriptkit
