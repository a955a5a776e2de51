// Line-oriented JSON I/O with line-numbered errors. All artifact files are
// written with '\n' line endings and nlohmann's deterministic dump, so a
// fixed pipeline run is byte-reproducible.

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "scriptkit/error.hpp"

namespace scriptkit {

using Json = nlohmann::ordered_json;

// Calls `consume(line_number, parsed)` for every non-empty line. Line numbers
// are 1-based. Malformed JSON raises SchemaError naming the line.
inline void read_jsonl(const std::filesystem::path& path,
                       const std::function<void(long, const Json&)>& consume) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Json parsed;
        try {
            parsed = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(std::string("malformed JSON: ") + e.what(),
                              line_no);
        }
        consume(line_no, parsed);
    }
}

class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path)
        : out_(path, std::ios::binary) {
        if (!out_) throw Error("cannot write " + path.string());
    }

    void write(const Json& object) { out_ << object.dump() << '\n'; }

private:
    std::ofstream out_;
};

inline void write_json_file(const std::filesystem::path& path,
                            const Json& object) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << object.dump(2) << '\n';
}

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

}  // namespace scriptkit
