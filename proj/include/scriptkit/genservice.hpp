// Wire protocol for external generator / concept-generator services, plus
// built-in deterministic generators so the pipeline runs with no external
// dependency.
//
// Protocol (HTTP POST, JSON bodies, versioned via "v" = 1):
//   generate:  {"v", "prompt", "max_steps", "decode_hints"}
//              -> {"steps": [str, ...], "finished": bool}
//   concepts:  {"v", "key"} -> {"concepts_text": str}
//
// decode_hints are forwarded verbatim (length penalty, beam size, ...);
// decoding itself is entirely the service's business. Connection failures,
// timeouts, and non-200 statuses are retried with exponential backoff and
// end in TransportError; a 200 response that does not match the schema is a
// ProtocolError carrying the raw body.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "scriptkit/corpus.hpp"
#include "scriptkit/jsonl.hpp"
#include "scriptkit/retrieval.hpp"
#include "scriptkit/tcd.hpp"

namespace scriptkit {

struct GenRequest {
    std::string prompt;  // serialized concept prompt
    int max_steps = 16;  // <= 0 means unlimited
    Json decode_hints = Json::object();
};

struct GenResponse {
    std::vector<std::string> steps;  // may be empty (immediate end)
    bool finished = true;
    std::string raw;
};

class Generator {
public:
    virtual ~Generator() = default;
    // Pure request/response; implementations must be safe to call from
    // multiple threads.
    virtual GenResponse generate(const GenRequest& request) const = 0;
    virtual std::string name() const = 0;
};

struct RemoteOptions {
    int timeout_ms = 30000;
    int retries = 2;          // total attempts = retries + 1
    int backoff_base_ms = 100;  // doubles per retry
    std::string bearer_token;   // forwarded as-is when non-empty
};

GenResponse generate_remote(const std::string& endpoint, const GenRequest& request,
                            const RemoteOptions& options = {});

std::vector<std::string> concepts_remote(const std::string& endpoint,
                                         const std::string& key,
                                         const RemoteOptions& options = {});

class RemoteGenerator : public Generator {
public:
    RemoteGenerator(std::string endpoint, RemoteOptions options = {})
        : endpoint_(std::move(endpoint)), options_(std::move(options)) {}

    GenResponse generate(const GenRequest& request) const override {
        return generate_remote(endpoint_, request, options_);
    }
    std::string name() const override { return "remote:" + endpoint_; }

private:
    std::string endpoint_;
    RemoteOptions options_;
};

// Source steps per canonical key, for the stub generator. Collisions keep
// the method from the lexicographically smallest article id, matching the
// dictionary's collision rule.
std::map<std::string, std::vector<std::string>> steps_by_key(
    const std::vector<Article>& articles);

// Offline generator: nearest-neighbor copy. Parses the prompt, retrieves
// the top-1 dictionary key for goal+preference, and returns that key's
// source method steps minus any step whose unigram Jaccard with a history
// step reaches 0.8.
class StubGenerator : public Generator {
public:
    StubGenerator(std::shared_ptr<const RetrievalIndex> index,
                  std::map<std::string, std::vector<std::string>> steps)
        : index_(std::move(index)), steps_(std::move(steps)) {}

    GenResponse generate(const GenRequest& request) const override;
    std::string name() const override { return "stub"; }

private:
    std::shared_ptr<const RetrievalIndex> index_;
    std::map<std::string, std::vector<std::string>> steps_;
};

// Diagnostic generator: emits a single step containing the prompt's
// concepts verbatim. Useful for checking that concept quality feeds
// through to the metrics (better concepts must never score worse).
class EchoConceptsGenerator : public Generator {
public:
    GenResponse generate(const GenRequest& request) const override;
    std::string name() const override { return "echo"; }
};

}  // namespace scriptkit
