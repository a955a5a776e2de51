#include "scriptkit/genservice.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "scriptkit/contrastive.hpp"
#include "scriptkit/error.hpp"
#include "scriptkit/prompt.hpp"
#include "scriptkit/text.hpp"

namespace scriptkit {

namespace {

struct EndpointParts {
    std::string base;  // scheme://host:port
    std::string path;  // "/" when the URL has none
};

EndpointParts split_endpoint(const std::string& endpoint) {
    const std::size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos) {
        throw Error("endpoint must be an http(s) URL: " + endpoint);
    }
    const std::size_t path_start = endpoint.find('/', scheme + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

std::string post_with_retries(const std::string& endpoint,
                              const std::string& body,
                              const RemoteOptions& options) {
    const EndpointParts parts = split_endpoint(endpoint);
    std::string last_failure = "no attempts made";
    for (int attempt = 0; attempt <= options.retries; ++attempt) {
        if (attempt > 0) {
            const int delay = options.backoff_base_ms * (1 << (attempt - 1));
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        httplib::Client client(parts.base);
        client.set_connection_timeout(0, options.timeout_ms * 1000);
        client.set_read_timeout(options.timeout_ms / 1000,
                                (options.timeout_ms % 1000) * 1000);
        client.set_write_timeout(options.timeout_ms / 1000,
                                 (options.timeout_ms % 1000) * 1000);
        if (!options.bearer_token.empty()) {
            client.set_bearer_token_auth(options.bearer_token);
        }
        auto result = client.Post(parts.path, body, "application/json");
        if (!result) {
            last_failure = "connection failed (" +
                           httplib::to_string(result.error()) + ")";
            continue;
        }
        if (result->status != 200) {
            last_failure = "HTTP status " + std::to_string(result->status);
            continue;
        }
        return result->body;
    }
    throw TransportError("POST " + endpoint + " failed after " +
                         std::to_string(options.retries + 1) + " attempts: " +
                         last_failure);
}

}  // namespace

GenResponse generate_remote(const std::string& endpoint,
                            const GenRequest& request,
                            const RemoteOptions& options) {
    Json body;
    body["v"] = 1;
    body["prompt"] = request.prompt;
    body["max_steps"] = request.max_steps;
    body["decode_hints"] = request.decode_hints;
    const std::string raw = post_with_retries(endpoint, body.dump(), options);

    GenResponse response;
    response.raw = raw;
    Json parsed;
    try {
        parsed = Json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        throw ProtocolError("generator response is not JSON", raw);
    }
    if (!parsed.is_object() || !parsed.contains("steps") ||
        !parsed["steps"].is_array() || !parsed.contains("finished") ||
        !parsed["finished"].is_boolean()) {
        throw ProtocolError(
            "generator response must be {\"steps\": [str], \"finished\": bool}",
            raw);
    }
    for (const Json& step : parsed["steps"]) {
        if (!step.is_string()) {
            throw ProtocolError("generator steps must be strings", raw);
        }
        response.steps.push_back(step.get<std::string>());
    }
    response.finished = parsed["finished"].get<bool>();
    return response;
}

std::vector<std::string> concepts_remote(const std::string& endpoint,
                                         const std::string& key,
                                         const RemoteOptions& options) {
    Json body;
    body["v"] = 1;
    body["key"] = key;
    const std::string raw = post_with_retries(endpoint, body.dump(), options);
    Json parsed;
    try {
        parsed = Json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        throw ProtocolError("concept response is not JSON", raw);
    }
    if (!parsed.is_object() || !parsed.contains("concepts_text") ||
        !parsed["concepts_text"].is_string()) {
        throw ProtocolError("concept response must be {\"concepts_text\": str}",
                            raw);
    }
    return parse_cg_output(parsed["concepts_text"].get<std::string>());
}

std::map<std::string, std::vector<std::string>> steps_by_key(
    const std::vector<Article>& articles) {
    std::map<std::string, std::vector<std::string>> steps;
    std::map<std::string, std::string> source;  // canonical -> article id
    for (const Article& article : articles) {
        for (const Method& method : article.methods) {
            const std::string key = canonical_key(article.goal, method.preference);
            auto it = source.find(key);
            if (it == source.end() || article.id < it->second) {
                source[key] = article.id;
                steps[key] = method.steps;
            }
        }
    }
    return steps;
}

GenResponse StubGenerator::generate(const GenRequest& request) const {
    const PromptFields fields = parse_prompt(request.prompt);
    const std::string query = canonical_key(fields.goal, fields.preference);
    const std::vector<RetrievalHit> hits = index_->top_k(query, 1, false);

    GenResponse response;
    auto it = steps_.find(hits.front().key);
    if (it != steps_.end()) {
        for (const std::string& step : it->second) {
            bool repeats = false;
            for (const std::string& past : fields.history) {
                if (unigram_jaccard(step, past) >= 0.8) {
                    repeats = true;
                    break;
                }
            }
            if (!repeats) response.steps.push_back(step);
            if (request.max_steps > 0 &&
                response.steps.size() >=
                    static_cast<std::size_t>(request.max_steps)) {
                break;
            }
        }
    }
    response.finished = true;
    response.raw = join_steps(response.steps);
    return response;
}

GenResponse EchoConceptsGenerator::generate(const GenRequest& request) const {
    const PromptFields fields = parse_prompt(request.prompt);
    GenResponse response;
    if (!fields.concepts.empty()) {
        std::string step;
        for (std::size_t i = 0; i < fields.concepts.size(); ++i) {
            if (i > 0) step += ' ';
            step += fields.concepts[i];
        }
        response.steps.push_back(std::move(step));
    }
    response.finished = true;
    response.raw = join_steps(response.steps);
    return response;
}

}  // namespace scriptkit
