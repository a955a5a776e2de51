#include <doctest.h>

#include <atomic>
#include <memory>
#include <thread>

#include <httplib.h>

#include "scriptkit/corpus.hpp"
#include "scriptkit/error.hpp"
#include "scriptkit/genservice.hpp"
#include "scriptkit/prompt.hpp"
#include "scriptkit/retrieval.hpp"
#include "scriptkit/tcd.hpp"
#include "test_helpers.hpp"

using namespace scriptkit;

namespace {

// In-process mock service covering the happy path, malformed bodies, and
// always-failing endpoints.
class MockServer {
public:
    MockServer() {
        server_.Post("/generate", [this](const httplib::Request& req,
                                         httplib::Response& res) {
            last_generate_body = req.body;
            res.set_content(
                R"({"steps": ["Step one.", "Step two."], "finished": true})",
                "application/json");
        });
        server_.Post("/generate-empty", [](const httplib::Request&,
                                           httplib::Response& res) {
            res.set_content(R"({"steps": [], "finished": true})",
                            "application/json");
        });
        server_.Post("/not-json", [](const httplib::Request&,
                                     httplib::Response& res) {
            res.set_content("definitely } not json", "text/plain");
        });
        server_.Post("/wrong-shape", [](const httplib::Request&,
                                        httplib::Response& res) {
            res.set_content(R"({"steps": "oops", "finished": true})",
                            "application/json");
        });
        server_.Post("/always-500", [this](const httplib::Request&,
                                           httplib::Response& res) {
            ++failures_seen;
            res.status = 500;
            res.set_content("backend exploded", "text/plain");
        });
        server_.Post("/concepts", [this](const httplib::Request& req,
                                         httplib::Response& res) {
            last_concepts_body = req.body;
            res.set_content(R"({"concepts_text": "peach, container"})",
                            "application/json");
        });
        server_.Post("/concepts-empty", [](const httplib::Request&,
                                           httplib::Response& res) {
            res.set_content(R"({"concepts_text": ""})", "application/json");
        });
        server_.Post("/concepts-dup", [](const httplib::Request&,
                                         httplib::Response& res) {
            res.set_content(R"({"concepts_text": "a, a"})", "application/json");
        });

        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    std::string url(const std::string& path) const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

    std::string last_generate_body;
    std::string last_concepts_body;
    std::atomic<int> failures_seen{0};

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

RemoteOptions fast_options(int retries = 2) {
    RemoteOptions options;
    options.timeout_ms = 2000;
    options.retries = retries;
    options.backoff_base_ms = 1;
    return options;
}

struct StubWorld {
    std::vector<Article> articles = load_corpus(testutil::fixture_corpus());
    Tcd tcd = build_tcd(articles);
    std::shared_ptr<RetrievalIndex> index = std::make_shared<RetrievalIndex>(
        tcd, std::make_shared<HashedTfidfEncoder>(tcd));
    StubGenerator stub{index, steps_by_key(articles)};
};

}  // namespace

TEST_CASE("generate_remote round trips through the mock server") {
    MockServer server;
    GenRequest request;
    request.prompt = "<s>G ###  ### </s>";
    request.max_steps = 8;
    request.decode_hints = Json{{"length_penalty", 1.2}, {"beam", 5}};

    const GenResponse response =
        generate_remote(server.url("/generate"), request, fast_options());
    CHECK(response.steps == std::vector<std::string>{"Step one.", "Step two."});
    CHECK(response.finished);
    CHECK(!response.raw.empty());

    // the request carried the prompt bytes and hints verbatim
    const Json sent = Json::parse(server.last_generate_body);
    CHECK(sent.at("prompt").get<std::string>() == request.prompt);
    CHECK(sent.at("max_steps").get<int>() == 8);
    CHECK(sent.at("decode_hints").at("length_penalty").get<double>() ==
          doctest::Approx(1.2));
    CHECK(sent.at("v").get<int>() == 1);
}

TEST_CASE("request bytes equal the prompt builder's output bytes") {
    MockServer server;
    TaskInstance instance;
    instance.goal = "How to Store Peaches";
    instance.preference = "Keeping Peaches in the Fridge";
    instance.history = {"Rinse the peaches to clean off any dirt or debris."};
    instance.target = {"t"};
    const ConceptPrompt prompt =
        build_prompt(instance, {"peach", "freezer", "container", "half"});

    GenRequest request;
    request.prompt = prompt.serialized;
    generate_remote(server.url("/generate"), request, fast_options());
    const Json sent = Json::parse(server.last_generate_body);
    CHECK(sent.at("prompt").get<std::string>() == prompt.serialized);
}

TEST_CASE("empty step lists are a legal response") {
    MockServer server;
    const GenResponse response = generate_remote(server.url("/generate-empty"),
                                                 GenRequest{}, fast_options());
    CHECK(response.steps.empty());
    CHECK(response.finished);
}

TEST_CASE("malformed responses raise ProtocolError with the raw body") {
    MockServer server;
    try {
        generate_remote(server.url("/not-json"), GenRequest{}, fast_options());
        FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
        CHECK(e.raw_body() == "definitely } not json");
    }
    CHECK_THROWS_AS(generate_remote(server.url("/wrong-shape"), GenRequest{},
                                    fast_options()),
                    ProtocolError);
}

TEST_CASE("retry exhaustion is a TransportError after retries+1 attempts") {
    MockServer server;
    CHECK_THROWS_AS(generate_remote(server.url("/always-500"), GenRequest{},
                                    fast_options(2)),
                    TransportError);
    CHECK(server.failures_seen.load() == 3);

    // unreachable endpoint: nothing listens on this port
    CHECK_THROWS_AS(generate_remote("http://127.0.0.1:9/generate", GenRequest{},
                                    fast_options(1)),
                    TransportError);
}

TEST_CASE("concepts_remote parses, dedups, and handles empties") {
    MockServer server;
    CHECK(concepts_remote(server.url("/concepts"), "store peaches",
                          fast_options()) ==
          std::vector<std::string>{"peach", "container"});
    const Json sent = Json::parse(server.last_concepts_body);
    CHECK(sent.at("key").get<std::string>() == "store peaches");

    CHECK(concepts_remote(server.url("/concepts-empty"), "k", fast_options())
              .empty());
    CHECK(concepts_remote(server.url("/concepts-dup"), "k", fast_options()) ==
          std::vector<std::string>{"a"});
    CHECK_THROWS_AS(
        concepts_remote(server.url("/not-json"), "k", fast_options()),
        ProtocolError);
}

TEST_CASE("stub generator copies the nearest method's steps") {
    StubWorld world;
    TaskInstance instance;
    instance.goal = "How to Check Engine Oil";
    instance.target = {"t"};

    GenRequest request;
    request.prompt = build_prompt(instance, {}).serialized;
    request.max_steps = 0;
    // self-match: the prompt's goal is a dictionary key
    REQUIRE(world.tcd.entries.count("how to check engine oil") == 1);
    const GenResponse response = world.stub.generate(request);
    CHECK(response.steps ==
          std::vector<std::string>{
              "Park the vehicle on level ground and turn off the engine.",
              "Open the hood and locate the dipstick.",
              "Pull the dipstick out and wipe it with a clean rag.",
              "Insert the dipstick fully and pull it out again.",
              "Read the oil level against the marking near the tip."});
    CHECK(response.finished);
}

TEST_CASE("stub filters steps that echo the history") {
    StubWorld world;
    TaskInstance instance;
    instance.goal = "How to Check Engine Oil";
    instance.history = {
        "Park the vehicle on level ground and turn off the engine.",
        "Open the hood and locate the dipstick.",
        "Pull the dipstick out and wipe it with a clean rag.",
        "Insert the dipstick fully and pull it out again.",
        "Read the oil level against the marking near the tip."};
    instance.target = {"t"};

    GenRequest request;
    request.prompt = build_prompt(instance, {}).serialized;
    request.max_steps = 0;
    const GenResponse response = world.stub.generate(request);
    CHECK(response.steps.empty());
    CHECK(response.finished);
}

TEST_CASE("stub output is deterministic and honors max_steps") {
    StubWorld world;
    TaskInstance instance;
    instance.goal = "How to Wash a Car";
    instance.preference = "Washing by Hand";
    instance.target = {"t"};
    GenRequest request;
    request.prompt = build_prompt(instance, {}).serialized;
    request.max_steps = 2;

    const GenResponse a = world.stub.generate(request);
    const GenResponse b = world.stub.generate(request);
    CHECK(a.steps == b.steps);
    CHECK(a.steps.size() == 2);

    CHECK_THROWS_AS(world.stub.generate(GenRequest{"no grammar here", 4, {}}),
                    ParseError);
}

TEST_CASE("echo generator reproduces prompt concepts as one step") {
    EchoConceptsGenerator echo;
    TaskInstance instance;
    instance.goal = "G";
    instance.target = {"t"};
    GenRequest request;
    request.prompt = build_prompt(instance, {"peach", "airtight container"}).serialized;
    const GenResponse response = echo.generate(request);
    REQUIRE(response.steps.size() == 1);
    CHECK(response.steps[0] == "peach airtight container");

    request.prompt = build_prompt(instance, {}).serialized;
    CHECK(echo.generate(request).steps.empty());
}
