#include <doctest.h>

#include "scriptkit/corpus.hpp"
#include "scriptkit/error.hpp"
#include "scriptkit/prompt.hpp"
#include "scriptkit/rng.hpp"
#include "scriptkit/tcd.hpp"
#include "test_helpers.hpp"

using namespace scriptkit;

namespace {

TaskInstance instance_of(std::string goal, std::optional<std::string> pref,
                         std::vector<std::string> history) {
    TaskInstance instance;
    instance.goal = std::move(goal);
    instance.preference = std::move(pref);
    instance.history = std::move(history);
    instance.target = {"placeholder"};
    return instance;
}

std::string random_field(Xoshiro256& rng, std::size_t max_len) {
    static const char alphabet[] =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _-.!?";
    const std::size_t len = 1 + rng.below(max_len);
    std::string out;
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(alphabet[rng.below(sizeof(alphabet) - 1)]);
    }
    return out;
}

}  // namespace

TEST_CASE("prompt serialization follows the grammar byte-exactly") {
    const auto instance = instance_of(
        "How to Store Peaches", std::string("Keeping Peaches in the Fridge"),
        {"Rinse the peaches to clean off any dirt or debris.",
         "Dry the peaches with clean paper towels or a clean hand towel."});
    const auto prompt =
        build_prompt(instance, {"peach", "freezer", "container", "half"});
    CHECK(prompt.serialized ==
          "<s>How to Store Peaches (Keeping Peaches in the Fridge) ### "
          "peach, freezer, container, half ### </s>"
          "Rinse the peaches to clean off any dirt or debris.</s>"
          "Dry the peaches with clean paper towels or a clean hand towel.</s>");
}

TEST_CASE("prompt grammar with empty parts") {
    CHECK(build_prompt(instance_of("G", std::nullopt, {}), {}).serialized ==
          "<s>G ###  ### </s>");
    CHECK(build_prompt(instance_of("G", std::string("P"), {}), {"c"}).serialized ==
          "<s>G (P) ### c ### </s>");
}

TEST_CASE("parse inverts build") {
    const auto instance = instance_of("Fix a Leaky Tap", std::string("Under the Sink"),
                                      {"Turn off the supply.", "Open the tap."});
    const auto prompt = build_prompt(instance, {"washer", "spanner"});
    const auto fields = parse_prompt(prompt.serialized);
    CHECK(fields.goal == "Fix a Leaky Tap");
    CHECK(fields.preference == "Under the Sink");
    CHECK(fields.concepts == std::vector<std::string>{"washer", "spanner"});
    CHECK(fields.history ==
          std::vector<std::string>{"Turn off the supply.", "Open the tap."});
}

TEST_CASE("parse rejects grammar violations with a position") {
    CHECK_THROWS_AS(parse_prompt("no sentinel"), ParseError);
    CHECK_THROWS_AS(parse_prompt("<s>G ### only one separator </s>"), ParseError);
    CHECK_THROWS_AS(parse_prompt("<s>G ### c ### missing eos"), ParseError);
    CHECK_THROWS_AS(parse_prompt("<s>G ### c ### </s>dangling step"), ParseError);

    try {
        parse_prompt("<s>G ### only one separator");
    } catch (const ParseError& e) {
        CHECK(e.position() > 0);
    }
}

TEST_CASE("build rejects delimiter collisions") {
    CHECK_THROWS_AS(
        build_prompt(instance_of("Goal ### evil", std::nullopt, {}), {}), Error);
    CHECK_THROWS_AS(
        build_prompt(instance_of("G", std::string("bad</s>pref"), {}), {}), Error);
    CHECK_THROWS_AS(build_prompt(instance_of("G", std::nullopt, {}),
                                 {"conc ### ept"}),
                    Error);
    CHECK_THROWS_AS(
        build_prompt(instance_of("G", std::nullopt, {"step</s>broken"}), {}),
        Error);
}

TEST_CASE("round trip holds on random delimiter-free tuples") {
    Xoshiro256 rng(99);
    for (int round = 0; round < 300; ++round) {
        TaskInstance instance;
        instance.goal = random_field(rng, 24);
        if (rng.below(2) == 0) instance.preference = random_field(rng, 16);
        const std::size_t steps = rng.below(4);
        for (std::size_t i = 0; i < steps; ++i) {
            instance.history.push_back(random_field(rng, 30));
        }
        instance.target = {"t"};
        std::vector<std::string> concepts;
        const std::size_t n = rng.below(5);
        for (std::size_t i = 0; i < n; ++i) {
            // concepts must not contain ", " or leading/trailing junk that
            // the joiner would misread; use comma-free fields
            std::string c = random_field(rng, 12);
            for (char& ch : c) {
                if (ch == ',') ch = 'x';
            }
            concepts.push_back(c);
        }
        // a goal ending in ')' is ambiguous with the preference form
        while (!instance.goal.empty() &&
               (instance.goal.back() == ')' || instance.goal.back() == ' ')) {
            instance.goal.pop_back();
        }
        if (instance.goal.empty()) instance.goal = "g";

        const auto prompt = build_prompt(instance, concepts);
        const auto fields = parse_prompt(prompt.serialized);
        CHECK(fields.goal == instance.goal);
        CHECK(fields.preference == instance.preference);
        CHECK(fields.concepts == concepts);
        CHECK(fields.history == instance.history);
    }
}

TEST_CASE("export_cg_training filters dev and test sources") {
    Tcd tcd;
    auto add = [&](const std::string& key, const std::string& article,
                   ConceptSet concepts) {
        TcdEntry entry;
        entry.key.canonical = key;
        entry.key.article_id = article;
        entry.key.category = "c";
        entry.concepts = std::move(concepts);
        tcd.entries[key] = entry;
    };
    add("k1", "a1", {"x", "a"});
    add("k2", "a2", {"y"});
    add("k3", "a3", {"z"});
    add("k4", "a4", {});       // train, empty target
    add("k5", "missing", {"w"});  // not in manifest: retained

    SplitManifest manifest;
    manifest.assignment = {{"a1", Split::Train},
                           {"a2", Split::Dev},
                           {"a3", Split::Test},
                           {"a4", Split::Train}};

    const CgTrainData data = export_cg_training(tcd, manifest);
    REQUIRE(data.pairs.size() == 3);
    CHECK(data.pairs[0].source == "k1");
    CHECK(data.pairs[0].target == "a, x");  // sorted lexicographically
    CHECK(data.pairs[1].source == "k4");
    CHECK(data.pairs[1].target.empty());
    CHECK(data.pairs[2].source == "k5");
    CHECK(data.empty_target_count == 1);
}

TEST_CASE("cg training export matches a filter-and-sort recount on the fixture") {
    const auto articles = load_corpus(testutil::fixture_corpus());
    const Tcd tcd = build_tcd(articles);
    const auto manifest = split_articles(articles, {6, 2, 2}, 42);
    const CgTrainData data = export_cg_training(tcd, manifest);

    std::vector<std::pair<std::string, std::string>> expected;
    for (const auto& [key, entry] : tcd.entries) {
        auto it = manifest.assignment.find(entry.key.article_id);
        if (it != manifest.assignment.end() && it->second != Split::Train) continue;
        std::string target;
        for (const auto& c : entry.concepts) {
            if (!target.empty()) target += ", ";
            target += c;
        }
        expected.emplace_back(key, target);
    }
    std::sort(expected.begin(), expected.end());

    REQUIRE(data.pairs.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(data.pairs[i].source == expected[i].first);
        CHECK(data.pairs[i].target == expected[i].second);
    }

    // never emits a dev/test-sourced pair
    for (const auto& pair : data.pairs) {
        const auto& entry = tcd.entries.at(pair.source);
        auto it = manifest.assignment.find(entry.key.article_id);
        if (it != manifest.assignment.end()) CHECK(it->second == Split::Train);
    }
}

TEST_CASE("parse_cg_output splits, trims, drops, and dedups") {
    CHECK(parse_cg_output("peach, paper bag, store peach") ==
          std::vector<std::string>{"peach", "paper bag", "store peach"});
    CHECK(parse_cg_output("a, , a") == std::vector<std::string>{"a"});
    CHECK(parse_cg_output("").empty());
    CHECK(parse_cg_output("  spaced  ,token ") ==
          std::vector<std::string>{"spaced", "token"});
}
