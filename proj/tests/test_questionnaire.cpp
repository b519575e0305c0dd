#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "pforge/llm_client.hpp"
#include "pforge/questionnaire.hpp"
#include "pforge/rng.hpp"

using namespace pforge;
using nlohmann::json;

namespace {

const std::string kCorpus = std::string(PFORGE_REPO_DIR) + "/corpus";

json minimal_doc() {
    return json{{"context", "ctx"},
                {"dimensions", {"d1"}},
                {"items",
                 {{{"preprompt", "p"},
                   {"statement", "s about {player_name}"},
                   {"choices", {"a", "b", "c", "d", "e"}},
                   {"ascending", true},
                   {"dimension", "d1"}}}}};
}

Question make_question(int levels, bool ascending) {
    Question q;
    q.statement = "s";
    q.dimension = "d";
    q.ascending = ascending;
    for (int i = 0; i < levels; ++i) q.scale.labels.push_back("label" + std::to_string(i));
    return q;
}

}  // namespace

TEST_CASE("the AGI fixture loads with two dimensions and ten items") {
    const Questionnaire q =
        load_questionnaire(kCorpus + "/test/agi_job_displacement_global_2035.json");
    CHECK(q.dimension_count() == 2);
    CHECK(q.dimensions[0] == "AGI Threat Appraisal");
    CHECK(q.dimensions[1] == "AGI Opportunity Appraisal");
    CHECK(q.items.size() == 10);
    CHECK(q.title == "agi_job_displacement_global_2035");
    int reversed = 0;
    for (const Question& item : q.items)
        if (!item.ascending) ++reversed;
    CHECK(reversed == 2);
}

TEST_CASE("every shipped corpus and fewshot questionnaire validates") {
    for (const char* split : {"/train", "/valid", "/test", "/fewshot"}) {
        const auto corpus = load_corpus({kCorpus + split});
        CHECK(corpus.size() >= 2);
    }
}

TEST_CASE("unknown dimension reference is rejected with the item index") {
    json doc = minimal_doc();
    doc["items"][0]["dimension"] = "nope";
    CHECK_THROWS_WITH_AS(parse_questionnaire(doc),
                         "item 0: unknown dimension \"nope\"", UnknownDimensionError);
}

TEST_CASE("minimal one-dimension one-item questionnaire is valid") {
    const Questionnaire q = parse_questionnaire(minimal_doc());
    CHECK(q.dimension_count() == 1);
    CHECK(q.items.size() == 1);
}

TEST_CASE("schema violations are rejected") {
    json no_items = minimal_doc();
    no_items.erase("items");
    CHECK_THROWS_AS(parse_questionnaire(no_items), ValidationError);

    json empty_scale = minimal_doc();
    empty_scale["items"][0]["choices"] = json::array();
    CHECK_THROWS_AS(parse_questionnaire(empty_scale), ValidationError);

    json dup_labels = minimal_doc();
    dup_labels["items"][0]["choices"] = {"a", "a", "b", "c", "d"};
    CHECK_THROWS_AS(parse_questionnaire(dup_labels), ValidationError);

    json mixed = minimal_doc();
    mixed["items"].push_back(mixed["items"][0]);
    mixed["items"][1]["choices"] = {"a", "b", "c"};
    CHECK_THROWS_AS(parse_questionnaire(mixed), ValidationError);

    json no_item_for_dim = minimal_doc();
    no_item_for_dim["dimensions"] = {"d1", "lonely"};
    CHECK_THROWS_AS(parse_questionnaire(no_item_for_dim), ValidationError);
}

TEST_CASE("encode_response maps choices onto the unit grid") {
    const Question asc = make_question(5, true);
    const Question rev = make_question(5, false);
    CHECK(encode_response(asc, 3) == 0.75);
    CHECK(encode_response(rev, 3) == 0.25);
    CHECK(encode_response(asc, 0) == 0.0);
    CHECK(encode_response(asc, 4) == 1.0);
    CHECK_THROWS_AS(encode_response(asc, 5), ValidationError);
    CHECK_THROWS_AS(encode_response(asc, -1), ValidationError);
}

TEST_CASE("reverse coding equals index reflection for every scale length") {
    for (int levels : {2, 3, 5, 7}) {
        const Question asc = make_question(levels, true);
        const Question rev = make_question(levels, false);
        for (int i = 0; i < levels; ++i)
            CHECK(encode_response(rev, i) == encode_response(asc, levels - 1 - i));
    }
}

TEST_CASE("aggregate_embedding averages per dimension") {
    json doc = minimal_doc();
    doc["items"].push_back(doc["items"][0]);
    const Questionnaire q = parse_questionnaire(doc);
    ResponseRecord r;
    r.persona_id = "p";
    r.choices = {3, 1};  // encodes to 0.75 and 0.25
    const auto z = aggregate_embedding(q, r);
    REQUIRE(z.size() == 1);
    CHECK(z[0] == 0.5);
}

TEST_CASE("one item per dimension passes through") {
    json doc = minimal_doc();
    doc["dimensions"] = {"d1", "d2"};
    doc["items"].push_back(doc["items"][0]);
    doc["items"][1]["dimension"] = "d2";
    const Questionnaire q = parse_questionnaire(doc);
    ResponseRecord r;
    r.choices = {4, 4};
    const auto z = aggregate_embedding(q, r);
    CHECK(z == std::vector<double>{1.0, 1.0});
}

TEST_CASE("the scale midpoint is fixed under reverse coding on the AGI fixture") {
    const Questionnaire q =
        load_questionnaire(kCorpus + "/test/agi_job_displacement_global_2035.json");
    ResponseRecord r;
    r.choices.assign(q.items.size(), 2);  // "Neither agree nor disagree"
    const auto z = aggregate_embedding(q, r);
    CHECK(z == std::vector<double>{0.5, 0.5});
}

TEST_CASE("aggregation ignores missing answers and rejects empty dimensions") {
    json doc = minimal_doc();
    doc["items"].push_back(doc["items"][0]);
    const Questionnaire q = parse_questionnaire(doc);
    ResponseRecord r;
    r.choices = {std::nullopt, 3};
    CHECK(aggregate_embedding(q, r)[0] == 0.75);
    r.choices = {std::nullopt, std::nullopt};
    CHECK_THROWS_AS(aggregate_embedding(q, r), EmptyDimensionError);
}

TEST_CASE("aggregation is invariant under item permutation within a dimension") {
    const Questionnaire base =
        load_questionnaire(kCorpus + "/train/american_conspiracy_theories_2024.json");
    Rng rng(42);
    ResponseRecord r;
    for (std::size_t i = 0; i < base.items.size(); ++i)
        r.choices.push_back(static_cast<int>(rng.index(5)));
    const auto z0 = aggregate_embedding(base, r);

    // Shuffle items together with their responses.
    std::vector<std::size_t> order(base.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    Questionnaire shuffled = base;
    ResponseRecord rs;
    for (std::size_t i = 0; i < order.size(); ++i) {
        shuffled.items[i] = base.items[order[i]];
        rs.choices.push_back(r.choices[order[i]]);
    }
    CHECK(aggregate_embedding(shuffled, rs) == z0);
}

TEST_CASE("serialize-then-load is the identity") {
    const Questionnaire q =
        load_questionnaire(kCorpus + "/train/elderly_rural_japan_2010.json");
    const std::string tmp = "/tmp/pforge_roundtrip_q.json";
    save_questionnaire(q, tmp);
    const Questionnaire back = load_questionnaire(tmp);
    CHECK(questionnaire_to_json(back) == questionnaire_to_json(q));
}

TEST_CASE("generate_questionnaire assembles the two LLM steps into a valid document") {
    const auto examples = load_corpus({kCorpus + "/fewshot"});
    const json head = {{"context", "A survey of lighthouse keepers."},
                       {"dimensions", {"solitude_tolerance", "sea_reverence"}}};
    const json items = json::array(
        {{{"statement", "{player_name} prefers the company of the lamp to that of people."},
          {"dimension", "solitude_tolerance"},
          {"ascending", true}},
         {{"statement", "{player_name} dreads the silence of the off-season."},
          {"dimension", "solitude_tolerance"},
          {"ascending", false}},
         {{"statement", "{player_name} believes the sea repays respect with mercy."},
          {"dimension", "sea_reverence"},
          {"ascending", true}}});
    ScriptedClient llm({{head.dump()}, {items.dump()}});
    const Questionnaire q = generate_questionnaire("attitudes of lighthouse keepers", examples, llm);
    CHECK(q.context == "A survey of lighthouse keepers.");
    CHECK(q.dimension_count() == 2);
    CHECK(q.items.size() == 3);
    CHECK(q.short_context == "attitudes of lighthouse keepers");
    // default scale and preprompt filled in
    CHECK(q.items[0].scale.size() == 5);
    CHECK(q.items[0].preprompt.find("{player_name}") != std::string::npos);
}

TEST_CASE("generate_questionnaire validates its preconditions") {
    const auto examples = load_corpus({kCorpus + "/fewshot"});
    EchoClient echo;
    CHECK_THROWS_AS(generate_questionnaire("", examples, echo), ValidationError);
    CHECK_THROWS_AS(generate_questionnaire("x", {}, echo), ValidationError);
}

TEST_CASE("generate_questionnaire reports failure with the transcript after retries") {
    const auto examples = load_corpus({kCorpus + "/fewshot"});
    CannedClient junk({}, std::string("not json at all"));
    QuestionnaireGenOptions options;
    options.max_retries = 2;
    try {
        generate_questionnaire("doomed", examples, junk, options);
        FAIL("expected GenerationFailedError");
    } catch (const GenerationFailedError& e) {
        CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
        CHECK(e.transcript.find("step1") != std::string::npos);
    }
}
