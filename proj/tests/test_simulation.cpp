#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "pforge/llm_client.hpp"
#include "pforge/mock_persona.hpp"
#include "pforge/questionnaire.hpp"
#include "pforge/rng.hpp"
#include "pforge/simulation.hpp"

using namespace pforge;

namespace {

const std::string kAgi =
    std::string(PFORGE_REPO_DIR) + "/corpus/test/agi_job_displacement_global_2035.json";

MockPersonaClient mock_for(const std::map<std::string, std::vector<double>>& registry,
                           double noise = 0.0, std::uint64_t seed = 0) {
    return MockPersonaClient(registry, noise, seed);
}

}  // namespace

TEST_CASE("sim marker formatting and parsing round trip") {
    SimMarker m;
    m.persona = "Ada \"the bold\"";
    m.item_index = 3;
    m.item_key = 0xdeadbeefcafef00dULL;
    m.dimension = "Threat Appraisal";
    m.dimension_index = 1;
    m.ascending = false;
    m.choices = 5;
    const std::string text = "preamble\n" + format_sim_marker(m) + "\ntrailer";
    const auto parsed = parse_sim_marker(text);
    REQUIRE(parsed.has_value());
    CHECK(parsed->persona == m.persona);
    CHECK(parsed->item_index == 3);
    CHECK(parsed->item_key == m.item_key);
    CHECK(parsed->dimension == "Threat Appraisal");
    CHECK(parsed->dimension_index == 1);
    CHECK(parsed->ascending == false);
    CHECK(parsed->choices == 5);
    CHECK(!parse_sim_marker("no marker here").has_value());
}

TEST_CASE("mock persona backend quantizes latent traits") {
    const Questionnaire q = load_questionnaire(kAgi);
    const Persona extreme{"Max", "desc"};
    auto client = mock_for({{"Max", {1.0, 1.0}}});

    // ascending item on dimension 0 -> top choice
    CHECK(client.complete({build_item_prompt(extreme, q, 0), 16, 0.0, {}, 1}) == "5");
    // item 4 is reverse-coded on dimension 0: latent 1.0 -> index 0 -> "1"
    CHECK(q.items[4].ascending == false);
    CHECK(client.complete({build_item_prompt(extreme, q, 4), 16, 0.0, {}, 1}) == "1");
    // encode_response maps that back to 1.0
    CHECK(encode_response(q.items[4], 0) == 1.0);

    auto mid = mock_for({{"Mid", {0.5, 0.5}}});
    CHECK(mid.complete({build_item_prompt({"Mid", "d"}, q, 0), 16, 0.0, {}, 1}) == "3");

    CHECK_THROWS_AS(client.complete({build_item_prompt({"Ghost", "d"}, q, 0), 16, 0.0, {}, 1}),
                    UnknownPersonaError);
    CHECK_THROWS_AS(client.complete({"plain prompt", 16, 0.0, {}, 1}), RuntimeFailure);
}

TEST_CASE("choice parsing fixture suite") {
    struct Fixture {
        const char* reply;
        int n_choices;
        int expected;  // -1 = unparseable
    };
    // The contract is lenient first-integer extraction against the 1-based
    // display numbering; integers outside 1..L are unparseable.
    const Fixture fixtures[] = {
        {"3", 5, 2},
        {"3.", 5, 2},
        {" 2\n", 5, 1},
        {"Answer: 4", 5, 3},
        {"I think 3 is right because it matches.", 5, 2},
        {"(2)", 5, 1},
        {"option 5", 5, 4},
        {"5 - Strongly agree", 5, 4},
        {"The answer is:\n4", 5, 3},
        {"1 or maybe 2", 5, 0},
        {"I choose number 1.", 5, 0},
        {"42", 5, -1},
        {"0", 5, -1},
        {"6", 5, -1},
        {"maybe", 5, -1},
        {"", 5, -1},
        {"no idea", 5, -1},
        {"strongly agree", 5, -1},
        {"2", 2, 1},
        {"3", 2, -1},
    };
    for (const Fixture& f : fixtures) {
        const auto got = parse_choice_reply(f.reply, f.n_choices);
        if (f.expected < 0) {
            CHECK_MESSAGE(!got.has_value(), "reply: ", f.reply);
        } else {
            REQUIRE_MESSAGE(got.has_value(), "reply: ", f.reply);
            CHECK_MESSAGE(*got == f.expected, "reply: ", f.reply);
        }
    }
}

TEST_CASE("ask_question returns the mock answer and records the transcript") {
    const Questionnaire q = load_questionnaire(kAgi);
    auto client = mock_for({{"Zed", {0.0, 0.0}}});
    ItemTranscript transcript;
    const auto choice = ask_question({"Zed", "d"}, q, 0, client, 3, &transcript);
    REQUIRE(choice.has_value());
    CHECK(*choice == 0);
    CHECK(transcript.retries == 0);
    CHECK(transcript.reply == "1");
    CHECK(transcript.prompt.find("What kind of situation is this?") != std::string::npos);
    CHECK(transcript.prompt.find("What kind of person is Zed?") != std::string::npos);
    CHECK(transcript.prompt.find("1. Strongly disagree") != std::string::npos);
}

TEST_CASE("unparseable replies exhaust retries and degrade to missing") {
    const Questionnaire q = load_questionnaire(kAgi);
    CannedClient vague({}, std::string("maybe"));
    ItemTranscript transcript;
    const auto choice = ask_question({"A", "d"}, q, 0, vague, 3, &transcript);
    CHECK(!choice.has_value());
    CHECK(transcript.retries == 3);
}

TEST_CASE("simulate_persona recovers mock latents within the quantization bound") {
    const Questionnaire q = load_questionnaire(kAgi);
    auto client = mock_for({{"P", {0.9, 0.1}}});
    const PersonaSimResult result = simulate_persona({"P", "d"}, q, client);
    REQUIRE(result.embedding.size() == 2);
    CHECK(std::abs(result.embedding[0] - 0.9) <= 0.125);
    CHECK(std::abs(result.embedding[1] - 0.1) <= 0.125);
    CHECK(result.transcript.items.size() == q.items.size());
    for (const auto& item : result.transcript.items) CHECK(item.choice.has_value());

    const PersonaSimResult again = simulate_persona({"P", "d"}, q, client);
    CHECK(again.embedding == result.embedding);
}

TEST_CASE("a persona whose every reply is unparseable fails the simulation") {
    const Questionnaire q = load_questionnaire(kAgi);
    CannedClient vague({}, std::string("hmm"));
    CHECK_THROWS_AS(simulate_persona({"P", "d"}, q, vague), EmptyDimensionError);
}

TEST_CASE("population simulation keeps row order and is parallelism independent") {
    const Questionnaire q = load_questionnaire(kAgi);
    std::vector<Persona> personas;
    std::map<std::string, std::vector<double>> registry;
    Rng rng(5);
    for (int i = 0; i < 12; ++i) {
        const std::string name = "P" + std::to_string(i);
        personas.push_back({name, "text"});
        registry[name] = {rng.unit(), rng.unit()};
    }
    auto client = mock_for(registry, 0.05, 77);

    SimulationOptions serial;
    serial.parallelism = 1;
    SimulationOptions wide;
    wide.parallelism = 8;
    const PopulationSimResult a = simulate_population(personas, q, client, serial);
    const PopulationSimResult b = simulate_population(personas, q, client, wide);
    CHECK(a.embeddings.data() == b.embeddings.data());
    REQUIRE(a.embeddings.size() == personas.size());
    for (std::size_t i = 0; i < personas.size(); ++i)
        CHECK(a.transcripts[i].persona == personas[i].name);
}

TEST_CASE("a single persona yields a 1xK point set") {
    const Questionnaire q = load_questionnaire(kAgi);
    auto client = mock_for({{"Solo", {0.25, 0.75}}});
    const PopulationSimResult r = simulate_population({{"Solo", "d"}}, q, client);
    CHECK(r.embeddings.size() == 1);
    CHECK(r.embeddings.dimension() == 2);
}

TEST_CASE("duplicate or empty persona names are rejected") {
    const Questionnaire q = load_questionnaire(kAgi);
    auto client = mock_for({{"A", {0.5, 0.5}}});
    CHECK_THROWS_AS(simulate_population({{"A", "d"}, {"A", "d"}}, q, client), ValidationError);
    CHECK_THROWS_AS(simulate_population({{"", "d"}}, q, client), ValidationError);
    CHECK_THROWS_AS(simulate_population({}, q, client), ValidationError);
}

TEST_CASE("a fatal persona error aborts with the persona id") {
    const Questionnaire q = load_questionnaire(kAgi);
    auto client = mock_for({{"Known", {0.5, 0.5}}});
    try {
        simulate_population({{"Known", "d"}, {"Unknown", "d"}}, q, client);
        FAIL("expected RuntimeFailure");
    } catch (const RuntimeFailure& e) {
        CHECK(std::string(e.what()).find("Unknown") != std::string::npos);
    }
}

TEST_CASE("item order does not change embeddings under the mock backend") {
    const Questionnaire base = load_questionnaire(kAgi);
    Questionnaire permuted = base;
    std::reverse(permuted.items.begin(), permuted.items.end());
    auto client = mock_for({{"P", {0.3, 0.8}}}, 0.0, 0);
    const auto z0 = simulate_persona({"P", "d"}, base, client).embedding;
    const auto z1 = simulate_persona({"P", "d"}, permuted, client).embedding;
    CHECK(z0 == z1);
}

TEST_CASE("transcripts replayed through the replay backend reproduce embeddings exactly") {
    const Questionnaire q = load_questionnaire(kAgi);
    std::vector<Persona> personas = {{"R0", "a"}, {"R1", "b"}, {"R2", "c"}};
    std::map<std::string, std::vector<double>> registry = {
        {"R0", {0.1, 0.9}}, {"R1", {0.6, 0.4}}, {"R2", {0.95, 0.05}}};

    const std::string log_path = "/tmp/pforge_sim_replay.jsonl";
    std::filesystem::remove(log_path);
    PointSet original(2);
    {
        auto inner = std::make_shared<MockPersonaClient>(registry, 0.1, 3);
        LoggingClient logging(inner, std::make_shared<RequestLog>(log_path));
        original = simulate_population(personas, q, logging).embeddings;
    }
    ReplayClient replay(log_path);
    const PointSet replayed = simulate_population(personas, q, replay).embeddings;
    CHECK(replayed.data() == original.data());
}

TEST_CASE("transcripts are written one record per persona-item") {
    const Questionnaire q = load_questionnaire(kAgi);
    auto client = mock_for({{"T", {0.5, 0.5}}});
    const PopulationSimResult r = simulate_population({{"T", "d"}}, q, client);
    const std::string path = "/tmp/pforge_transcripts.jsonl";
    write_transcripts_jsonl(r.transcripts, path);
    std::ifstream in(path);
    int lines = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == static_cast<int>(q.items.size()));
}
