#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "pforge/evolution.hpp"
#include "pforge/generator.hpp"
#include "pforge/json_util.hpp"
#include "pforge/llm_client.hpp"
#include "pforge/mock_stack.hpp"
#include "pforge/quasirandom.hpp"

using namespace pforge;
using nlohmann::json;

namespace {

const std::string kData = std::string(PFORGE_REPO_DIR) + "/data";

GeneratorGenome qr_genome(double span = 1.0, double origin = 0.0) {
    GeneratorGenome g;
    g.genome_id = "qr-test";
    g.stage1.kind = Stage1Kind::QuasiRandomTraits;
    g.stage1.prompt_template =
        "Context: {context}\nAxes: {dimensions}\n{dimension_explanations}"
        "Positions: {position_vector}";
    g.stage1.span = span;
    g.stage1.origin = origin;
    g.stage2_template = "Expand {name}: {descriptor}";
    return g;
}

}  // namespace

TEST_CASE("render_prompt substitutes placeholders literally") {
    CHECK(render_prompt("Hello {name}", {{"name", "Ada"}}) == "Hello Ada");
    CHECK(render_prompt("no placeholders", {}) == "no placeholders");
    CHECK(render_prompt("{a}{a} {b}", {{"a", "x"}, {"b", "y"}}) == "xx y");
    // no recursion: substituted values are not re-scanned
    CHECK(render_prompt("{a}", {{"a", "{b}"}}) == "{b}");
    // non-identifier brace pairs pass through (JSON in templates)
    CHECK(render_prompt("{\"k\": 1}", {}) == "{\"k\": 1}");
    CHECK_THROWS_AS(render_prompt("Hello {name}", {}), UnboundPlaceholderError);
    CHECK_THROWS_WITH_AS(render_prompt("{ghost}", {}), "unbound placeholder {ghost}",
                         UnboundPlaceholderError);
}

TEST_CASE("the three shipped seed genomes validate") {
    const auto seeds = load_seed_genomes(kData);
    REQUIRE(seeds.size() == 3);
    std::set<Stage1Kind> kinds;
    for (const GeneratorGenome& g : seeds) {
        CHECK(validate_genome(g).empty());
        kinds.insert(g.stage1.kind);
    }
    CHECK(kinds.size() == 3);  // one of each strategy
}

TEST_CASE("validate_genome reports placeholder and parameter violations") {
    GeneratorGenome g = qr_genome();
    g.stage1.prompt_template += " {unknown}";
    const auto v1 = validate_genome(g);
    REQUIRE(v1.size() == 1);
    CHECK(v1[0].find("{unknown}") != std::string::npos);

    GeneratorGenome batch = qr_genome();
    batch.stage1.kind = Stage1Kind::BatchedAutoregressive;
    batch.stage1.batch_size = 0;
    CHECK(!validate_genome(batch).empty());

    GeneratorGenome src = qr_genome();
    src.stage1.sequence_source = "dice";
    CHECK(!validate_genome(src).empty());

    GeneratorGenome window = qr_genome(0.8, 0.5);  // origin + span > 1
    CHECK(!validate_genome(window).empty());

    GeneratorGenome blank = qr_genome();
    blank.stage2_template = "";
    CHECK(!validate_genome(blank).empty());

    CHECK(validate_genome(qr_genome(0.0, 0.5)).empty());  // degenerate window is legal
}

TEST_CASE("genome json round trip preserves all fields") {
    const auto seeds = load_seed_genomes(kData);
    for (const GeneratorGenome& g : seeds) {
        const GeneratorGenome back = parse_genome(genome_to_json(g));
        CHECK(genome_to_json(back) == genome_to_json(g));
    }
    CHECK_THROWS_AS(parse_genome(json{{"genome_id", "x"}}), ValidationError);
    CHECK_THROWS_AS(parse_genome(json{{"genome_id", "x"},
                                      {"stage1", {{"kind", "bogus"}}},
                                      {"stage2", json::object()}}),
                    ValidationError);
}

TEST_CASE("quasirandom stage 1 embeds the pinned sobol prefix, echo backend") {
    EchoClient echo;
    GenerationOptions options;
    options.parallelism = 1;
    const PopulationResult r =
        generate_population(qr_genome(), "ctx", {"axis"}, 4, echo, options);
    REQUIRE(r.personas.size() == 4);
    REQUIRE(r.descriptors.size() == 4);
    const double expected[4] = {0.0, 0.5, 0.75, 0.25};
    const char* rendered[4] = {"0.0000", "0.5000", "0.7500", "0.2500"};
    for (int i = 0; i < 4; ++i) {
        REQUIRE(r.descriptors[i].position.has_value());
        CHECK((*r.descriptors[i].position)[0] == expected[i]);
        CHECK(r.descriptors[i].trait_summary.find(rendered[i]) != std::string::npos);
        CHECK(!r.personas[i].name.empty());
        CHECK(!r.personas[i].description.empty());
    }
}

TEST_CASE("quasirandom positions respect the sampling window") {
    MockGeneratorClient mock(1);
    const PopulationResult r =
        generate_population(qr_genome(0.2, 0.4), "ctx", {"a", "b"}, 16, mock);
    for (const auto& d : r.descriptors) {
        REQUIRE(d.position.has_value());
        for (double v : *d.position) {
            CHECK(v >= 0.4);
            CHECK(v <= 0.6000001);
        }
    }
}

TEST_CASE("seeded-uniform positions are deterministic per seed") {
    GeneratorGenome g = qr_genome();
    g.stage1.sequence_source = "seeded-uniform";
    MockGeneratorClient mock(1);
    GenerationOptions options;
    options.seed = 42;
    const auto a = generate_population(g, "c", {"x"}, 8, mock, options);
    const auto b = generate_population(g, "c", {"x"}, 8, mock, options);
    for (std::size_t i = 0; i < 8; ++i) CHECK(*a.descriptors[i].position == *b.descriptors[i].position);
    options.seed = 43;
    const auto c = generate_population(g, "c", {"x"}, 8, mock, options);
    bool any_diff = false;
    for (std::size_t i = 0; i < 8; ++i)
        if (*a.descriptors[i].position != *c.descriptors[i].position) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("single persona generation works for every strategy") {
    MockGeneratorClient mock(9);
    const auto seeds = load_seed_genomes(kData);
    for (const GeneratorGenome& g : seeds) {
        const PopulationResult r = generate_population(g, "ctx", {"a", "b"}, 1, mock);
        REQUIRE(r.personas.size() == 1);
        CHECK(!r.personas[0].name.empty());
    }
}

TEST_CASE("generation is deterministic for a fixed genome, seed, and mock") {
    MockGeneratorClient mock(5);
    const auto seeds = load_seed_genomes(kData);
    for (const GeneratorGenome& g : seeds) {
        GenerationOptions options;
        options.seed = 11;
        const auto a = generate_population(g, "ctx", {"a", "b"}, 10, mock, options);
        const auto b = generate_population(g, "ctx", {"a", "b"}, 10, mock, options);
        REQUIRE(a.personas.size() == b.personas.size());
        for (std::size_t i = 0; i < a.personas.size(); ++i) {
            CHECK(a.personas[i].name == b.personas[i].name);
            CHECK(a.personas[i].description == b.personas[i].description);
        }
    }
}

TEST_CASE("names are unique even past the mock name pool") {
    MockGeneratorClient mock(2);
    GeneratorGenome g = load_seed_genomes(kData)[0];  // batched autoregressive sorts first
    const PopulationResult r = generate_population(g, "ctx", {"a"}, 60, mock);
    std::set<std::string> names;
    for (const Persona& p : r.personas) names.insert(p.name);
    CHECK(names.size() == 60);
}

TEST_CASE("stage-1 name collisions are repaired with numeric suffixes") {
    json dup = json::array();
    for (int i = 0; i < 3; ++i) dup.push_back({{"name", "Same"}, {"summary", "s"}});
    CannedClient canned({}, json_block(dup));
    GeneratorGenome g;
    g.genome_id = "dup-test";
    g.stage1.kind = Stage1Kind::FormativeMemory;
    g.stage1.prompt_template = "make {N} personas for {context}";
    g.stage2_template = "expand {name}: {descriptor}";
    const PopulationResult r = generate_population(g, "c", {"x"}, 3, canned);
    CHECK(r.personas[0].name == "Same");
    CHECK(r.personas[1].name == "Same-2");
    CHECK(r.personas[2].name == "Same-3");
}

TEST_CASE("unusable stage-1 output raises StageFailure after retries") {
    CannedClient junk({}, std::string("no json here"));
    GeneratorGenome g;
    g.genome_id = "junk-test";
    g.stage1.kind = Stage1Kind::FormativeMemory;
    g.stage1.prompt_template = "make {N} personas";
    g.stage2_template = "expand {name}";
    GenerationOptions options;
    options.max_retries = 2;
    try {
        generate_population(g, "c", {"x"}, 3, junk, options);
        FAIL("expected StageFailureError");
    } catch (const StageFailureError& e) {
        CHECK(e.stage == 1);
        CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }
}

TEST_CASE("invalid genomes and counts are rejected before any call") {
    EchoClient echo;
    GeneratorGenome bad = qr_genome();
    bad.stage1.prompt_template = "{nope}";
    CHECK_THROWS_AS(generate_population(bad, "c", {"x"}, 2, echo), ValidationError);
    CHECK_THROWS_AS(generate_population(qr_genome(), "c", {"x"}, 0, echo), ValidationError);
}

TEST_CASE("stage 2 is invariant to the expansion order") {
    MockGeneratorClient mock(3);
    GeneratorGenome g = qr_genome();
    GenerationOptions serial;
    serial.parallelism = 1;
    GenerationOptions wide;
    wide.parallelism = 8;
    const auto a = generate_population(g, "ctx", {"a", "b"}, 20, mock, serial);
    const auto b = generate_population(g, "ctx", {"a", "b"}, 20, mock, wide);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(a.personas[i].name == b.personas[i].name);
        CHECK(a.personas[i].description == b.personas[i].description);
    }
}

TEST_CASE("population jsonl round trip keeps names, descriptions, and positions") {
    MockGeneratorClient mock(4);
    const PopulationResult r = generate_population(qr_genome(), "ctx", {"a", "b"}, 6, mock);
    const std::string path = "/tmp/pforge_population.jsonl";
    write_population_jsonl(r, path);
    const PopulationResult back = load_population_jsonl(path);
    REQUIRE(back.personas.size() == r.personas.size());
    for (std::size_t i = 0; i < r.personas.size(); ++i) {
        CHECK(back.personas[i].name == r.personas[i].name);
        CHECK(back.personas[i].description == r.personas[i].description);
        CHECK(*back.descriptors[i].position == *r.descriptors[i].position);
    }
}

TEST_CASE("latent extraction uses positions when present, clustered hashes otherwise") {
    MockGeneratorClient mock(6);
    const PopulationResult positioned = generate_population(qr_genome(), "c", {"a", "b"}, 8, mock);
    const auto reg1 = latent_registry_from(positioned, 2, 1);
    for (const auto& d : positioned.descriptors)
        CHECK(reg1.at(d.name) == *d.position);

    GeneratorGenome fm = load_seed_genomes(kData)[1];  // formative memory
    REQUIRE(fm.stage1.kind == Stage1Kind::FormativeMemory);
    const PopulationResult unpositioned = generate_population(fm, "c", {"a", "b"}, 8, mock);
    const auto reg2 = latent_registry_from(unpositioned, 2, 1);
    for (const auto& [name, latent] : reg2) {
        for (double v : latent) {
            CHECK(v >= 0.35);
            CHECK(v <= 0.65);
        }
    }
}
