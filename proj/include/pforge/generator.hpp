#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pforge/simulation.hpp"

namespace pforge {

class LlmClient;

class UnboundPlaceholderError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class StageFailureError : public RuntimeFailure {
public:
    StageFailureError(const std::string& what, int stage, int index)
        : RuntimeFailure(what), stage(stage), index(index) {}
    int stage;
    int index;
};

enum class Stage1Kind { FormativeMemory, BatchedAutoregressive, QuasiRandomTraits };

std::string to_string(Stage1Kind kind);
Stage1Kind stage1_kind_from_string(const std::string& s);

struct Stage1Spec {
    Stage1Kind kind = Stage1Kind::FormativeMemory;
    std::string prompt_template;
    // BatchedAutoregressive: personas requested per sequential call.
    int batch_size = 5;
    // QuasiRandomTraits: "sobol" or "seeded-uniform" position source, and the
    // sampling window [origin, origin+span] applied per axis.
    std::string sequence_source = "sobol";
    double span = 1.0;
    double origin = 0.0;
};

// The mutable specification of a two-stage persona generator. Stage 1 decides
// population-level positions/descriptors sequentially; stage 2 expands each
// descriptor into a full persona in parallel. Evolution mutates this document.
struct GeneratorGenome {
    std::string genome_id;
    Stage1Spec stage1;
    std::string stage2_template;
    std::string free_text_notes;
};

struct HighLevelDescriptor {
    std::string name;
    std::optional<std::vector<double>> position;  // in [0,1]^K when present
    std::string trait_summary;
};

// Placeholder names allowed in genome templates.
const std::vector<std::string>& genome_placeholders();

// Pure structural check; returns human-readable violations (empty = valid).
std::vector<std::string> validate_genome(const GeneratorGenome& g);

// Literal single-pass substitution of {placeholder} tokens; unbound
// identifier-shaped placeholders raise UnboundPlaceholderError.
std::string render_prompt(const std::string& templ,
                          const std::map<std::string, std::string>& bindings);

GeneratorGenome parse_genome(const nlohmann::json& doc);
nlohmann::json genome_to_json(const GeneratorGenome& g);
GeneratorGenome load_genome(const std::string& path);
void save_genome(const GeneratorGenome& g, const std::string& path);

struct GenerationOptions {
    int max_retries = 3;
    std::uint64_t seed = 0;
    int parallelism = 4;
    int max_tokens = 2048;
    double temperature = 0.9;
};

struct PopulationResult {
    std::vector<Persona> personas;
    std::vector<HighLevelDescriptor> descriptors;  // index-aligned with personas
};

// Runs the two-stage pipeline: exactly n personas with unique names; for
// QuasiRandomTraits, descriptor i carries the i-th low-discrepancy position.
PopulationResult generate_population(const GeneratorGenome& g, const std::string& context,
                                     const std::vector<std::string>& dimensions, std::size_t n,
                                     LlmClient& llm, const GenerationOptions& options = {});

void write_population_jsonl(const PopulationResult& population, const std::string& path);
PopulationResult load_population_jsonl(const std::string& path);

}  // namespace pforge
