#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pforge/metrics.hpp"
#include "pforge/questionnaire.hpp"

namespace pforge {

class LlmClient;

struct Persona {
    std::string name;
    std::string description;
};

struct ItemTranscript {
    std::size_t item_index = 0;
    std::string prompt;
    std::string reply;            // last reply received
    std::optional<int> choice;    // parsed 0-based index, or missing
    int retries = 0;
};

struct PersonaTranscript {
    std::string persona;
    std::vector<ItemTranscript> items;
};

struct SimulationOptions {
    int max_parse_retries = 3;
    int parallelism = 1;
};

// Lenient answer extraction: the first integer in the reply, interpreted
// against the 1-based display numbering; out-of-range values count as
// unparseable.
std::optional<int> parse_choice_reply(const std::string& reply, int n_choices);

// Fresh single-shot prompt for one item: persona description, the three
// appropriateness questions, the rendered item, the numbered choice list, and
// the machine-readable sim marker. No state carries across items.
std::string build_item_prompt(const Persona& p, const Questionnaire& q, std::size_t item_index);

// Asks one item; retries unparseable replies up to max_retries, then records
// the answer as missing (never fatal).
std::optional<int> ask_question(const Persona& p, const Questionnaire& q, std::size_t item_index,
                                LlmClient& llm, int max_retries = 3,
                                ItemTranscript* transcript = nullptr);

struct PersonaSimResult {
    std::vector<double> embedding;
    ResponseRecord record;
    PersonaTranscript transcript;
};

PersonaSimResult simulate_persona(const Persona& p, const Questionnaire& q, LlmClient& llm,
                                  const SimulationOptions& options = {});

struct PopulationSimResult {
    PointSet embeddings;
    std::vector<PersonaTranscript> transcripts;
};

// Row i of the embeddings is simulate_persona(personas[i]); rows keep the
// input order and the result is independent of the parallelism degree.
PopulationSimResult simulate_population(const std::vector<Persona>& personas,
                                        const Questionnaire& q, LlmClient& llm,
                                        const SimulationOptions& options = {});

void write_transcripts_jsonl(const std::vector<PersonaTranscript>& transcripts,
                             const std::string& path);

}  // namespace pforge
