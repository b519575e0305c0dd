#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pforge/errors.hpp"

namespace pforge {

class LlmClient;

struct LikertScale {
    std::vector<std::string> labels;  // ordered lowest to highest endorsement

    int size() const { return static_cast<int>(labels.size()); }
    void validate() const;
};

struct Question {
    std::string preprompt;  // template with {player_name}
    std::string statement;  // template with {player_name}
    LikertScale scale;
    bool ascending = true;  // false = reverse-coded
    std::string dimension;
};

// The questionnaire tuple: context text, K diversity axes, and Likert items.
struct Questionnaire {
    std::string title;
    std::string context;
    std::string short_context;
    std::vector<std::string> dimensions;
    std::vector<Question> items;

    int dimension_count() const { return static_cast<int>(dimensions.size()); }
    int dimension_index(const std::string& dim) const;  // -1 if absent
    void validate() const;
};

// Per-persona answers: one choice index (or missing) per item, item order
// matching Questionnaire::items.
struct ResponseRecord {
    std::string persona_id;
    std::vector<std::optional<int>> choices;
};

class UnknownDimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class EmptyDimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class GenerationFailedError : public RuntimeFailure {
public:
    GenerationFailedError(const std::string& what, std::string transcript)
        : RuntimeFailure(what), transcript(std::move(transcript)) {}
    std::string transcript;
};

Questionnaire parse_questionnaire(const nlohmann::json& doc);
Questionnaire load_questionnaire(const std::string& path);
nlohmann::json questionnaire_to_json(const Questionnaire& q);
void save_questionnaire(const Questionnaire& q, const std::string& path);

// Resolves files/directories to the sorted list of *.json questionnaire files.
std::vector<std::string> list_corpus_files(const std::vector<std::string>& paths);

// Loads every *.json questionnaire under one or more files/directories.
std::vector<Questionnaire> load_corpus(const std::vector<std::string>& paths);

// Maps a 0-based choice index to the unit interval. Reverse-coded items are
// reflected before normalization, so both codings share the same L-point grid.
double encode_response(const Question& q, int choice_index);

// Mean encoded score per dimension over the non-missing responses.
// Throws EmptyDimensionError if a dimension has only missing answers.
std::vector<double> aggregate_embedding(const Questionnaire& q, const ResponseRecord& r);

struct QuestionnaireGenOptions {
    int max_retries = 3;
    int max_tokens = 4096;
    double temperature = 0.7;
};

// Two-step LLM synthesis: expand a short description into context/dimensions,
// then generate Likert items per axis; the result passes load validation.
Questionnaire generate_questionnaire(const std::string& short_description,
                                     const std::vector<Questionnaire>& examples, LlmClient& llm,
                                     const QuestionnaireGenOptions& options = {});

}  // namespace pforge
