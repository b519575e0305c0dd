#include "pforge/questionnaire.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "pforge/json_util.hpp"
#include "pforge/llm_client.hpp"

namespace pforge {

namespace fs = std::filesystem;
using nlohmann::json;

void LikertScale::validate() const {
    if (labels.size() < 2) throw ValidationError("likert scale needs at least 2 labels");
    std::set<std::string> seen;
    for (const std::string& label : labels) {
        if (label.empty()) throw ValidationError("likert scale label must be non-empty");
        if (!seen.insert(label).second)
            throw ValidationError("likert scale labels must be distinct: \"" + label + "\"");
    }
}

int Questionnaire::dimension_index(const std::string& dim) const {
    for (std::size_t i = 0; i < dimensions.size(); ++i)
        if (dimensions[i] == dim) return static_cast<int>(i);
    return -1;
}

void Questionnaire::validate() const {
    if (dimensions.empty()) throw ValidationError("questionnaire needs at least one dimension");
    std::set<std::string> dims(dimensions.begin(), dimensions.end());
    if (dims.size() != dimensions.size())
        throw ValidationError("questionnaire dimensions must be distinct");
    if (items.empty()) throw ValidationError("questionnaire needs at least one item");

    std::optional<std::size_t> scale_len;
    std::vector<int> per_dim(dimensions.size(), 0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Question& item = items[i];
        try {
            item.scale.validate();
        } catch (const ValidationError& e) {
            throw ValidationError("item " + std::to_string(i) + ": " + e.what());
        }
        if (item.statement.empty())
            throw ValidationError("item " + std::to_string(i) + ": empty statement");
        const int di = dimension_index(item.dimension);
        if (di < 0)
            throw UnknownDimensionError("item " + std::to_string(i) +
                                        ": unknown dimension \"" + item.dimension + "\"");
        ++per_dim[di];
        // Mixed scale lengths within one questionnaire are rejected rather than
        // renormalized; the dimension mean is only well-defined on one grid.
        if (!scale_len) scale_len = item.scale.labels.size();
        else if (*scale_len != item.scale.labels.size())
            throw ValidationError("item " + std::to_string(i) +
                                  ": mixed scale lengths within one questionnaire");
    }
    for (std::size_t d = 0; d < dimensions.size(); ++d)
        if (per_dim[d] == 0)
            throw ValidationError("dimension \"" + dimensions[d] + "\" has no items");
}

Questionnaire parse_questionnaire(const json& doc) {
    if (!doc.is_object()) throw ValidationError("questionnaire document must be a JSON object");
    Questionnaire q;
    q.title = doc.value("title", "");
    if (!doc.contains("context") || !doc["context"].is_string())
        throw ValidationError("questionnaire: missing string field \"context\"");
    q.context = doc["context"].get<std::string>();
    q.short_context = doc.value("short_context", "");
    if (!doc.contains("dimensions") || !doc["dimensions"].is_array())
        throw ValidationError("questionnaire: missing array field \"dimensions\"");
    for (const auto& d : doc["dimensions"]) {
        if (!d.is_string()) throw ValidationError("questionnaire: dimensions must be strings");
        q.dimensions.push_back(d.get<std::string>());
    }
    if (!doc.contains("items") || !doc["items"].is_array())
        throw ValidationError("questionnaire: missing array field \"items\"");
    std::size_t index = 0;
    for (const auto& it : doc["items"]) {
        if (!it.is_object())
            throw ValidationError("item " + std::to_string(index) + ": must be an object");
        Question item;
        item.preprompt = it.value("preprompt", "");
        if (!it.contains("statement") || !it["statement"].is_string())
            throw ValidationError("item " + std::to_string(index) + ": missing \"statement\"");
        item.statement = it["statement"].get<std::string>();
        if (!it.contains("choices") || !it["choices"].is_array())
            throw ValidationError("item " + std::to_string(index) + ": missing \"choices\"");
        for (const auto& c : it["choices"]) {
            if (!c.is_string())
                throw ValidationError("item " + std::to_string(index) + ": choices must be strings");
            item.scale.labels.push_back(c.get<std::string>());
        }
        item.ascending = it.value("ascending", true);
        if (!it.contains("dimension") || !it["dimension"].is_string())
            throw ValidationError("item " + std::to_string(index) + ": missing \"dimension\"");
        item.dimension = it["dimension"].get<std::string>();
        q.items.push_back(std::move(item));
        ++index;
    }
    q.validate();
    return q;
}

Questionnaire load_questionnaire(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open questionnaire file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("questionnaire " + path + ": invalid JSON: " + e.what());
    }
    Questionnaire q = parse_questionnaire(doc);
    if (q.title.empty()) q.title = fs::path(path).stem().string();
    return q;
}

json questionnaire_to_json(const Questionnaire& q) {
    json doc;
    if (!q.title.empty()) doc["title"] = q.title;
    doc["context"] = q.context;
    if (!q.short_context.empty()) doc["short_context"] = q.short_context;
    doc["dimensions"] = q.dimensions;
    json items = json::array();
    for (const Question& item : q.items) {
        items.push_back({{"preprompt", item.preprompt},
                         {"statement", item.statement},
                         {"choices", item.scale.labels},
                         {"ascending", item.ascending},
                         {"dimension", item.dimension}});
    }
    doc["items"] = std::move(items);
    return doc;
}

void save_questionnaire(const Questionnaire& q, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write questionnaire file: " + path);
    out << questionnaire_to_json(q).dump(2) << "\n";
}

std::vector<std::string> list_corpus_files(const std::vector<std::string>& paths) {
    std::vector<std::string> files;
    for (const std::string& p : paths) {
        if (fs::is_directory(p)) {
            for (const auto& entry : fs::directory_iterator(p))
                if (entry.path().extension() == ".json") files.push_back(entry.path().string());
        } else if (fs::exists(p)) {
            files.push_back(p);
        } else {
            throw ValidationError("corpus path does not exist: " + p);
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<Questionnaire> load_corpus(const std::vector<std::string>& paths) {
    const std::vector<std::string> files = list_corpus_files(paths);
    std::vector<Questionnaire> corpus;
    corpus.reserve(files.size());
    for (const std::string& f : files) corpus.push_back(load_questionnaire(f));
    if (corpus.empty()) throw ValidationError("corpus is empty");
    return corpus;
}

double encode_response(const Question& q, int choice_index) {
    const int levels = q.scale.size();
    if (choice_index < 0 || choice_index >= levels)
        throw ValidationError("choice index " + std::to_string(choice_index) +
                              " out of range for " + std::to_string(levels) + "-point scale");
    int raw = choice_index + 1;  // 1..L
    if (!q.ascending) raw = levels + 1 - raw;
    return static_cast<double>(raw - 1) / static_cast<double>(levels - 1);
}

std::vector<double> aggregate_embedding(const Questionnaire& q, const ResponseRecord& r) {
    if (r.choices.size() != q.items.size())
        throw ValidationError("response record has " + std::to_string(r.choices.size()) +
                              " choices for " + std::to_string(q.items.size()) + " items");
    const std::size_t K = q.dimensions.size();
    std::vector<double> sums(K, 0.0);
    std::vector<int> counts(K, 0);
    for (std::size_t i = 0; i < q.items.size(); ++i) {
        if (!r.choices[i]) continue;
        const int di = q.dimension_index(q.items[i].dimension);
        sums[di] += encode_response(q.items[i], *r.choices[i]);
        ++counts[di];
    }
    std::vector<double> z(K);
    for (std::size_t d = 0; d < K; ++d) {
        if (counts[d] == 0)
            throw EmptyDimensionError("dimension \"" + q.dimensions[d] +
                                      "\" has no answered items for persona \"" + r.persona_id +
                                      "\"");
        z[d] = sums[d] / counts[d];
    }
    return z;
}

namespace {

const std::vector<std::string> kDefaultScale = {
    "Strongly disagree", "Disagree", "Neither agree nor disagree", "Agree", "Strongly agree"};

}  // namespace

Questionnaire generate_questionnaire(const std::string& short_description,
                                     const std::vector<Questionnaire>& examples, LlmClient& llm,
                                     const QuestionnaireGenOptions& options) {
    if (short_description.empty())
        throw ValidationError("generate_questionnaire: short description must be non-empty");
    if (examples.empty())
        throw ValidationError("generate_questionnaire: at least one few-shot example required");

    std::string fewshot;
    for (const Questionnaire& ex : examples) {
        fewshot += "Example questionnaire:\n" + json_block(questionnaire_to_json(ex)) + "\n\n";
    }

    std::string transcript;
    std::string last_error = "unknown";
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        try {
            // Step 1: expand the short description into a context plus axes.
            CompletionRequest step1;
            step1.prompt =
                fewshot +
                "You design psychometric survey instruments.\n"
                "Short description of the instrument to create:\n\"" + short_description +
                "\"\n\n"
                "Step 1: expand the short description into a detailed survey context (a few "
                "sentences) and propose 2-3 named axes of diversity the instrument should "
                "measure. Reply with a JSON object of the form\n"
                "{\"context\": \"...\", \"dimensions\": [\"axis one\", \"axis two\"]}\n"
                "and nothing else.";
            step1.max_tokens = options.max_tokens;
            step1.temperature = options.temperature;
            const std::string reply1 = llm.complete(step1);
            transcript += "### step1 prompt\n" + step1.prompt + "\n### step1 reply\n" + reply1 + "\n";
            const json head = extract_json(reply1, /*want_array=*/false);
            if (!head.contains("context") || !head.contains("dimensions"))
                throw ValidationError("step 1 reply missing context/dimensions");

            // Step 2: items per axis on a 5-point scale.
            CompletionRequest step2;
            step2.prompt =
                "Survey context:\n" + head["context"].get<std::string>() +
                "\n\nAxes of diversity: " + head["dimensions"].dump() +
                "\n\nStep 2: write 3-6 Likert items per axis. Statements must be written in "
                "third person about a subject called {player_name}. Mark reverse-coded items "
                "with \"ascending\": false. Reply with a JSON array of objects of the form\n"
                "{\"preprompt\": \"...\", \"statement\": \"...\", \"dimension\": \"...\", "
                "\"ascending\": true}\n"
                "and nothing else. Use each axis name exactly as given.";
            step2.max_tokens = options.max_tokens;
            step2.temperature = options.temperature;
            const std::string reply2 = llm.complete(step2);
            transcript += "### step2 prompt\n" + step2.prompt + "\n### step2 reply\n" + reply2 + "\n";
            json items = extract_json(reply2, /*want_array=*/true);

            json doc;
            doc["context"] = head["context"];
            doc["short_context"] = short_description;
            doc["dimensions"] = head["dimensions"];
            for (auto& it : items) {
                if (!it.contains("choices")) it["choices"] = kDefaultScale;
                if (!it.contains("preprompt"))
                    it["preprompt"] =
                        "How strongly does {player_name} agree or disagree with the following "
                        "statement?";
            }
            doc["items"] = std::move(items);
            return parse_questionnaire(doc);
        } catch (const ValidationError& e) {
            last_error = e.what();
            transcript += "### attempt " + std::to_string(attempt) + " failed: " + last_error + "\n";
        } catch (const json::exception& e) {
            last_error = e.what();
            transcript += "### attempt " + std::to_string(attempt) + " failed: " + last_error + "\n";
        }
    }
    throw GenerationFailedError("questionnaire generation failed after " +
                                    std::to_string(options.max_retries + 1) +
                                    " attempts: " + last_error,
                                transcript);
}

}  // namespace pforge
