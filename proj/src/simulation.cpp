#include "pforge/simulation.hpp"

#include <atomic>
#include <cctype>
#include <fstream>
#include <set>
#include <thread>

#include "pforge/llm_client.hpp"
#include "pforge/mock_persona.hpp"
#include "pforge/rng.hpp"

namespace pforge {

namespace {

std::string render_player(const std::string& templ, const std::string& name) {
    std::string out;
    out.reserve(templ.size());
    std::size_t pos = 0;
    const std::string placeholder = "{player_name}";
    while (true) {
        const std::size_t at = templ.find(placeholder, pos);
        if (at == std::string::npos) {
            out.append(templ, pos, std::string::npos);
            return out;
        }
        out.append(templ, pos, at - pos);
        out += name;
        pos = at + placeholder.size();
    }
}

}  // namespace

std::optional<int> parse_choice_reply(const std::string& reply, int n_choices) {
    for (std::size_t i = 0; i < reply.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
        std::size_t end = i;
        while (end < reply.size() && std::isdigit(static_cast<unsigned char>(reply[end])) &&
               end - i < 9)
            ++end;
        const int value = std::stoi(reply.substr(i, end - i));
        if (value >= 1 && value <= n_choices) return value - 1;
        return std::nullopt;  // an integer was given but it is not a valid choice
    }
    return std::nullopt;
}

std::string build_item_prompt(const Persona& p, const Questionnaire& q, std::size_t item_index) {
    if (p.name.empty()) throw ValidationError("persona name must be non-empty");
    if (item_index >= q.items.size())
        throw ValidationError("item index out of range: " + std::to_string(item_index));
    const Question& item = q.items[item_index];

    std::string prompt;
    prompt += "Role-play exercise.\n\n";
    if (!q.context.empty()) prompt += q.context + "\n\n";
    prompt += "Persona:\n" + p.description + "\n\n";
    prompt += "To decide how " + p.name + " answers, reason through:\n";
    prompt += "1. What kind of situation is this?\n";
    prompt += "2. What kind of person is " + p.name + "?\n";
    prompt += "3. What does a person like " + p.name + " do in a situation like this?\n\n";
    if (!item.preprompt.empty()) prompt += render_player(item.preprompt, p.name) + "\n";
    prompt += "\"" + render_player(item.statement, p.name) + "\"\n\nPossible answers:\n";
    for (int c = 0; c < item.scale.size(); ++c)
        prompt += "  " + std::to_string(c + 1) + ". " + item.scale.labels[c] + "\n";
    prompt += "\nReply with only the number of the single answer that best matches " + p.name +
              "'s view.\n";

    SimMarker marker;
    marker.persona = p.name;
    marker.item_index = static_cast<int>(item_index);
    marker.item_key = fnv1a(item.preprompt + "\x1f" + item.statement + "\x1f" + item.dimension +
                            (item.ascending ? "\x1f1" : "\x1f0"));
    marker.dimension = item.dimension;
    marker.dimension_index = q.dimension_index(item.dimension);
    marker.ascending = item.ascending;
    marker.choices = item.scale.size();
    prompt += format_sim_marker(marker) + "\n";
    return prompt;
}

std::optional<int> ask_question(const Persona& p, const Questionnaire& q, std::size_t item_index,
                                LlmClient& llm, int max_retries, ItemTranscript* transcript) {
    const std::string prompt = build_item_prompt(p, q, item_index);
    const int levels = q.items[item_index].scale.size();
    std::string reply;
    std::optional<int> choice;
    int attempt = 0;
    for (; attempt <= max_retries; ++attempt) {
        CompletionRequest request;
        request.prompt = prompt;
        request.max_tokens = 16;
        request.temperature = 0.0;
        reply = llm.complete(request);
        choice = parse_choice_reply(reply, levels);
        if (choice) break;
    }
    if (transcript) {
        transcript->item_index = item_index;
        transcript->prompt = prompt;
        transcript->reply = reply;
        transcript->choice = choice;
        transcript->retries = std::min(attempt, max_retries);
    }
    return choice;
}

PersonaSimResult simulate_persona(const Persona& p, const Questionnaire& q, LlmClient& llm,
                                  const SimulationOptions& options) {
    q.validate();
    PersonaSimResult result;
    result.record.persona_id = p.name;
    result.transcript.persona = p.name;
    result.record.choices.resize(q.items.size());
    result.transcript.items.resize(q.items.size());
    // Memory reset: every item gets a fresh prompt, nothing carries over.
    for (std::size_t i = 0; i < q.items.size(); ++i) {
        result.record.choices[i] = ask_question(p, q, i, llm, options.max_parse_retries,
                                                &result.transcript.items[i]);
    }
    result.embedding = aggregate_embedding(q, result.record);
    return result;
}

PopulationSimResult simulate_population(const std::vector<Persona>& personas,
                                        const Questionnaire& q, LlmClient& llm,
                                        const SimulationOptions& options) {
    if (personas.empty()) throw ValidationError("simulate_population: empty population");
    std::set<std::string> names;
    for (const Persona& p : personas) {
        if (p.name.empty()) throw ValidationError("simulate_population: persona with empty name");
        if (!names.insert(p.name).second)
            throw ValidationError("simulate_population: duplicate persona name \"" + p.name +
                                  "\"");
    }

    const std::size_t n = personas.size();
    std::vector<PersonaSimResult> results(n);
    std::vector<std::exception_ptr> errors(n);

    const int workers = std::max(1, std::min<int>(options.parallelism, static_cast<int>(n)));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                results[i] = simulate_persona(personas[i], q, llm, options);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) {
            try {
                std::rethrow_exception(errors[i]);
            } catch (const std::exception& e) {
                throw RuntimeFailure("simulation failed for persona \"" + personas[i].name +
                                     "\": " + e.what());
            }
        }
    }

    PopulationSimResult out{PointSet(q.dimension_count()), {}};
    out.transcripts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.embeddings.push_row(std::span<const double>(results[i].embedding));
        out.transcripts.push_back(std::move(results[i].transcript));
    }
    return out;
}

void write_transcripts_jsonl(const std::vector<PersonaTranscript>& transcripts,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write transcript file: " + path);
    for (const PersonaTranscript& pt : transcripts) {
        for (const ItemTranscript& it : pt.items) {
            nlohmann::json record = {{"persona", pt.persona},
                                     {"item", it.item_index},
                                     {"prompt", it.prompt},
                                     {"reply", it.reply},
                                     {"retries", it.retries}};
            if (it.choice) record["choice"] = *it.choice;
            else record["choice"] = nullptr;
            out << record.dump() << "\n";
        }
    }
}

}  // namespace pforge
