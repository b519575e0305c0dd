#include "pforge/generator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "pforge/json_util.hpp"
#include "pforge/llm_client.hpp"
#include "pforge/markers.hpp"
#include "pforge/quasirandom.hpp"
#include "pforge/rng.hpp"

namespace pforge {

using nlohmann::json;

std::string to_string(Stage1Kind kind) {
    switch (kind) {
        case Stage1Kind::FormativeMemory: return "formative_memory";
        case Stage1Kind::BatchedAutoregressive: return "batched_autoregressive";
        case Stage1Kind::QuasiRandomTraits: return "quasirandom_traits";
    }
    return "unknown";
}

Stage1Kind stage1_kind_from_string(const std::string& s) {
    if (s == "formative_memory") return Stage1Kind::FormativeMemory;
    if (s == "batched_autoregressive") return Stage1Kind::BatchedAutoregressive;
    if (s == "quasirandom_traits") return Stage1Kind::QuasiRandomTraits;
    throw ValidationError("unknown stage1 kind: \"" + s + "\"");
}

const std::vector<std::string>& genome_placeholders() {
    static const std::vector<std::string> names = {
        "context", "dimensions", "dimension_explanations", "N",
        "batch",   "position_vector", "descriptor", "name"};
    return names;
}

namespace {

bool is_identifier(const std::string& token) {
    if (token.empty()) return false;
    for (char c : token)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

// Collects {identifier} tokens; brace pairs holding anything else (JSON in a
// template, say) are left alone.
std::vector<std::string> scan_placeholders(const std::string& templ) {
    std::vector<std::string> found;
    std::size_t pos = 0;
    while ((pos = templ.find('{', pos)) != std::string::npos) {
        const std::size_t end = templ.find('}', pos);
        if (end == std::string::npos) break;
        const std::string token = templ.substr(pos + 1, end - pos - 1);
        if (is_identifier(token)) found.push_back(token);
        pos = pos + 1;
    }
    return found;
}

std::string format_position(const std::vector<double>& position, const char* sep = ", ",
                            bool bracket = true) {
    std::string out = bracket ? "[" : "";
    char buf[32];
    for (std::size_t i = 0; i < position.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.4f", position[i]);
        if (i) out += sep;
        out += buf;
    }
    if (bracket) out += "]";
    return out;
}

}  // namespace

std::vector<std::string> validate_genome(const GeneratorGenome& g) {
    std::vector<std::string> violations;
    if (g.genome_id.empty()) violations.push_back("genome_id must be non-empty");
    if (g.stage1.prompt_template.empty())
        violations.push_back("stage1.prompt_template must be non-empty");
    if (g.stage2_template.empty()) violations.push_back("stage2.expansion_prompt_template must be non-empty");

    const auto& vocabulary = genome_placeholders();
    auto check_template = [&](const std::string& templ, const std::string& where) {
        for (const std::string& token : scan_placeholders(templ)) {
            if (std::find(vocabulary.begin(), vocabulary.end(), token) == vocabulary.end())
                violations.push_back(where + ": unknown placeholder {" + token + "}");
        }
    };
    check_template(g.stage1.prompt_template, "stage1.prompt_template");
    check_template(g.stage2_template, "stage2.expansion_prompt_template");

    switch (g.stage1.kind) {
        case Stage1Kind::BatchedAutoregressive:
            if (g.stage1.batch_size < 1) violations.push_back("stage1.batch_size must be >= 1");
            break;
        case Stage1Kind::QuasiRandomTraits:
            if (g.stage1.sequence_source != "sobol" && g.stage1.sequence_source != "seeded-uniform")
                violations.push_back("stage1.sequence_source must be sobol or seeded-uniform");
            if (!(g.stage1.span >= 0.0 && g.stage1.span <= 1.0))
                violations.push_back("stage1.span must lie in [0,1]");
            if (!(g.stage1.origin >= 0.0 && g.stage1.origin <= 1.0))
                violations.push_back("stage1.origin must lie in [0,1]");
            if (g.stage1.origin + g.stage1.span > 1.0 + 1e-12)
                violations.push_back("stage1.origin + stage1.span must not exceed 1");
            break;
        case Stage1Kind::FormativeMemory:
            break;
    }
    return violations;
}

std::string render_prompt(const std::string& templ,
                          const std::map<std::string, std::string>& bindings) {
    std::string out;
    out.reserve(templ.size());
    std::size_t pos = 0;
    while (pos < templ.size()) {
        const std::size_t open = templ.find('{', pos);
        if (open == std::string::npos) {
            out.append(templ, pos, std::string::npos);
            break;
        }
        out.append(templ, pos, open - pos);
        const std::size_t close = templ.find('}', open);
        if (close == std::string::npos) {
            out.append(templ, open, std::string::npos);
            break;
        }
        const std::string token = templ.substr(open + 1, close - open - 1);
        if (is_identifier(token)) {
            const auto it = bindings.find(token);
            if (it == bindings.end())
                throw UnboundPlaceholderError("unbound placeholder {" + token + "}");
            out += it->second;  // literal substitution, no recursion
        } else {
            out.append(templ, open, close - open + 1);
        }
        pos = close + 1;
    }
    return out;
}

GeneratorGenome parse_genome(const json& doc) {
    if (!doc.is_object()) throw ValidationError("genome document must be a JSON object");
    GeneratorGenome g;
    g.genome_id = doc.value("genome_id", "");
    if (!doc.contains("stage1") || !doc["stage1"].is_object())
        throw ValidationError("genome: missing object field \"stage1\"");
    const json& s1 = doc["stage1"];
    g.stage1.kind = stage1_kind_from_string(s1.value("kind", ""));
    g.stage1.prompt_template = s1.value("prompt_template", "");
    g.stage1.batch_size = s1.value("batch_size", 5);
    g.stage1.sequence_source = s1.value("sequence_source", "sobol");
    g.stage1.span = s1.value("span", 1.0);
    g.stage1.origin = s1.value("origin", 0.0);
    if (!doc.contains("stage2") || !doc["stage2"].is_object())
        throw ValidationError("genome: missing object field \"stage2\"");
    g.stage2_template = doc["stage2"].value("expansion_prompt_template", "");
    g.free_text_notes = doc.value("free_text_notes", "");
    return g;
}

json genome_to_json(const GeneratorGenome& g) {
    json s1 = {{"kind", to_string(g.stage1.kind)},
               {"prompt_template", g.stage1.prompt_template}};
    if (g.stage1.kind == Stage1Kind::BatchedAutoregressive)
        s1["batch_size"] = g.stage1.batch_size;
    if (g.stage1.kind == Stage1Kind::QuasiRandomTraits) {
        s1["sequence_source"] = g.stage1.sequence_source;
        s1["span"] = g.stage1.span;
        s1["origin"] = g.stage1.origin;
    }
    return json{{"genome_id", g.genome_id},
                {"stage1", std::move(s1)},
                {"stage2", {{"expansion_prompt_template", g.stage2_template}}},
                {"free_text_notes", g.free_text_notes}};
}

GeneratorGenome load_genome(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open genome file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("genome " + path + ": invalid JSON: " + e.what());
    }
    return parse_genome(doc);
}

void save_genome(const GeneratorGenome& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write genome file: " + path);
    out << genome_to_json(g).dump(2) << "\n";
}

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string dimension_explanations(const std::vector<std::string>& dims) {
    std::string out;
    for (const std::string& d : dims)
        out += "- " + d + ": ranges from 0 (lowest possible expression) to 1 (highest possible "
               "expression)\n";
    return out;
}

std::string gen_marker_batch(const GeneratorGenome& g, int count, int offset, int k) {
    return "<!-- gen stage=1 kind=" + to_string(g.stage1.kind) +
           " count=" + std::to_string(count) + " offset=" + std::to_string(offset) +
           " k=" + std::to_string(k) + " genome=\"" + markers::escape(g.genome_id) + "\" -->";
}

std::string gen_marker_position(const GeneratorGenome& g, int index,
                                const std::vector<double>& position) {
    return "<!-- gen stage=1 kind=" + to_string(g.stage1.kind) +
           " index=" + std::to_string(index) + " position=\"" +
           format_position(position, ",", false) + "\" genome=\"" +
           markers::escape(g.genome_id) + "\" -->";
}

std::string gen_marker_stage2(const std::string& name,
                              const std::optional<std::vector<double>>& position) {
    std::string m = "<!-- gen stage=2 name=\"" + markers::escape(name) + "\"";
    if (position) m += " position=\"" + format_position(*position, ",", false) + "\"";
    return m + " -->";
}

std::string complete_text(LlmClient& llm, const std::string& prompt,
                          const GenerationOptions& options) {
    CompletionRequest request;
    request.prompt = prompt;
    request.max_tokens = options.max_tokens;
    request.temperature = options.temperature;
    return llm.complete(request);
}

// Stage-1 contract for the batch strategies: a JSON array of
// {"name": ..., "summary": ...} objects.
std::vector<HighLevelDescriptor> parse_descriptor_batch(const std::string& reply,
                                                        std::size_t expected) {
    const json arr = extract_json(reply, /*want_array=*/true);
    if (!arr.is_array() || arr.size() < expected)
        throw ValidationError("stage 1 reply holds " + std::to_string(arr.size()) +
                              " descriptors, expected " + std::to_string(expected));
    std::vector<HighLevelDescriptor> out;
    for (std::size_t i = 0; i < expected; ++i) {
        const json& item = arr[i];
        if (!item.is_object() || !item.contains("name"))
            throw ValidationError("stage 1 descriptor " + std::to_string(i) + " missing name");
        HighLevelDescriptor d;
        d.name = item["name"].is_string() ? item["name"].get<std::string>() : "";
        d.trait_summary = item.value("summary", "");
        out.push_back(std::move(d));
    }
    return out;
}

// Stage-1 contract for per-descriptor calls: an optional "Name: ..." line,
// with the whole reply kept as the trait summary.
std::string parse_name_line(const std::string& reply) {
    std::size_t pos = 0;
    while (pos < reply.size()) {
        std::size_t eol = reply.find('\n', pos);
        if (eol == std::string::npos) eol = reply.size();
        std::string line = reply.substr(pos, eol - pos);
        const std::size_t at = line.find("Name:");
        if (at != std::string::npos) {
            std::string name = line.substr(at + 5);
            const std::size_t first = name.find_first_not_of(" \t");
            const std::size_t last = name.find_last_not_of(" \t\r");
            if (first != std::string::npos) return name.substr(first, last - first + 1);
        }
        pos = eol + 1;
    }
    return "";
}

template <typename Fn>
auto with_stage_retries(int max_retries, int stage, int index, Fn fn) {
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        try {
            return fn();
        } catch (const ValidationError& e) {
            last_error = e.what();
        } catch (const nlohmann::json::exception& e) {
            last_error = e.what();
        }
    }
    throw StageFailureError("stage " + std::to_string(stage) + " failed at index " +
                                std::to_string(index) + " after " +
                                std::to_string(max_retries + 1) + " attempts: " + last_error,
                            stage, index);
}

}  // namespace

PopulationResult generate_population(const GeneratorGenome& g, const std::string& context,
                                     const std::vector<std::string>& dimensions, std::size_t n,
                                     LlmClient& llm, const GenerationOptions& options) {
    if (n < 1) throw ValidationError("generate_population: n must be >= 1");
    const auto violations = validate_genome(g);
    if (!violations.empty())
        throw ValidationError("invalid genome \"" + g.genome_id + "\": " + join(violations, "; "));

    const int k = static_cast<int>(dimensions.size());
    std::map<std::string, std::string> bindings = {
        {"context", context},
        {"dimensions", join(dimensions, ", ")},
        {"dimension_explanations", dimension_explanations(dimensions)},
        {"N", std::to_string(n)},
    };

    // Stage 1: strictly sequential across the population.
    std::vector<HighLevelDescriptor> descriptors;
    descriptors.reserve(n);
    switch (g.stage1.kind) {
        case Stage1Kind::FormativeMemory: {
            auto b = bindings;
            b["batch"] = std::to_string(n);
            const std::string prompt =
                render_prompt(g.stage1.prompt_template, b) +
                "\n\nReply with a JSON array of exactly " + std::to_string(n) +
                " objects, each of the form {\"name\": \"a unique first name\", \"summary\": "
                "\"one-paragraph high-level descriptor\"}.\n" +
                gen_marker_batch(g, static_cast<int>(n), 0, k) + "\n";
            descriptors = with_stage_retries(options.max_retries, 1, 0, [&] {
                return parse_descriptor_batch(complete_text(llm, prompt, options), n);
            });
            break;
        }
        case Stage1Kind::BatchedAutoregressive: {
            std::size_t offset = 0;
            while (offset < n) {
                const std::size_t count = std::min<std::size_t>(g.stage1.batch_size, n - offset);
                auto b = bindings;
                b["batch"] = std::to_string(count);
                std::string prompt = render_prompt(g.stage1.prompt_template, b);
                if (!descriptors.empty()) {
                    std::vector<std::string> names;
                    for (const auto& d : descriptors) names.push_back(d.name);
                    prompt += "\n\nAlready generated (do not repeat): " + join(names, ", ");
                }
                prompt += "\n\nReply with a JSON array of exactly " + std::to_string(count) +
                          " objects, each of the form {\"name\": \"a unique first name\", "
                          "\"summary\": \"one-paragraph high-level descriptor\"}.\n" +
                          gen_marker_batch(g, static_cast<int>(count), static_cast<int>(offset), k) +
                          "\n";
                auto batch = with_stage_retries(options.max_retries, 1,
                                                static_cast<int>(offset), [&] {
                    return parse_descriptor_batch(complete_text(llm, prompt, options), count);
                });
                for (auto& d : batch) descriptors.push_back(std::move(d));
                offset += count;
            }
            break;
        }
        case Stage1Kind::QuasiRandomTraits: {
            std::vector<std::vector<double>> raw;
            if (g.stage1.sequence_source == "sobol") {
                raw = sobol_points(k, n);
            } else {
                Rng rng(mix_seed(options.seed, "qr-uniform-positions"));
                raw.resize(n, std::vector<double>(k));
                for (auto& row : raw)
                    for (double& v : row) v = rng.unit();
            }
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> position(k);
                for (int d = 0; d < k; ++d)
                    position[d] = g.stage1.origin + g.stage1.span * raw[i][d];
                auto b = bindings;
                b["position_vector"] = format_position(position);
                const std::string prompt =
                    render_prompt(g.stage1.prompt_template, b) +
                    "\n\nReply with a line \"Name: <a unique first name>\" followed by the "
                    "high-level trait description.\n" +
                    gen_marker_position(g, static_cast<int>(i), position) + "\n";
                const std::string reply = complete_text(llm, prompt, options);
                HighLevelDescriptor d;
                d.name = parse_name_line(reply);
                d.position = position;
                d.trait_summary = reply;
                descriptors.push_back(std::move(d));
            }
            break;
        }
    }

    // Unique non-empty names, repaired deterministically with numeric suffixes.
    std::set<std::string> seen;
    for (std::size_t i = 0; i < descriptors.size(); ++i) {
        if (descriptors[i].name.empty()) descriptors[i].name = "Persona " + std::to_string(i + 1);
        std::string base = descriptors[i].name;
        int suffix = 2;
        while (!seen.insert(descriptors[i].name).second)
            descriptors[i].name = base + "-" + std::to_string(suffix++);
    }

    // Stage 2: embarrassingly parallel expansion, collected positionally.
    std::vector<Persona> personas(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto expand = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                const HighLevelDescriptor& d = descriptors[i];
                auto b = bindings;
                b["name"] = d.name;
                b["descriptor"] = d.trait_summary;
                if (d.position) b["position_vector"] = format_position(*d.position);
                const std::string prompt = render_prompt(g.stage2_template, b) + "\n" +
                                           gen_marker_stage2(d.name, d.position) + "\n";
                personas[i].name = d.name;
                personas[i].description = with_stage_retries(
                    options.max_retries, 2, static_cast<int>(i), [&] {
                        const std::string reply = complete_text(llm, prompt, options);
                        if (reply.empty()) throw ValidationError("stage 2 reply is empty");
                        return reply;
                    });
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int workers = std::max(1, std::min<int>(options.parallelism, static_cast<int>(n)));
    if (workers == 1) {
        expand();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(expand);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);

    return PopulationResult{std::move(personas), std::move(descriptors)};
}

void write_population_jsonl(const PopulationResult& population, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write population file: " + path);
    for (std::size_t i = 0; i < population.personas.size(); ++i) {
        json record = {{"name", population.personas[i].name},
                       {"description", population.personas[i].description}};
        if (i < population.descriptors.size()) {
            const auto& d = population.descriptors[i];
            record["trait_summary"] = d.trait_summary;
            if (d.position) record["position"] = *d.position;
        }
        out << record.dump() << "\n";
    }
}

PopulationResult load_population_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open population file: " + path);
    PopulationResult out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json record = json::parse(line);
        Persona p;
        p.name = record.at("name").get<std::string>();
        p.description = record.value("description", "");
        HighLevelDescriptor d;
        d.name = p.name;
        d.trait_summary = record.value("trait_summary", "");
        if (record.contains("position")) d.position = record["position"].get<std::vector<double>>();
        out.personas.push_back(std::move(p));
        out.descriptors.push_back(std::move(d));
    }
    if (out.personas.empty()) throw ValidationError("population file is empty: " + path);
    return out;
}

}  // namespace pforge
