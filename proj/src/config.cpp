#include "pforge/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace pforge {

using nlohmann::json;

namespace {

std::string strip(const std::string& s) {
    const std::size_t first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const std::size_t last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Removes a trailing # comment, respecting double-quoted strings.
std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        else if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

std::string parse_string(const std::string& raw) {
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"')
        throw ValidationError("toml: malformed string: " + raw);
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        if (raw[i] == '\\' && i + 2 < raw.size() + 1) {
            const char c = raw[++i];
            if (c == 'n') out.push_back('\n');
            else if (c == 't') out.push_back('\t');
            else out.push_back(c);
        } else {
            out.push_back(raw[i]);
        }
    }
    return out;
}

json parse_scalar(const std::string& raw) {
    if (raw.empty()) throw ValidationError("toml: empty value");
    if (raw.front() == '"') return parse_string(raw);
    if (raw == "true") return true;
    if (raw == "false") return false;
    // number: integer when it parses exactly, else float
    try {
        std::size_t used = 0;
        if (raw.find('.') == std::string::npos && raw.find('e') == std::string::npos &&
            raw.find('E') == std::string::npos) {
            const long long v = std::stoll(raw, &used);
            if (used == raw.size()) return v;
        } else {
            const double v = std::stod(raw, &used);
            if (used == raw.size()) return v;
        }
    } catch (const std::exception&) {
    }
    throw ValidationError("toml: cannot parse value: " + raw);
}

json parse_value(const std::string& raw) {
    if (!raw.empty() && raw.front() == '[') {
        if (raw.back() != ']') throw ValidationError("toml: unterminated array: " + raw);
        json arr = json::array();
        std::string body = raw.substr(1, raw.size() - 2);
        std::string item;
        bool in_string = false;
        for (std::size_t i = 0; i < body.size(); ++i) {
            const char c = body[i];
            if (c == '"' && (i == 0 || body[i - 1] != '\\')) in_string = !in_string;
            if (c == ',' && !in_string) {
                const std::string trimmed = strip(item);
                if (!trimmed.empty()) arr.push_back(parse_scalar(trimmed));
                item.clear();
            } else {
                item.push_back(c);
            }
        }
        const std::string trimmed = strip(item);
        if (!trimmed.empty()) arr.push_back(parse_scalar(trimmed));
        return arr;
    }
    return parse_scalar(raw);
}

}  // namespace

json parse_toml_subset(const std::string& text) {
    json root = json::object();
    json* section = &root;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ValidationError("toml line " + std::to_string(line_no) +
                                      ": malformed section header");
            const std::string name = strip(line.substr(1, line.size() - 2));
            if (name.empty())
                throw ValidationError("toml line " + std::to_string(line_no) + ": empty section");
            root[name] = json::object();
            section = &root[name];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("toml line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty())
            throw ValidationError("toml line " + std::to_string(line_no) + ": empty key");
        try {
            (*section)[key] = parse_value(value);
        } catch (const ValidationError& e) {
            throw ValidationError("toml line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return root;
}

namespace {

LlmConfig llm_config_from_json(const json& j, LlmConfig base = {}) {
    base.base_url = j.value("base_url", base.base_url);
    base.model_id = j.value("model_id", base.model_id);
    base.api_key_env = j.value("api_key_env", base.api_key_env);
    base.timeout_seconds = j.value("timeout_seconds", base.timeout_seconds);
    base.max_retries = j.value("max_retries", base.max_retries);
    base.backoff_initial_ms = j.value("backoff_initial_ms", base.backoff_initial_ms);
    base.backoff_multiplier = j.value("backoff_multiplier", base.backoff_multiplier);
    base.backoff_max_ms = j.value("backoff_max_ms", base.backoff_max_ms);
    base.max_concurrent_requests = j.value("max_concurrent_requests", base.max_concurrent_requests);
    return base;
}

json llm_config_to_json(const LlmConfig& c) {
    return json{{"base_url", c.base_url},
                {"model_id", c.model_id},
                {"api_key_env", c.api_key_env},
                {"timeout_seconds", c.timeout_seconds},
                {"max_retries", c.max_retries},
                {"backoff_initial_ms", c.backoff_initial_ms},
                {"backoff_multiplier", c.backoff_multiplier},
                {"backoff_max_ms", c.backoff_max_ms},
                {"max_concurrent_requests", c.max_concurrent_requests}};
}

}  // namespace

json AppConfig::to_json() const {
    return json{{"evolution", evolution.to_json()},
                {"llm", llm_config_to_json(llm)},
                {"mutator_llm", llm_config_to_json(mutator_llm)},
                {"mock", {{"enabled", mock.enabled}, {"noise_sd", mock.noise_sd}}}};
}

AppConfig app_config_from_json(const json& doc) {
    AppConfig cfg;
    if (doc.contains("evolution")) cfg.evolution = EvolutionConfig::from_json(doc["evolution"]);
    if (doc.contains("llm")) cfg.llm = llm_config_from_json(doc["llm"]);
    if (doc.contains("mutator_llm")) cfg.mutator_llm = llm_config_from_json(doc["mutator_llm"]);
    else cfg.mutator_llm = cfg.llm;
    if (doc.contains("mock")) {
        cfg.mock.enabled = doc["mock"].value("enabled", cfg.mock.enabled);
        cfg.mock.noise_sd = doc["mock"].value("noise_sd", cfg.mock.noise_sd);
    }
    return cfg;
}

AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    json doc;
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        try {
            doc = json::parse(text);
        } catch (const json::exception& e) {
            throw ValidationError("config " + path + ": invalid JSON: " + e.what());
        }
    } else {
        doc = parse_toml_subset(text);
    }
    return app_config_from_json(doc);
}

}  // namespace pforge
