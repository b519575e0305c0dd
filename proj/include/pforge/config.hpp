#pragma once

#include <string>

#include <json.hpp>

#include "pforge/evolution.hpp"
#include "pforge/llm_client.hpp"

namespace pforge {

struct MockConfig {
    bool enabled = false;
    double noise_sd = 0.05;
};

// Everything a CLI command needs, resolved from a config file plus flag
// overrides (flags win).
struct AppConfig {
    EvolutionConfig evolution;
    LlmConfig llm;          // role-play + generation model
    LlmConfig mutator_llm;  // mutation operator model
    MockConfig mock;

    nlohmann::json to_json() const;
};

// Minimal TOML subset used for config files: `[section]` headers,
// `key = value` pairs with strings, integers, floats, booleans, and flat
// arrays; `#` comments. Returns one JSON object per section.
nlohmann::json parse_toml_subset(const std::string& text);

// Loads .toml (subset above) or .json config files into an AppConfig.
AppConfig load_app_config(const std::string& path);
AppConfig app_config_from_json(const nlohmann::json& doc);

}  // namespace pforge
