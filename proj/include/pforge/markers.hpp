#pragma once

#include <optional>
#include <string>

namespace pforge::markers {

// Attribute helpers for the machine-readable `<!-- ... -->` echo lines that
// the generator and simulation modules embed in prompts. Real models ignore
// them; the deterministic mock backends parse them.

std::string escape(const std::string& s);

// Reads ` key="quoted value"` or ` key=token` from a marker body.
std::optional<std::string> attr(const std::string& text, const std::string& key);

}  // namespace pforge::markers
