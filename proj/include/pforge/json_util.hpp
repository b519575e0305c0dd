#pragma once

#include <string>

#include <json.hpp>

#include "pforge/errors.hpp"

namespace pforge {

inline std::string json_block(const nlohmann::json& j) {
    return "```json\n" + j.dump(2) + "\n```";
}

// Extracts the first JSON object/array from free-form model text, preferring a
// fenced code block when one is present.
inline nlohmann::json extract_json(const std::string& text, bool want_array) {
    const char open = want_array ? '[' : '{';
    const char close = want_array ? ']' : '}';
    std::string body = text;
    const std::size_t fence = text.find("```");
    if (fence != std::string::npos) {
        const std::size_t start = text.find('\n', fence);
        const std::size_t end = text.find("```", fence + 3);
        if (start != std::string::npos && end != std::string::npos && end > start)
            body = text.substr(start + 1, end - start - 1);
    }
    const std::size_t first = body.find(open);
    const std::size_t last = body.rfind(close);
    if (first == std::string::npos || last == std::string::npos || last < first)
        throw ValidationError("no JSON payload found in model reply");
    return nlohmann::json::parse(body.substr(first, last - first + 1));
}

}  // namespace pforge
