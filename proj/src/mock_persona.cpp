#include "pforge/mock_persona.hpp"

#include <algorithm>
#include <cmath>

#include <cstdio>

#include "pforge/markers.hpp"
#include "pforge/rng.hpp"

namespace pforge {

namespace markers {

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

std::optional<std::string> attr(const std::string& text, const std::string& key) {
    const std::string needle = " " + key + "=";
    const std::size_t at = text.find(needle);
    if (at == std::string::npos) return std::nullopt;
    std::size_t pos = at + needle.size();
    if (pos >= text.size()) return std::nullopt;
    if (text[pos] == '"') {
        std::string out;
        for (++pos; pos < text.size(); ++pos) {
            if (text[pos] == '\\' && pos + 1 < text.size()) {
                out.push_back(text[++pos]);
            } else if (text[pos] == '"') {
                return out;
            } else {
                out.push_back(text[pos]);
            }
        }
        return std::nullopt;
    }
    std::size_t end = pos;
    while (end < text.size() && text[end] != ' ' && text[end] != '-' && text[end] != '\n') ++end;
    return text.substr(pos, end - pos);
}

}  // namespace markers

std::string format_sim_marker(const SimMarker& m) {
    char key[24];
    std::snprintf(key, sizeof(key), "%016llx", static_cast<unsigned long long>(m.item_key));
    return "<!-- sim persona=\"" + markers::escape(m.persona) + "\" item=" +
           std::to_string(m.item_index) + " key=" + key + " dim=\"" +
           markers::escape(m.dimension) + "\" dim_index=" + std::to_string(m.dimension_index) +
           " ascending=" + (m.ascending ? "1" : "0") + " choices=" + std::to_string(m.choices) +
           " -->";
}

std::optional<SimMarker> parse_sim_marker(const std::string& prompt) {
    const std::size_t at = prompt.find("<!-- sim ");
    if (at == std::string::npos) return std::nullopt;
    const std::size_t end = prompt.find("-->", at);
    if (end == std::string::npos) return std::nullopt;
    const std::string body = prompt.substr(at, end - at);
    SimMarker m;
    const auto persona = markers::attr(body, "persona");
    const auto item = markers::attr(body, "item");
    const auto key = markers::attr(body, "key");
    const auto dim = markers::attr(body, "dim");
    const auto dim_index = markers::attr(body, "dim_index");
    const auto ascending = markers::attr(body, "ascending");
    const auto choices = markers::attr(body, "choices");
    if (!persona || !item || !key || !dim || !dim_index || !ascending || !choices)
        return std::nullopt;
    m.persona = *persona;
    m.item_index = std::stoi(*item);
    m.item_key = std::stoull(*key, nullptr, 16);
    m.dimension = *dim;
    m.dimension_index = std::stoi(*dim_index);
    m.ascending = (*ascending == "1");
    m.choices = std::stoi(*choices);
    return m;
}

MockPersonaClient::MockPersonaClient(std::map<std::string, std::vector<double>> registry,
                                     double noise_sd, std::uint64_t seed)
    : registry_(std::move(registry)), noise_sd_(noise_sd), seed_(seed) {}

std::string MockPersonaClient::complete(const CompletionRequest& request) {
    request.validate();
    const auto marker = parse_sim_marker(request.prompt);
    if (!marker)
        throw RuntimeFailure("mock persona backend received a prompt without a sim marker");
    const auto it = registry_.find(marker->persona);
    if (it == registry_.end())
        throw UnknownPersonaError("mock persona backend: unknown persona \"" + marker->persona +
                                  "\"");
    const std::vector<double>& latent = it->second;
    if (marker->dimension_index < 0 ||
        marker->dimension_index >= static_cast<int>(latent.size()))
        throw RuntimeFailure("mock persona backend: dimension index out of range for \"" +
                             marker->persona + "\"");

    double target = latent[marker->dimension_index];
    if (!marker->ascending) target = 1.0 - target;
    if (noise_sd_ > 0.0) {
        // Keyed by item content, not position: reordering items must not
        // change any persona's answers.
        Rng rng(mix_seed({seed_, fnv1a(marker->persona), marker->item_key}));
        target += rng.gauss() * noise_sd_;
    }
    target = std::clamp(target, 0.0, 1.0);
    const int levels = marker->choices;
    auto index = static_cast<int>(std::lround(target * (levels - 1)));
    index = std::clamp(index, 0, levels - 1);
    return std::to_string(index + 1);  // choices are displayed 1-based
}

}  // namespace pforge
