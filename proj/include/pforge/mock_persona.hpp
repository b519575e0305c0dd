#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pforge/llm_client.hpp"

namespace pforge {

class UnknownPersonaError : public RuntimeFailure {
public:
    using RuntimeFailure::RuntimeFailure;
};

// Machine-readable echo line the simulation module appends to every item
// prompt. Real models ignore it; mock backends parse it to answer
// deterministically. item_key identifies the item by content, so jitter
// streams survive reordering of the questionnaire.
struct SimMarker {
    std::string persona;
    int item_index = 0;
    std::uint64_t item_key = 0;
    std::string dimension;
    int dimension_index = 0;
    bool ascending = true;
    int choices = 0;
};

std::string format_sim_marker(const SimMarker& marker);
std::optional<SimMarker> parse_sim_marker(const std::string& prompt);

// Deterministic stand-in for the role-play model: answers each item with the
// choice index nearest to the persona's latent trait on the item's dimension
// (reflected for reverse-coded items), with seeded Gaussian jitter applied
// before quantization. The jitter stream depends only on
// (seed, persona name, item index), never on call order.
class MockPersonaClient : public LlmClient {
public:
    MockPersonaClient(std::map<std::string, std::vector<double>> registry, double noise_sd,
                      std::uint64_t seed);

    std::string complete(const CompletionRequest& request) override;

private:
    std::map<std::string, std::vector<double>> registry_;
    double noise_sd_;
    std::uint64_t seed_;
};

}  // namespace pforge
