#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pforge/backend.hpp"
#include "pforge/generator.hpp"
#include "pforge/llm_client.hpp"

namespace pforge {

// Marker the generator embeds in its stage prompts (see markers.hpp).
struct GenMarker {
    int stage = 0;
    std::string kind;
    int count = 0;
    int offset = 0;
    int k = 0;
    int index = 0;
    std::string name;
    std::vector<double> position;
    bool has_position = false;
};

std::optional<GenMarker> parse_gen_marker(const std::string& prompt);

// Deterministic stand-in for the generation model: answers stage-1 prompts
// with schema-valid descriptor batches or "Name:" replies, and stage-2
// prompts with short persona descriptions. Replies are pure functions of
// (prompt, seed), so call order and threading never matter.
class MockGeneratorClient : public LlmClient {
public:
    explicit MockGeneratorClient(std::uint64_t seed) : seed_(seed) {}
    std::string complete(const CompletionRequest& request) override;

private:
    std::uint64_t seed_;
};

// Latent trait per persona for the mock simulation: positioned descriptors
// use their position; unpositioned ones hash their text into a narrow central
// cluster, mirroring how naive prompting collapses to stereotypical profiles.
std::map<std::string, std::vector<double>> latent_registry_from(const PopulationResult& population,
                                                                int dimension,
                                                                std::uint64_t seed);

// Fully deterministic offline backend (the --mock stack).
EvalBackend make_mock_backend(double noise_sd, std::uint64_t seed);

// Deterministic mutator for closed-loop smoke runs: parses the parent genome
// out of the mutation request and widens its quasi-random sampling window
// toward the full cube; periodically returns an unusable reply to exercise
// the rejection path. Behavior depends only on the iteration marker embedded
// in the request, never on call order.
class ScriptedWideningMutator : public LlmClient {
public:
    ScriptedWideningMutator(double widen_factor = 1.5, int reject_every = 7)
        : widen_factor_(widen_factor), reject_every_(reject_every) {}
    std::string complete(const CompletionRequest& request) override;

private:
    double widen_factor_;
    int reject_every_;
};

}  // namespace pforge
