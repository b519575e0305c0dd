#pragma once

#include <functional>
#include <memory>

#include "pforge/generator.hpp"
#include "pforge/llm_client.hpp"
#include "pforge/questionnaire.hpp"

namespace pforge {

// The seams a candidate evaluation talks through. The simulation client is
// created per (population, questionnaire) so the mock stack can register the
// generated personas' latent traits; the live stack returns one shared client.
struct EvalBackend {
    std::shared_ptr<LlmClient> generation;
    std::function<std::shared_ptr<LlmClient>(const PopulationResult&, const Questionnaire&)>
        simulation_factory;
};

}  // namespace pforge
