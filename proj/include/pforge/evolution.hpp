#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pforge/backend.hpp"
#include "pforge/generator.hpp"
#include "pforge/metrics.hpp"
#include "pforge/questionnaire.hpp"

namespace pforge {

class RunStore;

class MutationRejectedError : public RuntimeFailure {
public:
    MutationRejectedError(const std::string& what, std::string raw_reply)
        : RuntimeFailure(what), raw_reply(std::move(raw_reply)) {}
    std::string raw_reply;
};

struct FeedbackSample {
    std::string name;
    std::string description;  // truncated persona text shown to the mutator
    std::vector<double> embedding;
};

struct Candidate {
    std::string candidate_id;
    std::optional<std::string> parent_id;
    GeneratorGenome genome;
    std::vector<MetricReport> reports;  // one per questionnaire
    MetricReport mean_report{};         // field-wise arithmetic means
    std::vector<FeedbackSample> feedback;
    int iteration = 0;
    bool failed = false;
    std::string failure_reason;
};

nlohmann::json candidate_to_json(const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);

// One elite slot per metric. Directions: maximize coverage, hull volume, min
// and mean pairwise distance; minimize dispersion and KL.
enum class EliteMetric {
    Coverage = 0,
    HullVolume,
    MinPairwise,
    MeanPairwise,
    Dispersion,
    KlDivergence
};
constexpr int kEliteSlots = 6;

const char* elite_metric_name(EliteMetric m);
double elite_metric_value(const MetricReport& r, EliteMetric m);
bool elite_improves(const MetricReport& challenger, const MetricReport& incumbent, EliteMetric m);

struct Island {
    int island_id = 0;
    std::array<std::optional<Candidate>, kEliteSlots> elites;
    std::vector<std::string> recent;  // ring of recent candidate ids

    bool empty() const;
    double best_aggregate() const;  // -1 when empty
};

struct EvolutionConfig {
    int n_islands = 10;
    int iterations = 500;
    int extinction_period = 100;  // iterations between extinction events
    double reset_fraction = 0.5;
    std::size_t n_personas = 25;
    int feedback_sample_size = 3;
    std::uint64_t seed = 0;
    int parallelism = 4;
    int generation_retries = 3;
    int simulation_retries = 3;
    int mutation_retries = 1;  // one retry after a malformed mutation reply
    CoverageConfig coverage;
    std::vector<std::string> corpus_paths;
    std::string data_dir;  // seed genomes + mutation prompt library
    std::vector<GeneratorGenome> seed_genomes;  // loaded from data_dir when empty

    void validate() const;
    nlohmann::json to_json() const;
    static EvolutionConfig from_json(const nlohmann::json& j);
};

struct MutationPromptLibrary {
    std::string system_context;
    std::vector<std::string> prompts;

    // system prompt file + one instruction per blank-line-separated block
    static MutationPromptLibrary load(const std::string& data_dir);
};

std::vector<GeneratorGenome> load_seed_genomes(const std::string& data_dir);

// Thread-safe (N, K, config) -> radius cache with optional JSON persistence.
class CalibrationCache {
public:
    explicit CalibrationCache(std::string path = "");
    double radius(std::size_t population_size, int dimension, const CoverageConfig& cfg);
    static std::string key(std::size_t population_size, int dimension, const CoverageConfig& cfg);

private:
    std::string path_;
    std::map<std::string, double> entries_;
    std::mutex mutex_;

    void save_locked();
};

// Generates, simulates, and scores one genome over the questionnaire batch.
// Any per-questionnaire failure marks the whole candidate failed (it never
// enters elite slots).
Candidate evaluate_candidate(const GeneratorGenome& genome,
                             const std::vector<Questionnaire>& corpus,
                             const EvolutionConfig& cfg, const EvalBackend& backend,
                             CalibrationCache& cache, std::uint64_t eval_seed);

struct MutationOutcome {
    std::optional<GeneratorGenome> genome;  // empty = rejected
    std::string raw_reply;
    int prompt_index = -1;
    std::string error;
};

// One mutation request: system context + a uniformly sampled instruction +
// the parent genome + persona feedback samples. Malformed replies get one
// retry, then the iteration is burned.
MutationOutcome mutate(const Candidate& parent, const MutationPromptLibrary& library,
                       LlmClient& mutator, const EvolutionConfig& cfg, int iteration);

// Resets the bottom reset_fraction of islands with elite copies sampled from
// the surviving islands. Ties rank by island_id (lowest ids survive).
void extinction(std::vector<Island>& islands, double reset_fraction, std::uint64_t seed,
                int iteration, RunStore* store);

struct EvolutionDeps {
    EvalBackend backend;
    std::shared_ptr<LlmClient> mutator;
};

struct EvolutionResult {
    std::vector<Island> islands;
    double best_aggregate = -1.0;
    std::string best_candidate_id;
    int completed_iterations = 0;
};

// The island loop: round-robin seeding from the seed genomes, one mutation
// attempt per iteration (round-robin over islands), per-metric elites,
// periodic extinction, and a per-iteration checkpoint so a killed run resumes
// at the last completed iteration. `stop_after` ends the session early with
// the checkpoint intact (used to exercise resume).
EvolutionResult run_evolution(const EvolutionConfig& cfg, const std::vector<Questionnaire>& corpus,
                              const EvolutionDeps& deps, const std::string& run_dir,
                              std::optional<int> stop_after = {});

}  // namespace pforge
