#include "pforge/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "pforge/json_util.hpp"
#include "pforge/run_store.hpp"
#include "pforge/rng.hpp"
#include "pforge/simulation.hpp"

namespace pforge {

namespace fs = std::filesystem;
using nlohmann::json;

json candidate_to_json(const Candidate& c) {
    json reports = json::array();
    for (const MetricReport& r : c.reports) reports.push_back(report_to_json(r));
    json feedback = json::array();
    for (const FeedbackSample& f : c.feedback)
        feedback.push_back({{"name", f.name},
                            {"description", f.description},
                            {"embedding", f.embedding}});
    json out = {{"candidate_id", c.candidate_id},
                {"genome", genome_to_json(c.genome)},
                {"reports", std::move(reports)},
                {"mean", report_to_json(c.mean_report)},
                {"feedback", std::move(feedback)},
                {"iteration", c.iteration},
                {"failed", c.failed}};
    if (c.parent_id) out["parent_id"] = *c.parent_id;
    if (!c.failure_reason.empty()) out["failure_reason"] = c.failure_reason;
    return out;
}

Candidate candidate_from_json(const json& j) {
    Candidate c;
    c.candidate_id = j.at("candidate_id").get<std::string>();
    if (j.contains("parent_id")) c.parent_id = j["parent_id"].get<std::string>();
    c.genome = parse_genome(j.at("genome"));
    for (const auto& r : j.at("reports")) c.reports.push_back(report_from_json(r));
    c.mean_report = report_from_json(j.at("mean"));
    for (const auto& f : j.value("feedback", json::array())) {
        FeedbackSample s;
        s.name = f.at("name").get<std::string>();
        s.description = f.value("description", "");
        s.embedding = f.value("embedding", std::vector<double>{});
        c.feedback.push_back(std::move(s));
    }
    c.iteration = j.value("iteration", 0);
    c.failed = j.value("failed", false);
    c.failure_reason = j.value("failure_reason", "");
    return c;
}

const char* elite_metric_name(EliteMetric m) {
    switch (m) {
        case EliteMetric::Coverage: return "coverage";
        case EliteMetric::HullVolume: return "hull_volume";
        case EliteMetric::MinPairwise: return "min_pairwise";
        case EliteMetric::MeanPairwise: return "mean_pairwise";
        case EliteMetric::Dispersion: return "dispersion";
        case EliteMetric::KlDivergence: return "kl";
    }
    return "unknown";
}

double elite_metric_value(const MetricReport& r, EliteMetric m) {
    switch (m) {
        case EliteMetric::Coverage: return r.coverage;
        case EliteMetric::HullVolume: return r.hull_volume;
        case EliteMetric::MinPairwise: return r.min_pairwise;
        case EliteMetric::MeanPairwise: return r.mean_pairwise;
        case EliteMetric::Dispersion: return r.dispersion;
        case EliteMetric::KlDivergence: return r.kl_divergence;
    }
    return 0.0;
}

bool elite_improves(const MetricReport& challenger, const MetricReport& incumbent, EliteMetric m) {
    const double c = elite_metric_value(challenger, m);
    const double i = elite_metric_value(incumbent, m);
    if (m == EliteMetric::Dispersion || m == EliteMetric::KlDivergence) return c < i;
    return c > i;
}

bool Island::empty() const {
    for (const auto& e : elites)
        if (e) return false;
    return true;
}

double Island::best_aggregate() const {
    double best = -1.0;
    for (const auto& e : elites)
        if (e) best = std::max(best, e->mean_report.aggregate);
    return best;
}

void EvolutionConfig::validate() const {
    if (n_islands < 1) throw ValidationError("evolution config: n_islands must be >= 1");
    if (iterations < 0) throw ValidationError("evolution config: iterations must be >= 0");
    if (extinction_period < 1)
        throw ValidationError("evolution config: extinction_period must be >= 1");
    if (!(reset_fraction > 0.0 && reset_fraction < 1.0))
        throw ValidationError("evolution config: reset_fraction must lie in (0,1)");
    if (n_personas < 2) throw ValidationError("evolution config: n_personas must be >= 2");
    if (feedback_sample_size < 0)
        throw ValidationError("evolution config: feedback_sample_size must be >= 0");
    coverage.validate();
}

json EvolutionConfig::to_json() const {
    json seeds = json::array();
    for (const GeneratorGenome& g : seed_genomes) seeds.push_back(genome_to_json(g));
    return json{{"n_islands", n_islands},
                {"iterations", iterations},
                {"extinction_period", extinction_period},
                {"reset_fraction", reset_fraction},
                {"n_personas", n_personas},
                {"feedback_sample_size", feedback_sample_size},
                {"seed", seed},
                {"parallelism", parallelism},
                {"generation_retries", generation_retries},
                {"simulation_retries", simulation_retries},
                {"mutation_retries", mutation_retries},
                {"coverage",
                 {{"n_samples", coverage.n_samples},
                  {"target_fraction", coverage.target_fraction},
                  {"trials", coverage.trials},
                  {"seed", coverage.seed}}},
                {"corpus_paths", corpus_paths},
                {"data_dir", data_dir},
                {"seed_genomes", std::move(seeds)}};
}

EvolutionConfig EvolutionConfig::from_json(const json& j) {
    EvolutionConfig cfg;
    cfg.n_islands = j.value("n_islands", cfg.n_islands);
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.extinction_period = j.value("extinction_period", cfg.extinction_period);
    cfg.reset_fraction = j.value("reset_fraction", cfg.reset_fraction);
    cfg.n_personas = j.value("n_personas", cfg.n_personas);
    cfg.feedback_sample_size = j.value("feedback_sample_size", cfg.feedback_sample_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    cfg.generation_retries = j.value("generation_retries", cfg.generation_retries);
    cfg.simulation_retries = j.value("simulation_retries", cfg.simulation_retries);
    cfg.mutation_retries = j.value("mutation_retries", cfg.mutation_retries);
    if (j.contains("coverage")) {
        const json& cov = j["coverage"];
        cfg.coverage.n_samples = cov.value("n_samples", cfg.coverage.n_samples);
        cfg.coverage.target_fraction = cov.value("target_fraction", cfg.coverage.target_fraction);
        cfg.coverage.trials = cov.value("trials", cfg.coverage.trials);
        cfg.coverage.seed = cov.value("seed", cfg.coverage.seed);
    }
    cfg.corpus_paths = j.value("corpus_paths", cfg.corpus_paths);
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    for (const auto& g : j.value("seed_genomes", json::array()))
        cfg.seed_genomes.push_back(parse_genome(g));
    return cfg;
}

MutationPromptLibrary MutationPromptLibrary::load(const std::string& data_dir) {
    MutationPromptLibrary lib;
    {
        std::ifstream in(data_dir + "/mutation_system_prompt.txt");
        if (!in)
            throw ValidationError("cannot open " + data_dir + "/mutation_system_prompt.txt");
        std::string line;
        while (std::getline(in, line)) lib.system_context += line + "\n";
    }
    {
        std::ifstream in(data_dir + "/mutation_prompts.txt");
        if (!in) throw ValidationError("cannot open " + data_dir + "/mutation_prompts.txt");
        std::string line, block;
        auto flush = [&] {
            if (!block.empty()) {
                while (!block.empty() && block.back() == '\n') block.pop_back();
                lib.prompts.push_back(block);
                block.clear();
            }
        };
        while (std::getline(in, line)) {
            if (line.empty()) flush();
            else if (line[0] != '#') block += line + "\n";
        }
        flush();
    }
    if (lib.prompts.empty())
        throw ValidationError("mutation prompt library is empty: " + data_dir);
    return lib;
}

std::vector<GeneratorGenome> load_seed_genomes(const std::string& data_dir) {
    const std::string dir = data_dir + "/seed_genomes";
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    std::vector<GeneratorGenome> seeds;
    for (const std::string& f : files) seeds.push_back(load_genome(f));
    if (seeds.empty()) throw ValidationError("no seed genomes under " + dir);
    return seeds;
}

CalibrationCache::CalibrationCache(std::string path) : path_(std::move(path)) {
    if (path_.empty()) return;
    std::ifstream in(path_);
    if (!in) return;
    json doc;
    try {
        in >> doc;
        for (auto& [k, v] : doc.items()) entries_[k] = v.get<double>();
    } catch (const json::exception&) {
        entries_.clear();
    }
}

std::string CalibrationCache::key(std::size_t population_size, int dimension,
                                  const CoverageConfig& cfg) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "n=%zu,k=%d,samples=%zu,target=%.6g,trials=%zu,seed=%llu",
                  population_size, dimension, cfg.n_samples, cfg.target_fraction, cfg.trials,
                  static_cast<unsigned long long>(cfg.seed));
    return buf;
}

double CalibrationCache::radius(std::size_t population_size, int dimension,
                                const CoverageConfig& cfg) {
    const std::string k = key(population_size, dimension, cfg);
    {
        std::lock_guard guard(mutex_);
        const auto it = entries_.find(k);
        if (it != entries_.end()) return it->second;
    }
    const double r = calibrate_radius(population_size, dimension, cfg);
    std::lock_guard guard(mutex_);
    entries_[k] = r;
    save_locked();
    return r;
}

void CalibrationCache::save_locked() {
    if (path_.empty()) return;
    json doc = json::object();
    for (const auto& [k, v] : entries_) doc[k] = v;
    std::ofstream out(path_);
    if (out) out << doc.dump(2) << "\n";
}

namespace {

std::string truncate_text(const std::string& s, std::size_t limit) {
    if (s.size() <= limit) return s;
    return s.substr(0, limit) + "...";
}

MetricReport mean_of(const std::vector<MetricReport>& reports) {
    MetricReport m{};
    if (reports.empty()) return m;
    for (const MetricReport& r : reports) {
        m.coverage += r.coverage;
        m.hull_volume += r.hull_volume;
        m.min_pairwise += r.min_pairwise;
        m.mean_pairwise += r.mean_pairwise;
        m.dispersion += r.dispersion;
        m.kl_divergence += r.kl_divergence;
        m.aggregate += r.aggregate;
        m.radius_used += r.radius_used;
    }
    const auto n = static_cast<double>(reports.size());
    m.coverage /= n;
    m.hull_volume /= n;
    m.min_pairwise /= n;
    m.mean_pairwise /= n;
    m.dispersion /= n;
    m.kl_divergence /= n;
    m.aggregate /= n;
    m.radius_used /= n;
    return m;
}

}  // namespace

Candidate evaluate_candidate(const GeneratorGenome& genome,
                             const std::vector<Questionnaire>& corpus,
                             const EvolutionConfig& cfg, const EvalBackend& backend,
                             CalibrationCache& cache, std::uint64_t eval_seed) {
    Candidate candidate;
    candidate.genome = genome;
    candidate.candidate_id = genome.genome_id;
    if (corpus.empty()) {
        candidate.failed = true;
        candidate.failure_reason = "empty questionnaire batch";
        return candidate;
    }
    for (std::size_t qi = 0; qi < corpus.size(); ++qi) {
        const Questionnaire& q = corpus[qi];
        try {
            const double radius = cache.radius(cfg.n_personas, q.dimension_count(), cfg.coverage);

            GenerationOptions gen_options;
            gen_options.max_retries = cfg.generation_retries;
            gen_options.seed = mix_seed(eval_seed, "generation", qi);
            gen_options.parallelism = cfg.parallelism;
            const PopulationResult population = generate_population(
                genome, q.context, q.dimensions, cfg.n_personas, *backend.generation, gen_options);

            const auto sim_client = backend.simulation_factory(population, q);
            SimulationOptions sim_options;
            sim_options.max_parse_retries = cfg.simulation_retries;
            sim_options.parallelism = cfg.parallelism;
            const PopulationSimResult sim =
                simulate_population(population.personas, q, *sim_client, sim_options);

            CoverageConfig report_cfg = cfg.coverage;
            report_cfg.seed = mix_seed(eval_seed, "report", qi);
            candidate.reports.push_back(metric_report(sim.embeddings, radius, report_cfg));

            if (qi == 0 && cfg.feedback_sample_size > 0) {
                Rng rng(mix_seed(eval_seed, "feedback"));
                std::vector<std::size_t> order(population.personas.size());
                std::iota(order.begin(), order.end(), 0);
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[rng.index(i)]);
                const std::size_t take =
                    std::min<std::size_t>(cfg.feedback_sample_size, order.size());
                for (std::size_t i = 0; i < take; ++i) {
                    const std::size_t pick = order[i];
                    FeedbackSample sample;
                    sample.name = population.personas[pick].name;
                    sample.description = truncate_text(population.personas[pick].description, 400);
                    const auto row = sim.embeddings.row(pick);
                    sample.embedding.assign(row.begin(), row.end());
                    candidate.feedback.push_back(std::move(sample));
                }
            }
        } catch (const std::exception& e) {
            candidate.failed = true;
            candidate.failure_reason =
                "questionnaire \"" + (q.title.empty() ? std::to_string(qi) : q.title) +
                "\": " + e.what();
            candidate.reports.clear();
            candidate.feedback.clear();
            return candidate;
        }
    }
    candidate.mean_report = mean_of(candidate.reports);
    return candidate;
}

MutationOutcome mutate(const Candidate& parent, const MutationPromptLibrary& library,
                       LlmClient& mutator, const EvolutionConfig& cfg, int iteration) {
    MutationOutcome outcome;
    Rng rng(mix_seed(cfg.seed, "mutation-prompt", static_cast<std::uint64_t>(iteration)));
    outcome.prompt_index = static_cast<int>(rng.index(library.prompts.size()));

    std::string prompt = library.system_context;
    prompt += "\nMutation instruction:\n" + library.prompts[outcome.prompt_index] + "\n";
    prompt += "\nCurrent generator genome:\n" + json_block(genome_to_json(parent.genome)) + "\n";
    if (!parent.feedback.empty()) {
        prompt += "\nSample personas produced by this genome with their measured positions along "
                  "the diversity axes (0 = lowest, 1 = highest):\n";
        for (const FeedbackSample& f : parent.feedback) {
            prompt += "- " + f.name + " scored [";
            for (std::size_t d = 0; d < f.embedding.size(); ++d) {
                char num[32];
                std::snprintf(num, sizeof(num), "%.3f", f.embedding[d]);
                prompt += std::string(d ? ", " : "") + num;
            }
            prompt += "]: " + f.description + "\n";
        }
    }
    char scores[256];
    std::snprintf(scores, sizeof(scores),
                  "\nParent mean scores: coverage=%.4f hull=%.4f min_pair=%.4f mean_pair=%.4f "
                  "dispersion=%.4f kl=%.4f aggregate=%.4f\n",
                  parent.mean_report.coverage, parent.mean_report.hull_volume,
                  parent.mean_report.min_pairwise, parent.mean_report.mean_pairwise,
                  parent.mean_report.dispersion, parent.mean_report.kl_divergence,
                  parent.mean_report.aggregate);
    prompt += scores;
    prompt += "\nApply the mutation instruction to the genome and reply with the complete "
              "mutated genome as a JSON document in the same schema, inside a ```json fence. "
              "Keep the two-stage structure.\n";
    prompt += "<!-- mut iter=" + std::to_string(iteration) + " -->\n";

    for (int attempt = 0; attempt <= cfg.mutation_retries; ++attempt) {
        CompletionRequest request;
        request.prompt = prompt;
        request.max_tokens = 4096;
        request.temperature = 1.0;
        outcome.raw_reply = mutator.complete(request);
        try {
            GeneratorGenome child = parse_genome(extract_json(outcome.raw_reply, false));
            GeneratorGenome probe = child;
            if (probe.genome_id.empty()) probe.genome_id = "pending";  // assigned by the loop
            const auto violations = validate_genome(probe);
            if (!violations.empty()) {
                std::string all;
                for (const auto& v : violations) all += v + "; ";
                throw ValidationError(all);
            }
            child.genome_id = probe.genome_id;
            outcome.genome = std::move(child);
            return outcome;
        } catch (const std::exception& e) {
            outcome.error = e.what();
        }
    }
    return outcome;  // genome empty = rejected, iteration burned
}

void extinction(std::vector<Island>& islands, double reset_fraction, std::uint64_t seed,
                int iteration, RunStore* store) {
    if (islands.size() < 2)
        throw ValidationError("extinction requires at least 2 islands");
    std::vector<std::size_t> order(islands.size());
    std::iota(order.begin(), order.end(), 0);
    // Best aggregate first; ties keep the lowest island_id on top.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ba = islands[a].best_aggregate();
        const double bb = islands[b].best_aggregate();
        if (ba != bb) return ba > bb;
        return islands[a].island_id < islands[b].island_id;
    });
    const auto n_reset = static_cast<std::size_t>(
        std::floor(static_cast<double>(islands.size()) * reset_fraction));
    if (n_reset == 0) return;
    const std::size_t n_keep = islands.size() - n_reset;

    auto roster = [&](void) {
        json out = json::object();
        for (const Island& island : islands) {
            json slots = json::array();
            for (const auto& e : island.elites) slots.push_back(e ? json(e->candidate_id) : json());
            out[std::to_string(island.island_id)] = std::move(slots);
        }
        return out;
    };
    const json before = roster();

    Rng rng(mix_seed(seed, "extinction", static_cast<std::uint64_t>(iteration)));
    json ranking = json::array();
    for (std::size_t r : order) ranking.push_back(islands[r].island_id);
    json reset_ids = json::array();
    for (std::size_t r = n_keep; r < order.size(); ++r) {
        Island& victim = islands[order[r]];
        reset_ids.push_back(victim.island_id);
        victim.recent.clear();
        for (int slot = 0; slot < kEliteSlots; ++slot) {
            const Island& source = islands[order[rng.index(n_keep)]];
            victim.elites[slot] = source.elites[slot];
        }
    }
    if (store)
        store->append_event({{"iter", iteration},
                             {"type", "extinction"},
                             {"ranking", std::move(ranking)},
                             {"reset", std::move(reset_ids)},
                             {"before", before},
                             {"after", roster()}});
}

namespace {

json islands_to_json(const std::vector<Island>& islands) {
    json out = json::array();
    for (const Island& island : islands) {
        json slots = json::array();
        for (const auto& e : island.elites) slots.push_back(e ? candidate_to_json(*e) : json());
        out.push_back({{"island_id", island.island_id},
                       {"elites", std::move(slots)},
                       {"recent", island.recent}});
    }
    return out;
}

std::vector<Island> islands_from_json(const json& j) {
    std::vector<Island> islands;
    for (const auto& ij : j) {
        Island island;
        island.island_id = ij.at("island_id").get<int>();
        const json& slots = ij.at("elites");
        for (int s = 0; s < kEliteSlots; ++s)
            if (!slots[s].is_null()) island.elites[s] = candidate_from_json(slots[s]);
        island.recent = ij.value("recent", std::vector<std::string>{});
        islands.push_back(std::move(island));
    }
    return islands;
}

void write_elite_files(const std::vector<Island>& islands, RunStore& store) {
    const std::string dir = store.path("elites");
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove(entry.path());
    for (const Island& island : islands) {
        for (int slot = 0; slot < kEliteSlots; ++slot) {
            if (!island.elites[slot]) continue;
            char name[128];
            std::snprintf(name, sizeof(name), "%s/island%02d_%s.json", dir.c_str(),
                          island.island_id, elite_metric_name(static_cast<EliteMetric>(slot)));
            save_genome(island.elites[slot]->genome, name);
        }
    }
}

// Applies a successfully evaluated candidate to its island's elite slots.
void update_elites(Island& island, const Candidate& candidate, int iteration, RunStore& store) {
    for (int slot = 0; slot < kEliteSlots; ++slot) {
        const auto metric = static_cast<EliteMetric>(slot);
        const auto& incumbent = island.elites[slot];
        if (!incumbent || elite_improves(candidate.mean_report, incumbent->mean_report, metric)) {
            store.append_event({{"iter", iteration},
                                {"type", "elite_update"},
                                {"island", island.island_id},
                                {"metric", elite_metric_name(metric)},
                                {"old", incumbent ? json(incumbent->candidate_id) : json()},
                                {"new", candidate.candidate_id}});
            island.elites[slot] = candidate;
        }
    }
    island.recent.push_back(candidate.candidate_id);
    if (island.recent.size() > 16) island.recent.erase(island.recent.begin());
}

}  // namespace

EvolutionResult run_evolution(const EvolutionConfig& cfg_in,
                              const std::vector<Questionnaire>& corpus,
                              const EvolutionDeps& deps, const std::string& run_dir,
                              std::optional<int> stop_after) {
    EvolutionConfig cfg = cfg_in;
    cfg.validate();
    if (corpus.empty()) throw ValidationError("run_evolution: empty corpus");
    if (cfg.seed_genomes.empty()) cfg.seed_genomes = load_seed_genomes(cfg.data_dir);
    const MutationPromptLibrary library = MutationPromptLibrary::load(cfg.data_dir);

    RunStore store(run_dir);
    store.lock();
    CalibrationCache cache(store.path("calibration_cache.json"));

    std::vector<Island> islands;
    int done_iteration = -1;
    double best_aggregate = -1.0;
    std::string best_candidate_id;

    if (const auto checkpoint = store.read_checkpoint()) {
        islands = islands_from_json(checkpoint->at("islands"));
        done_iteration = checkpoint->at("iteration").get<int>();
        best_aggregate = checkpoint->value("best_aggregate", -1.0);
        best_candidate_id = checkpoint->value("best_candidate", "");
        store.truncate_logs(done_iteration);
    } else {
        store.write_json("config.snapshot", cfg.to_json());
    }

    auto checkpoint_now = [&](int iteration) {
        store.write_checkpoint({{"iteration", iteration},
                                {"best_aggregate", best_aggregate},
                                {"best_candidate", best_candidate_id},
                                {"islands", islands_to_json(islands)}});
    };
    auto log_candidate = [&](int iteration, int island_id, const Candidate& c) {
        store.append_candidate({{"iter", iteration},
                                {"island", island_id},
                                {"candidate", candidate_to_json(c)},
                                {"best_so_far", best_aggregate}});
    };
    auto absorb = [&](const Candidate& c) {
        if (!c.failed && c.mean_report.aggregate > best_aggregate) {
            best_aggregate = c.mean_report.aggregate;
            best_candidate_id = c.candidate_id;
        }
    };

    if (done_iteration < 0) {
        // Round-robin seeding: island i starts from seed genome i mod |seeds|.
        islands.resize(cfg.n_islands);
        for (int i = 0; i < cfg.n_islands; ++i) {
            islands[i].island_id = i;
            GeneratorGenome genome = cfg.seed_genomes[i % cfg.seed_genomes.size()];
            char id[32];
            std::snprintf(id, sizeof(id), "seed-%02d", i);
            genome.genome_id = id;
            Candidate seeded = evaluate_candidate(genome, corpus, cfg, deps.backend, cache,
                                                  mix_seed(cfg.seed, "eval-seed", i));
            seeded.candidate_id = id;
            seeded.iteration = 0;
            absorb(seeded);
            store.append_event({{"iter", 0},
                                {"type", "seeded"},
                                {"island", i},
                                {"candidate", seeded.candidate_id},
                                {"failed", seeded.failed}});
            if (!seeded.failed) update_elites(islands[i], seeded, 0, store);
            log_candidate(0, i, seeded);
        }
        done_iteration = 0;
        checkpoint_now(0);
    }

    EvolutionResult result;
    for (int t = done_iteration + 1; t <= cfg.iterations; ++t) {
        const int island_idx = (t - 1) % cfg.n_islands;
        Island& island = islands[island_idx];
        if (island.empty()) {
            store.append_event({{"iter", t}, {"type", "skipped_empty_island"}, {"island", island_idx}});
        } else {
            Rng slot_rng(mix_seed(cfg.seed, "parent-slot", static_cast<std::uint64_t>(t)));
            const int slot = static_cast<int>(slot_rng.index(kEliteSlots));
            const Candidate& parent = *island.elites[slot];

            MutationOutcome outcome = mutate(parent, library, *deps.mutator, cfg, t);
            store.append_event({{"iter", t},
                                {"type", "mutation"},
                                {"island", island_idx},
                                {"parent", parent.candidate_id},
                                {"slot", elite_metric_name(static_cast<EliteMetric>(slot))},
                                {"prompt_index", outcome.prompt_index}});
            if (!outcome.genome) {
                store.append_event({{"iter", t},
                                    {"type", "mutation_rejected"},
                                    {"island", island_idx},
                                    {"parent", parent.candidate_id},
                                    {"error", outcome.error},
                                    {"raw_reply", truncate_text(outcome.raw_reply, 400)}});
            } else {
                char id[32];
                std::snprintf(id, sizeof(id), "cand-%05d", t);
                outcome.genome->genome_id = id;
                Candidate child = evaluate_candidate(*outcome.genome, corpus, cfg, deps.backend,
                                                     cache, mix_seed(cfg.seed, "eval", t));
                child.candidate_id = id;
                child.parent_id = parent.candidate_id;
                child.iteration = t;
                if (child.failed) {
                    store.append_event({{"iter", t},
                                        {"type", "candidate_failed"},
                                        {"island", island_idx},
                                        {"candidate", child.candidate_id},
                                        {"reason", child.failure_reason}});
                } else {
                    absorb(child);
                    update_elites(island, child, t, store);
                }
                log_candidate(t, island_idx, child);
            }
        }

        if (cfg.n_islands >= 2 && t % cfg.extinction_period == 0)
            extinction(islands, cfg.reset_fraction, cfg.seed, t, &store);

        checkpoint_now(t);
        if (stop_after && t >= *stop_after && t < cfg.iterations) {
            write_elite_files(islands, store);
            result.islands = islands;
            result.best_aggregate = best_aggregate;
            result.best_candidate_id = best_candidate_id;
            result.completed_iterations = t;
            return result;
        }
    }

    write_elite_files(islands, store);
    result.islands = islands;
    result.best_aggregate = best_aggregate;
    result.best_candidate_id = best_candidate_id;
    result.completed_iterations = cfg.iterations;
    return result;
}

}  // namespace pforge
