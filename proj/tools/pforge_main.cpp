#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "pforge/config.hpp"
#include "pforge/evolution.hpp"
#include "pforge/http_client.hpp"
#include "pforge/manifest.hpp"
#include "pforge/mock_stack.hpp"
#include "pforge/report.hpp"
#include "pforge/rng.hpp"
#include "pforge/run_store.hpp"
#include "pforge/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

#ifndef PFORGE_REPO_DIR
#define PFORGE_REPO_DIR "."
#endif

struct CommonFlags {
    bool mock = false;
    double noise_sd = 0.05;
    std::uint64_t seed = 0;
    std::string data_dir = std::string(PFORGE_REPO_DIR) + "/data";
};

pforge::EvalBackend make_backend(const CommonFlags& flags, const pforge::LlmConfig& llm,
                                 std::shared_ptr<pforge::RequestLog> log) {
    if (flags.mock) return pforge::make_mock_backend(flags.noise_sd, flags.seed);
    auto client = pforge::make_http_client(pforge::LlmConfig::with_env_overrides(llm), log);
    pforge::EvalBackend backend;
    backend.generation = client;
    backend.simulation_factory = [client](const pforge::PopulationResult&,
                                          const pforge::Questionnaire&) { return client; };
    return backend;
}

int cmd_calibrate(std::size_t n, int k, pforge::CoverageConfig cfg, const std::string& cache_path) {
    pforge::CalibrationCache cache(cache_path);
    const double radius = cache.radius(n, k, cfg);
    std::printf("%.17g\n", radius);
    return 0;
}

int cmd_metrics(const std::string& pointset_file, double radius, bool calibrate, bool as_json,
                pforge::CoverageConfig cfg, const std::string& cache_path) {
    const pforge::PointSet z = pforge::load_pointset(pointset_file);
    if (calibrate) {
        pforge::CalibrationCache cache(cache_path);
        radius = cache.radius(z.size(), z.dimension(), cfg);
    }
    if (!(radius > 0.0))
        throw pforge::ValidationError("metrics: pass --radius or --calibrate");
    const pforge::MetricReport report = pforge::metric_report(z, radius, cfg);
    if (as_json) {
        std::cout << pforge::report_to_json(report).dump(2) << "\n";
    } else {
        std::cout << pforge::metric_csv_header() << "\n" << pforge::metric_csv_row(report) << "\n";
    }
    return 0;
}

int cmd_generate(const CommonFlags& flags, const std::string& genome_file,
                 const std::string& questionnaire_file, std::size_t n, const std::string& out_dir,
                 const pforge::LlmConfig& llm, int parallelism) {
    const pforge::GeneratorGenome genome = pforge::load_genome(genome_file);
    const pforge::Questionnaire q = pforge::load_questionnaire(questionnaire_file);

    pforge::RunStore store(out_dir);
    store.lock();
    auto log = std::make_shared<pforge::RequestLog>(store.path("llm_log.jsonl"));
    const pforge::EvalBackend backend = make_backend(flags, llm, log);

    store.write_json("manifest.json",
                     pforge::make_run_manifest("generate", pforge::genome_to_json(genome),
                                               flags.seed, {genome_file, questionnaire_file}));
    pforge::GenerationOptions options;
    options.seed = flags.seed;
    options.parallelism = parallelism;
    auto generation = flags.mock
                          ? backend.generation
                          : std::make_shared<pforge::LoggingClient>(backend.generation, log);
    const pforge::PopulationResult population =
        pforge::generate_population(genome, q.context, q.dimensions, n, *generation, options);
    pforge::write_population_jsonl(population, store.path("personas.jsonl"));
    std::printf("wrote %zu personas to %s\n", population.personas.size(),
                store.path("personas.jsonl").c_str());
    return 0;
}

int cmd_simulate(const CommonFlags& flags, const std::string& questionnaire_file,
                 const std::string& personas_file, const std::string& out_dir,
                 const pforge::LlmConfig& llm, int parallelism, double radius, bool calibrate,
                 pforge::CoverageConfig cfg) {
    const pforge::Questionnaire q = pforge::load_questionnaire(questionnaire_file);
    const pforge::PopulationResult population = pforge::load_population_jsonl(personas_file);

    pforge::RunStore store(out_dir);
    store.lock();
    auto log = std::make_shared<pforge::RequestLog>(store.path("llm_log.jsonl"));
    const pforge::EvalBackend backend = make_backend(flags, llm, log);
    store.write_json("manifest.json",
                     pforge::make_run_manifest("simulate", pforge::questionnaire_to_json(q),
                                               flags.seed, {questionnaire_file, personas_file}));

    auto sim_client = backend.simulation_factory(population, q);
    if (!flags.mock) sim_client = std::make_shared<pforge::LoggingClient>(sim_client, log);
    pforge::SimulationOptions options;
    options.parallelism = parallelism;
    const pforge::PopulationSimResult sim =
        pforge::simulate_population(population.personas, q, *sim_client, options);
    pforge::save_pointset(sim.embeddings, store.path("pointset.txt"));
    pforge::write_transcripts_jsonl(sim.transcripts, store.path("transcripts.jsonl"));

    if (calibrate) {
        pforge::CalibrationCache cache(store.path("calibration_cache.json"));
        radius = cache.radius(sim.embeddings.size(), sim.embeddings.dimension(), cfg);
    }
    if (radius > 0.0) {
        const pforge::MetricReport report = pforge::metric_report(sim.embeddings, radius, cfg);
        std::cout << pforge::metric_csv_header() << "\n" << pforge::metric_csv_row(report) << "\n";
    }
    std::printf("wrote %s and %s\n", store.path("pointset.txt").c_str(),
                store.path("transcripts.jsonl").c_str());
    return 0;
}

int cmd_evolve(const CommonFlags& flags, pforge::AppConfig app, const std::string& out_dir,
               std::optional<int> stop_after) {
    if (app.evolution.data_dir.empty()) app.evolution.data_dir = flags.data_dir;
    if (app.evolution.corpus_paths.empty())
        throw pforge::ValidationError("evolve: no corpus paths configured");
    const auto corpus_files = pforge::list_corpus_files(app.evolution.corpus_paths);
    const auto corpus = pforge::load_corpus(app.evolution.corpus_paths);

    pforge::EvolutionDeps deps;
    std::shared_ptr<pforge::RequestLog> log;
    if (!flags.mock) {
        fs::create_directories(out_dir);
        log = std::make_shared<pforge::RequestLog>(out_dir + "/llm_log.jsonl");
    }
    deps.backend = make_backend(flags, app.llm, log);
    deps.mutator = flags.mock
                       ? std::static_pointer_cast<pforge::LlmClient>(
                             std::make_shared<pforge::ScriptedWideningMutator>())
                       : pforge::make_http_client(
                             pforge::LlmConfig::with_env_overrides(app.mutator_llm), log);

    {
        pforge::RunStore manifest_store(out_dir);
        if (!fs::exists(manifest_store.path("manifest.json")))
            manifest_store.write_json(
                "manifest.json", pforge::make_run_manifest("evolve", app.to_json(),
                                                           app.evolution.seed, corpus_files));
    }
    const pforge::EvolutionResult result =
        pforge::run_evolution(app.evolution, corpus, deps, out_dir, stop_after);
    std::printf("completed %d iterations; best aggregate %.6f (%s)\n",
                result.completed_iterations, result.best_aggregate,
                result.best_candidate_id.c_str());
    return 0;
}

int cmd_evaluate_archive(const CommonFlags& flags, const std::string& run_dir,
                         const std::vector<std::string>& corpus_paths, const pforge::AppConfig& app,
                         const std::string& out_file) {
    const auto corpus = pforge::load_corpus(corpus_paths);
    std::vector<std::string> genome_files;
    for (const auto& entry : fs::directory_iterator(run_dir + "/elites"))
        if (entry.path().extension() == ".json") genome_files.push_back(entry.path().string());
    std::sort(genome_files.begin(), genome_files.end());
    if (genome_files.empty())
        throw pforge::ValidationError("no elite genomes under " + run_dir + "/elites");

    pforge::EvolutionConfig cfg = app.evolution;
    cfg.corpus_paths = corpus_paths;
    const pforge::EvalBackend backend = make_backend(flags, app.llm, nullptr);
    pforge::CalibrationCache cache(run_dir + "/calibration_cache.json");

    std::ofstream out(out_file);
    if (!out) throw pforge::RuntimeFailure("cannot write " + out_file);
    out << "genome,questionnaire," << pforge::metric_csv_header() << "\n";
    for (const std::string& file : genome_files) {
        pforge::GeneratorGenome genome = pforge::load_genome(file);
        const pforge::Candidate candidate = pforge::evaluate_candidate(
            genome, corpus, cfg, backend, cache,
            pforge::mix_seed(cfg.seed, "evaluate-archive", pforge::fnv1a(file)));
        const std::string stem = fs::path(file).stem().string();
        if (candidate.failed) {
            out << stem << ",FAILED," << candidate.failure_reason << "\n";
            continue;
        }
        for (std::size_t qi = 0; qi < corpus.size(); ++qi)
            out << stem << "," << corpus[qi].title << ","
                << pforge::metric_csv_row(candidate.reports[qi]) << "\n";
        out << stem << ",MEAN," << pforge::metric_csv_row(candidate.mean_report) << "\n";
    }
    std::printf("wrote %s\n", out_file.c_str());
    return 0;
}

int cmd_report(const std::string& run_dir, std::string out_dir) {
    if (out_dir.empty()) out_dir = run_dir;
    const auto curve = pforge::read_run_curve(run_dir + "/candidates.jsonl");
    fs::create_directories(out_dir);
    pforge::write_curve_csv(curve, out_dir + "/curve.csv");
    pforge::write_curve_svg(curve, out_dir + "/curve.svg");
    std::printf("wrote %s/curve.csv and %s/curve.svg (final best aggregate %.6f)\n",
                out_dir.c_str(), out_dir.c_str(), curve.back().best_aggregate);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"persona-forge: diversity-optimized persona generator pipeline"};
    app.require_subcommand(1);

    CommonFlags flags;
    pforge::AppConfig file_config;
    std::string config_file;

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "calibrate the coverage radius for (N, K)");
    std::size_t cal_n = 25;
    int cal_k = 2;
    pforge::CoverageConfig cal_cfg;
    std::string cal_cache = "calibration_cache.json";
    calibrate->add_option("--n", cal_n, "population size")->required();
    calibrate->add_option("--k", cal_k, "dimension")->required();
    calibrate->add_option("--samples", cal_cfg.n_samples, "Monte-Carlo samples per trial");
    calibrate->add_option("--target", cal_cfg.target_fraction, "covered fraction");
    calibrate->add_option("--trials", cal_cfg.trials, "calibration trials");
    calibrate->add_option("--seed", cal_cfg.seed, "random seed");
    calibrate->add_option("--cache", cal_cache, "calibration cache file");

    // metrics
    auto* metrics = app.add_subcommand("metrics", "score a point-set file");
    std::string met_file;
    double met_radius = 0.0;
    bool met_calibrate = false;
    bool met_json = false;
    pforge::CoverageConfig met_cfg;
    std::string met_cache = "calibration_cache.json";
    metrics->add_option("--pointset", met_file, "point-set file (header `K N`)")->required();
    metrics->add_option("--radius", met_radius, "coverage radius k");
    metrics->add_flag("--calibrate", met_calibrate, "calibrate k for this N and K");
    metrics->add_flag("--json", met_json, "emit JSON instead of CSV");
    metrics->add_option("--samples", met_cfg.n_samples, "Monte-Carlo samples");
    metrics->add_option("--trials", met_cfg.trials, "KL/calibration trials");
    metrics->add_option("--seed", met_cfg.seed, "random seed");
    metrics->add_option("--cache", met_cache, "calibration cache file");

    // generate
    auto* generate = app.add_subcommand("generate", "generate a persona population from a genome");
    std::string gen_genome, gen_questionnaire, gen_out = "run";
    std::size_t gen_n = 25;
    int gen_parallelism = 4;
    generate->add_option("--genome", gen_genome, "genome JSON file")->required();
    generate->add_option("--questionnaire", gen_questionnaire, "questionnaire JSON file")->required();
    generate->add_option("--n", gen_n, "population size");
    generate->add_option("--out", gen_out, "run directory");
    generate->add_option("--parallelism", gen_parallelism, "stage-2 parallelism");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "simulate persona responses to a questionnaire");
    std::string sim_questionnaire, sim_personas, sim_out = "run";
    int sim_parallelism = 4;
    double sim_radius = 0.0;
    bool sim_calibrate = false;
    pforge::CoverageConfig sim_cfg;
    simulate->add_option("--questionnaire", sim_questionnaire, "questionnaire JSON file")->required();
    simulate->add_option("--personas", sim_personas, "personas.jsonl from generate")->required();
    simulate->add_option("--out", sim_out, "run directory");
    simulate->add_option("--parallelism", sim_parallelism, "persona parallelism");
    simulate->add_option("--radius", sim_radius, "also emit metrics at this radius");
    simulate->add_flag("--calibrate", sim_calibrate, "calibrate the radius and emit metrics");
    simulate->add_option("--samples", sim_cfg.n_samples, "Monte-Carlo samples");
    simulate->add_option("--trials", sim_cfg.trials, "KL/calibration trials");

    // evolve
    auto* evolve = app.add_subcommand("evolve", "run the island evolution loop");
    std::string evo_out = "run";
    int evo_stop_after = 0;
    evolve->add_option("--out", evo_out, "run directory (resumes if a checkpoint exists)");
    evolve->add_option("--stop-after", evo_stop_after,
                       "stop this session after the given iteration (checkpoint kept)");
    int evo_islands = 0, evo_iterations = -1, evo_extinction = 0, evo_n_personas = 0;
    double evo_reset_fraction = 0.0;
    std::vector<std::string> evo_corpus;
    evolve->add_option("--islands", evo_islands, "override n_islands");
    evolve->add_option("--iterations", evo_iterations, "override iterations");
    evolve->add_option("--extinction-period", evo_extinction, "override extinction period");
    evolve->add_option("--reset-fraction", evo_reset_fraction, "override reset fraction");
    evolve->add_option("--n-personas", evo_n_personas, "override personas per questionnaire");
    evolve->add_option("--corpus", evo_corpus, "override corpus paths");

    // evaluate-archive
    auto* evaluate = app.add_subcommand("evaluate-archive",
                                        "evaluate a run's elite genomes on a held-out corpus");
    std::string eva_run, eva_out = "archive_eval.csv";
    std::vector<std::string> eva_corpus;
    evaluate->add_option("--run", eva_run, "run directory holding elites/")->required();
    evaluate->add_option("--corpus", eva_corpus, "held-out corpus paths")->required();
    evaluate->add_option("--out", eva_out, "output CSV file");

    // report
    auto* report = app.add_subcommand("report", "render best-score curves from a run directory");
    std::string rep_run, rep_out;
    report->add_option("--run", rep_run, "run directory")->required();
    report->add_option("--out", rep_out, "output directory (default: the run directory)");

    for (auto* sub : {generate, simulate, evolve, evaluate}) {
        sub->add_flag("--mock", flags.mock,
                      "use the deterministic offline mock stack instead of LLM backends");
        sub->add_option("--noise", flags.noise_sd, "mock persona noise sd");
        sub->add_option("--seed", flags.seed, "run seed");
        sub->add_option("--data-dir", flags.data_dir, "data assets directory");
        sub->add_option("--config", config_file, "config file (.toml subset or .json)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (!config_file.empty()) file_config = pforge::load_app_config(config_file);
        // flags win over file values
        if (evolve->parsed()) {
            auto& evo = file_config.evolution;
            if (evo_islands > 0) evo.n_islands = evo_islands;
            if (evo_iterations >= 0) evo.iterations = evo_iterations;
            if (evo_extinction > 0) evo.extinction_period = evo_extinction;
            if (evo_reset_fraction > 0.0) evo.reset_fraction = evo_reset_fraction;
            if (evo_n_personas > 0) evo.n_personas = evo_n_personas;
            if (!evo_corpus.empty()) evo.corpus_paths = evo_corpus;
            if (flags.seed != 0) evo.seed = flags.seed;
            else flags.seed = evo.seed;
            if (file_config.mock.enabled) flags.mock = true;
            if (flags.mock) flags.noise_sd = file_config.mock.noise_sd;
        }

        if (calibrate->parsed()) return cmd_calibrate(cal_n, cal_k, cal_cfg, cal_cache);
        if (metrics->parsed())
            return cmd_metrics(met_file, met_radius, met_calibrate, met_json, met_cfg, met_cache);
        if (generate->parsed())
            return cmd_generate(flags, gen_genome, gen_questionnaire, gen_n, gen_out,
                                file_config.llm, gen_parallelism);
        if (simulate->parsed())
            return cmd_simulate(flags, sim_questionnaire, sim_personas, sim_out, file_config.llm,
                                sim_parallelism, sim_radius, sim_calibrate, sim_cfg);
        if (evolve->parsed())
            return cmd_evolve(flags, file_config, evo_out,
                              evo_stop_after > 0 ? std::optional<int>(evo_stop_after)
                                                 : std::nullopt);
        if (evaluate->parsed())
            return cmd_evaluate_archive(flags, eva_run, eva_corpus, file_config, eva_out);
        if (report->parsed()) return cmd_report(rep_run, rep_out);
    } catch (const pforge::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
