#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string kCli = PFORGE_CLI;
const std::string kRepo = PFORGE_REPO_DIR;

struct Result {
    int exit_code;
    std::string output;
};

Result run(const std::string& args) {
    const std::string out_file = "/tmp/pforge_cli_out.txt";
    const std::string cmd = kCli + " " + args + " > " + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WEXITSTATUS(status), ss.str()};
}

std::string fresh_dir(const std::string& tag) {
    const std::string dir = "/tmp/pforge_cli_" + tag;
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("unknown subcommands print usage and fail") {
    const Result r = run("frobnicate");
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("Usage") != std::string::npos);
}

TEST_CASE("calibrate rejects degenerate populations with exit code 1") {
    const Result r = run("calibrate --n 1 --k 2 --trials 2 --samples 200");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("error") != std::string::npos);
}

TEST_CASE("calibrate prints a radius and serves repeats from the cache") {
    const std::string cache = "/tmp/pforge_cli_cache.json";
    fs::remove(cache);
    const std::string args =
        "calibrate --n 12 --k 2 --trials 5 --samples 500 --seed 3 --cache " + cache;
    const Result first = run(args);
    REQUIRE(first.exit_code == 0);
    const Result second = run(args);
    CHECK(second.exit_code == 0);
    CHECK(first.output == second.output);
    const double radius = std::stod(first.output);
    CHECK(radius > 0.05);
    CHECK(radius < 1.0);
}

TEST_CASE("metrics scores a point-set file in csv and json consistently") {
    const std::string points = "/tmp/pforge_cli_points.txt";
    {
        std::ofstream out(points);
        out << "2 4\n0 0\n1 0\n1 1\n0 1\n";
    }
    const std::string common = " --radius 0.5 --samples 2000 --trials 10 --seed 1";
    const Result csv = run("metrics --pointset " + points + common);
    REQUIRE(csv.exit_code == 0);
    CHECK(csv.output.find("coverage,hull_volume") != std::string::npos);
    // hull of the unit square corners is exactly 1
    std::istringstream lines(csv.output);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    std::istringstream cells(row);
    std::string cell;
    std::getline(cells, cell, ',');  // coverage
    std::getline(cells, cell, ',');  // hull_volume
    CHECK(std::stod(cell) == 1.0);

    const Result as_json = run("metrics --pointset " + points + common + " --json");
    REQUIRE(as_json.exit_code == 0);
    CHECK(as_json.output.find("\"hull_volume\": 1.0") != std::string::npos);
    // cross-format equality of every number
    const double csv_coverage = std::stod(csv.output.substr(csv.output.find('\n') + 1));
    const std::string key = "\"coverage\": ";
    const std::size_t at = as_json.output.find(key);
    const double json_coverage = std::stod(as_json.output.substr(at + key.size()));
    CHECK(csv_coverage == json_coverage);
}

TEST_CASE("malformed point-set files exit with code 1") {
    const std::string bad = "/tmp/pforge_cli_bad_points.txt";
    {
        std::ofstream out(bad);
        out << "2 4\n0 0\n1\n";
    }
    const Result r = run("metrics --pointset " + bad + " --radius 0.5");
    CHECK(r.exit_code == 1);
}

TEST_CASE("generate and simulate run the mock pipeline end to end") {
    const std::string gen_dir = fresh_dir("gen");
    const Result gen = run("generate --genome " + kRepo +
                           "/data/seed_genomes/quasirandom_traits.json --questionnaire " + kRepo +
                           "/corpus/test/viking_warriors_valhalla.json --n 8 --out " + gen_dir +
                           " --mock --seed 5");
    REQUIRE_MESSAGE(gen.exit_code == 0, gen.output);
    CHECK(fs::exists(gen_dir + "/personas.jsonl"));
    CHECK(fs::exists(gen_dir + "/manifest.json"));

    const std::string sim_dir = fresh_dir("sim");
    const Result sim = run("simulate --questionnaire " + kRepo +
                           "/corpus/test/viking_warriors_valhalla.json --personas " + gen_dir +
                           "/personas.jsonl --out " + sim_dir +
                           " --mock --seed 5 --radius 0.4 --samples 1000 --trials 10");
    REQUIRE_MESSAGE(sim.exit_code == 0, sim.output);
    CHECK(fs::exists(sim_dir + "/pointset.txt"));
    CHECK(fs::exists(sim_dir + "/transcripts.jsonl"));
    CHECK(sim.output.find("coverage,hull_volume") != std::string::npos);

    std::ifstream points(sim_dir + "/pointset.txt");
    int k = 0, n = 0;
    points >> k >> n;
    CHECK(k == 2);
    CHECK(n == 8);
}

TEST_CASE("evolve runs the smoke config and report renders its curves") {
    const std::string run_dir = fresh_dir("evolve");
    // trimmed-down smoke settings keep this test quick; the acceptance suite
    // runs the full criterion-sized loop
    const std::string config = "/tmp/pforge_cli_smoke.toml";
    {
        std::ofstream out(config);
        out << "[evolution]\nn_islands = 2\niterations = 6\nextinction_period = 4\n"
            << "n_personas = 8\nseed = 11\n"
            << "corpus_paths = [\"" << kRepo << "/corpus/test/viking_warriors_valhalla.json\"]\n"
            << "data_dir = \"" << kRepo << "/data\"\n"
            << "[mock]\nenabled = true\nnoise_sd = 0.05\n";
    }
    const Result evo = run("evolve --config " + config + " --out " + run_dir + " --mock");
    REQUIRE_MESSAGE(evo.exit_code == 0, evo.output);
    for (const char* f : {"/candidates.jsonl", "/events.jsonl", "/checkpoint.json",
                          "/config.snapshot", "/manifest.json"})
        CHECK_MESSAGE(fs::exists(run_dir + f), f);
    CHECK(fs::is_directory(run_dir + "/elites"));

    const Result rep = run("report --run " + run_dir);
    REQUIRE_MESSAGE(rep.exit_code == 0, rep.output);
    CHECK(fs::exists(run_dir + "/curve.csv"));
    CHECK(fs::exists(run_dir + "/curve.svg"));

    // the svg's final best equals the max aggregate in candidates.jsonl
    double max_aggregate = 0.0;
    {
        std::ifstream in(run_dir + "/candidates.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            const auto at = line.find("\"aggregate\":");
            if (at != std::string::npos && line.find("\"failed\":false") != std::string::npos)
                max_aggregate = std::max(max_aggregate, std::stod(line.substr(at + 12)));
        }
    }
    std::ifstream svg_in(run_dir + "/curve.svg");
    std::string svg((std::istreambuf_iterator<char>(svg_in)), std::istreambuf_iterator<char>());
    char label[64];
    std::snprintf(label, sizeof(label), "best aggregate %.6f", max_aggregate);
    CHECK_MESSAGE(svg.find(label) != std::string::npos, label);
}

TEST_CASE("evaluate-archive scores elite genomes on a held-out corpus") {
    const std::string run_dir = "/tmp/pforge_cli_evolve";  // produced by the test above
    if (!fs::exists(run_dir + "/elites")) return;          // ordering guard
    const std::string out_csv = "/tmp/pforge_cli_archive.csv";
    const Result r = run("evaluate-archive --run " + run_dir + " --corpus " + kRepo +
                         "/corpus/valid --out " + out_csv + " --mock --seed 3");
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    std::ifstream in(out_csv);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("genome,questionnaire,coverage") == 0);
    int mean_rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (line.find(",MEAN,") != std::string::npos) ++mean_rows;
    CHECK(mean_rows >= 1);
}
