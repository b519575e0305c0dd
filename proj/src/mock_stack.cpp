#include "pforge/mock_stack.hpp"

#include <algorithm>
#include <cstdio>

#include "pforge/json_util.hpp"
#include "pforge/markers.hpp"
#include "pforge/mock_persona.hpp"
#include "pforge/rng.hpp"

namespace pforge {

using nlohmann::json;

namespace {

std::vector<double> parse_csv_doubles(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        out.push_back(std::stod(csv.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

const char* kNamePool[] = {
    "Aiko",   "Bram",   "Carmen", "Dmitri", "Esther", "Farid",  "Greta",  "Hakim",
    "Ingrid", "Jonas",  "Kavya",  "Lorenzo", "Mireille", "Nnamdi", "Oksana", "Piotr",
    "Quinn",  "Rosa",   "Sven",   "Tamar",  "Ulrich", "Vera",   "Wendell", "Ximena",
    "Yusuf",  "Zofia",  "Anouk",  "Benedikt", "Chiara", "Devika", "Emeka",  "Freya",
    "Gustavo", "Halla", "Iker",   "Jorunn", "Kenji",  "Leilani", "Matteo", "Noor"};
constexpr std::size_t kNamePoolSize = sizeof(kNamePool) / sizeof(kNamePool[0]);

const char* kTemperaments[] = {"stubborn", "curious", "wary", "exuberant", "methodical",
                               "restless", "gentle", "blunt", "dreamy", "driven"};
const char* kBackgrounds[] = {"dockworker", "archivist", "street vendor", "surgeon",
                              "novelist", "farmhand", "engineer", "innkeeper",
                              "cartographer", "teacher"};

std::string synth_summary(std::uint64_t stream) {
    const char* temperament = kTemperaments[splitmix64(stream) % 10];
    const char* background = kBackgrounds[splitmix64(stream) % 10];
    return std::string("A ") + temperament + " " + background +
           " whose outlook was fixed long before the survey reached them.";
}

}  // namespace

std::optional<GenMarker> parse_gen_marker(const std::string& prompt) {
    const std::size_t at = prompt.find("<!-- gen ");
    if (at == std::string::npos) return std::nullopt;
    const std::size_t end = prompt.find("-->", at);
    if (end == std::string::npos) return std::nullopt;
    const std::string body = prompt.substr(at, end - at);
    GenMarker m;
    const auto stage = markers::attr(body, "stage");
    if (!stage) return std::nullopt;
    m.stage = std::stoi(*stage);
    if (const auto kind = markers::attr(body, "kind")) m.kind = *kind;
    if (const auto count = markers::attr(body, "count")) m.count = std::stoi(*count);
    if (const auto offset = markers::attr(body, "offset")) m.offset = std::stoi(*offset);
    if (const auto k = markers::attr(body, "k")) m.k = std::stoi(*k);
    if (const auto index = markers::attr(body, "index")) m.index = std::stoi(*index);
    if (const auto name = markers::attr(body, "name")) m.name = *name;
    if (const auto position = markers::attr(body, "position")) {
        m.position = parse_csv_doubles(*position);
        m.has_position = true;
    }
    return m;
}

std::string MockGeneratorClient::complete(const CompletionRequest& request) {
    request.validate();
    const auto marker = parse_gen_marker(request.prompt);
    if (!marker)
        throw RuntimeFailure("mock generator backend received a prompt without a gen marker");
    const std::uint64_t stream = mix_seed({seed_, fnv1a(request.prompt)});

    if (marker->stage == 1 && marker->has_position) {
        const std::string name = kNamePool[(marker->index) % kNamePoolSize];
        char buf[160];
        std::snprintf(buf, sizeof(buf), "Name: %s\nHolds firm views anchored at", name.c_str());
        std::string out = buf;
        for (double v : marker->position) {
            char num[32];
            std::snprintf(num, sizeof(num), " %.4f", v);
            out += num;
        }
        out += " along the stated axes. " + synth_summary(stream);
        return out;
    }
    if (marker->stage == 1) {
        json arr = json::array();
        for (int i = 0; i < marker->count; ++i) {
            const int global = marker->offset + i;
            std::string name = kNamePool[global % kNamePoolSize];
            if (global >= static_cast<int>(kNamePoolSize))
                name += "-" + std::to_string(global / kNamePoolSize + 1);
            arr.push_back({{"name", name},
                           {"summary", synth_summary(mix_seed({stream, static_cast<std::uint64_t>(i)}))}});
        }
        return json_block(arr);
    }
    // Stage 2: expand into a short description; keep the position visible so
    // transcripts stay human-checkable.
    std::string description = marker->name + " speaks for themselves: \"" +
                              synth_summary(stream) + "\"";
    if (marker->has_position) {
        description += " Trait anchor:";
        for (double v : marker->position) {
            char num[32];
            std::snprintf(num, sizeof(num), " %.4f", v);
            description += num;
        }
        description += ".";
    }
    return description;
}

std::map<std::string, std::vector<double>> latent_registry_from(const PopulationResult& population,
                                                                int dimension,
                                                                std::uint64_t seed) {
    std::map<std::string, std::vector<double>> registry;
    for (std::size_t i = 0; i < population.personas.size(); ++i) {
        const Persona& p = population.personas[i];
        std::vector<double> latent;
        const HighLevelDescriptor* d =
            i < population.descriptors.size() ? &population.descriptors[i] : nullptr;
        if (d && d->position && static_cast<int>(d->position->size()) == dimension) {
            latent = *d->position;
            for (double& v : latent) v = std::clamp(v, 0.0, 1.0);
        } else {
            // Unpositioned personas collapse into a narrow central cluster.
            Rng rng(mix_seed({seed, fnv1a(p.description), fnv1a(p.name)}));
            latent.resize(dimension);
            for (double& v : latent) v = 0.35 + 0.3 * rng.unit();
        }
        registry[p.name] = std::move(latent);
    }
    return registry;
}

EvalBackend make_mock_backend(double noise_sd, std::uint64_t seed) {
    EvalBackend backend;
    backend.generation = std::make_shared<MockGeneratorClient>(mix_seed(seed, "mock-generator"));
    const std::uint64_t latent_seed = mix_seed(seed, "mock-latents");
    const std::uint64_t noise_seed = mix_seed(seed, "mock-noise");
    backend.simulation_factory = [noise_sd, latent_seed, noise_seed](
                                     const PopulationResult& population, const Questionnaire& q) {
        return std::make_shared<MockPersonaClient>(
            latent_registry_from(population, q.dimension_count(), latent_seed), noise_sd,
            noise_seed);
    };
    return backend;
}

std::string ScriptedWideningMutator::complete(const CompletionRequest& request) {
    request.validate();
    int iteration = 0;
    {
        const std::size_t at = request.prompt.find("<!-- mut iter=");
        if (at != std::string::npos) iteration = std::stoi(request.prompt.substr(at + 14));
    }
    if (reject_every_ > 0 && iteration % reject_every_ == 3)
        return "I would rather talk about the weather.";

    GeneratorGenome parent;
    try {
        parent = parse_genome(extract_json(request.prompt, /*want_array=*/false));
    } catch (const std::exception&) {
        return "no parent genome found";
    }
    GeneratorGenome child = parent;
    if (child.stage1.kind == Stage1Kind::QuasiRandomTraits) {
        child.stage1.origin *= 0.5;
        child.stage1.span = std::min(child.stage1.span * widen_factor_, 1.0 - child.stage1.origin);
        child.free_text_notes = "widened sampling window to span " +
                                std::to_string(child.stage1.span);
    }
    return json_block(genome_to_json(child));
}

}  // namespace pforge
