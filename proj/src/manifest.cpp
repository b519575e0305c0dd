#include "pforge/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "pforge/errors.hpp"

namespace pforge {

using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr))
        throw RuntimeFailure("sha256 digest failed");
    std::string hex;
    hex.reserve(length * 2);
    char buf[3];
    for (unsigned int i = 0; i < length; ++i) {
        std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file for digest: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return sha256_hex(buffer.str());
}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

json make_run_manifest(const std::string& command, const json& config, std::uint64_t seed,
                       const std::vector<std::string>& corpus_files) {
    const std::string config_digest = sha256_hex(config.dump());
    json corpus = json::object();
    for (const std::string& f : corpus_files) corpus[f] = sha256_file(f);
    return json{{"run_id", config_digest.substr(0, 12) + "-" + std::to_string(seed)},
                {"command", command},
                {"created_utc", utc_now()},
                {"config_digest", config_digest},
                {"seed", seed},
                {"corpus_digests", std::move(corpus)}};
}

}  // namespace pforge
