#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace pforge {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// Tamper-evident record of what a command actually ran with: the config
// digest and per-file corpus digests must match the files used.
nlohmann::json make_run_manifest(const std::string& command, const nlohmann::json& config,
                                 std::uint64_t seed, const std::vector<std::string>& corpus_files);

}  // namespace pforge
