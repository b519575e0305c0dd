#pragma once

#include <fstream>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

namespace pforge {

// Run-directory layout used by every command that writes artifacts:
//   manifest.json      command + config digest + corpus digests
//   config.snapshot    the resolved configuration as JSON
//   candidates.jsonl   every evaluated candidate (one line per evaluation)
//   events.jsonl       mutations, rejections, elite updates, extinctions
//   checkpoint.json    resumable evolution state (atomic tmp+rename)
//   elites/            current elite genome files
//   run.lock           held while a command writes the directory
class RunStore {
public:
    explicit RunStore(const std::string& dir);
    ~RunStore();

    const std::string& dir() const { return dir_; }
    std::string path(const std::string& name) const;

    // Exclusive-create lock file; a second writer gets a ValidationError.
    void lock();
    void unlock();

    void append_candidate(const nlohmann::json& record);
    void append_event(const nlohmann::json& record);

    void write_checkpoint(const nlohmann::json& state);
    std::optional<nlohmann::json> read_checkpoint() const;

    // Drops log lines with iter greater than the checkpointed iteration so a
    // resumed run regenerates them identically.
    void truncate_logs(int max_iteration);

    void write_json(const std::string& name, const nlohmann::json& doc);
    std::optional<nlohmann::json> read_json(const std::string& name) const;

private:
    std::string dir_;
    bool locked_ = false;
    std::ofstream candidates_;
    std::ofstream events_;
    std::mutex mutex_;

    void open_logs();
    void truncate_file(const std::string& name, int max_iteration);
};

}  // namespace pforge
