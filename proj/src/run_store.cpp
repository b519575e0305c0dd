#include "pforge/run_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <vector>

#include "pforge/errors.hpp"

namespace pforge {

namespace fs = std::filesystem;
using nlohmann::json;

RunStore::RunStore(const std::string& dir) : dir_(dir) {
    fs::create_directories(dir_);
    fs::create_directories(dir_ + "/elites");
}

RunStore::~RunStore() { unlock(); }

std::string RunStore::path(const std::string& name) const { return dir_ + "/" + name; }

void RunStore::lock() {
    const std::string lock_path = path("run.lock");
    const int fd = ::open(lock_path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw ValidationError("run directory is locked by another command (remove " + lock_path +
                              " if stale)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto written = ::write(fd, pid.c_str(), pid.size());
    ::close(fd);
    locked_ = true;
    open_logs();
}

void RunStore::unlock() {
    if (!locked_) return;
    candidates_.close();
    events_.close();
    fs::remove(path("run.lock"));
    locked_ = false;
}

void RunStore::open_logs() {
    candidates_.open(path("candidates.jsonl"), std::ios::app);
    events_.open(path("events.jsonl"), std::ios::app);
    if (!candidates_ || !events_)
        throw RuntimeFailure("cannot open run logs under " + dir_);
}

void RunStore::append_candidate(const json& record) {
    std::lock_guard guard(mutex_);
    candidates_ << record.dump() << "\n";
    candidates_.flush();
}

void RunStore::append_event(const json& record) {
    std::lock_guard guard(mutex_);
    events_ << record.dump() << "\n";
    events_.flush();
}

void RunStore::write_checkpoint(const json& state) {
    const std::string tmp = path("checkpoint.json.tmp");
    {
        std::ofstream out(tmp);
        if (!out) throw RuntimeFailure("cannot write checkpoint under " + dir_);
        out << state.dump() << "\n";
    }
    fs::rename(tmp, path("checkpoint.json"));
}

std::optional<json> RunStore::read_checkpoint() const {
    std::ifstream in(path("checkpoint.json"));
    if (!in) return std::nullopt;
    json state;
    in >> state;
    return state;
}

void RunStore::truncate_file(const std::string& name, int max_iteration) {
    const std::string file = path(name);
    std::ifstream in(file);
    if (!in) return;
    std::vector<std::string> kept;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const json record = json::parse(line);
            if (record.value("iter", 0) > max_iteration) continue;
        } catch (const json::exception&) {
            continue;
        }
        kept.push_back(line);
    }
    in.close();
    const std::string tmp = file + ".tmp";
    {
        std::ofstream out(tmp);
        for (const std::string& l : kept) out << l << "\n";
    }
    fs::rename(tmp, file);
}

void RunStore::truncate_logs(int max_iteration) {
    std::lock_guard guard(mutex_);
    candidates_.close();
    events_.close();
    truncate_file("candidates.jsonl", max_iteration);
    truncate_file("events.jsonl", max_iteration);
    open_logs();
}

void RunStore::write_json(const std::string& name, const json& doc) {
    std::ofstream out(path(name));
    if (!out) throw RuntimeFailure("cannot write " + path(name));
    out << doc.dump(2) << "\n";
}

std::optional<json> RunStore::read_json(const std::string& name) const {
    std::ifstream in(path(name));
    if (!in) return std::nullopt;
    json doc;
    in >> doc;
    return doc;
}

}  // namespace pforge
