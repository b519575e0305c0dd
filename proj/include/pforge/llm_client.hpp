#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pforge/errors.hpp"

namespace pforge {

struct CompletionRequest {
    std::string prompt;
    int max_tokens = 1024;
    double temperature = 0.7;
    std::vector<std::string> stop_sequences;
    std::uint64_t request_id = 0;  // assigned by the caller for log correlation

    void validate() const;
};

class LlmError : public RuntimeFailure {
public:
    LlmError(const std::string& what, std::uint64_t request_id)
        : RuntimeFailure(what), request_id(request_id) {}
    std::uint64_t request_id;
};

class TimeoutError : public LlmError {
public:
    using LlmError::LlmError;
};
class RateLimitedError : public LlmError {
public:
    using LlmError::LlmError;
};
class AuthFailedError : public LlmError {
public:
    using LlmError::LlmError;
};
// Transport-level failure worth retrying (connection reset, 5xx, ...).
class TransientError : public LlmError {
public:
    using LlmError::LlmError;
};
class ExhaustedRetriesError : public LlmError {
public:
    using LlmError::LlmError;
};

// One narrow text-completion interface; every LLM-dependent stage goes
// through it, which is what makes the mock stack possible.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

struct LlmConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string model_id = "gemma-3-27b-it";
    std::string api_key_env = "PERSONA_FORGE_API_KEY";  // name of the env var, never the key
    double timeout_seconds = 120.0;
    int max_retries = 3;
    double backoff_initial_ms = 250.0;
    double backoff_multiplier = 2.0;
    double backoff_max_ms = 8000.0;
    int max_concurrent_requests = 4;

    void validate() const;
    // PERSONA_FORGE_LLM_BASE_URL / PERSONA_FORGE_LLM_MODEL override the file values.
    static LlmConfig with_env_overrides(LlmConfig cfg);
};

// Thread-safe JSON-lines appender for request/response pairs.
class RequestLog {
public:
    explicit RequestLog(const std::string& path);
    void append(const nlohmann::json& record);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
    std::mutex mutex_;
};

// Fixture backend: exact prompt -> reply map with an optional fallback.
class CannedClient : public LlmClient {
public:
    CannedClient() = default;
    explicit CannedClient(std::map<std::string, std::string> replies,
                          std::optional<std::string> fallback = {})
        : replies_(std::move(replies)), fallback_(std::move(fallback)) {}

    void add(const std::string& prompt, const std::string& reply) { replies_[prompt] = reply; }
    std::string complete(const CompletionRequest& request) override;

private:
    std::map<std::string, std::string> replies_;
    std::optional<std::string> fallback_;
};

// Returns the prompt itself.
class EchoClient : public LlmClient {
public:
    std::string complete(const CompletionRequest& request) override;
};

// Scripted replies in order, with optional exceptions; for fault injection.
class ScriptedClient : public LlmClient {
public:
    struct Step {
        std::string reply;
        const char* throw_kind = nullptr;  // nullptr | "transient" | "timeout" | "rate" | "auth"
    };
    explicit ScriptedClient(std::vector<Step> steps) : steps_(std::move(steps)) {}
    std::string complete(const CompletionRequest& request) override;
    int calls() const { return calls_; }

private:
    std::vector<Step> steps_;
    int calls_ = 0;
};

// Replays a request log: each prompt's recorded replies are served FIFO, so a
// logged run reproduces downstream results exactly.
class ReplayClient : public LlmClient {
public:
    explicit ReplayClient(const std::string& log_path);
    std::string complete(const CompletionRequest& request) override;

private:
    std::map<std::string, std::deque<std::string>> by_prompt_;
    std::mutex mutex_;
};

// Decorator appending {request_id, prompt, reply} for every completed call.
class LoggingClient : public LlmClient {
public:
    LoggingClient(std::shared_ptr<LlmClient> inner, std::shared_ptr<RequestLog> log)
        : inner_(std::move(inner)), log_(std::move(log)) {}
    std::string complete(const CompletionRequest& request) override;

private:
    std::shared_ptr<LlmClient> inner_;
    std::shared_ptr<RequestLog> log_;
    std::atomic<std::uint64_t> next_id_{1};
};

struct RetryPolicy {
    int max_retries = 3;
    double initial_ms = 250.0;
    double multiplier = 2.0;
    double max_ms = 8000.0;

    static RetryPolicy from(const LlmConfig& cfg) {
        return {cfg.max_retries, cfg.backoff_initial_ms, cfg.backoff_multiplier, cfg.backoff_max_ms};
    }
};

// Retries transient failures with exponential backoff; AuthFailed is final.
class RetryingClient : public LlmClient {
public:
    RetryingClient(std::shared_ptr<LlmClient> inner, RetryPolicy policy,
                   std::shared_ptr<RequestLog> log = nullptr)
        : inner_(std::move(inner)), policy_(policy), log_(std::move(log)) {}
    std::string complete(const CompletionRequest& request) override;
    int last_retry_count() const { return last_retries_; }

private:
    std::shared_ptr<LlmClient> inner_;
    RetryPolicy policy_;
    std::shared_ptr<RequestLog> log_;
    std::atomic<int> last_retries_{0};
};

}  // namespace pforge
