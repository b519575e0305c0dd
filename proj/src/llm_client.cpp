#include "pforge/llm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

namespace pforge {

using nlohmann::json;

void CompletionRequest::validate() const {
    if (prompt.empty()) throw ValidationError("completion request: prompt must be non-empty");
    if (max_tokens < 1) throw ValidationError("completion request: max_tokens must be >= 1");
    if (temperature < 0.0) throw ValidationError("completion request: temperature must be >= 0");
}

void LlmConfig::validate() const {
    if (base_url.empty()) throw ValidationError("llm config: base_url must be non-empty");
    if (model_id.empty()) throw ValidationError("llm config: model_id must be non-empty");
    if (timeout_seconds <= 0.0) throw ValidationError("llm config: timeout must be > 0");
    if (max_retries < 0) throw ValidationError("llm config: max_retries must be >= 0");
    if (max_concurrent_requests < 1)
        throw ValidationError("llm config: max_concurrent_requests must be >= 1");
}

LlmConfig LlmConfig::with_env_overrides(LlmConfig cfg) {
    if (const char* url = std::getenv("PERSONA_FORGE_LLM_BASE_URL")) cfg.base_url = url;
    if (const char* model = std::getenv("PERSONA_FORGE_LLM_MODEL")) cfg.model_id = model;
    return cfg;
}

RequestLog::RequestLog(const std::string& path) : path_(path), out_(path, std::ios::app) {
    if (!out_) throw RuntimeFailure("cannot open request log: " + path);
}

void RequestLog::append(const json& record) {
    std::lock_guard lock(mutex_);
    out_ << record.dump() << "\n";
    out_.flush();
}

std::string CannedClient::complete(const CompletionRequest& request) {
    request.validate();
    auto it = replies_.find(request.prompt);
    if (it != replies_.end()) return it->second;
    if (fallback_) return *fallback_;
    throw TransientError("canned client: no reply for prompt", request.request_id);
}

std::string EchoClient::complete(const CompletionRequest& request) {
    request.validate();
    return request.prompt;
}

std::string ScriptedClient::complete(const CompletionRequest& request) {
    request.validate();
    if (calls_ >= static_cast<int>(steps_.size()))
        throw TransientError("scripted client: script exhausted", request.request_id);
    const Step& step = steps_[calls_++];
    if (step.throw_kind) {
        const std::string kind = step.throw_kind;
        if (kind == "transient") throw TransientError("scripted transient failure", request.request_id);
        if (kind == "timeout") throw TimeoutError("scripted timeout", request.request_id);
        if (kind == "rate") throw RateLimitedError("scripted rate limit", request.request_id);
        if (kind == "auth") throw AuthFailedError("scripted auth failure", request.request_id);
    }
    return step.reply;
}

ReplayClient::ReplayClient(const std::string& log_path) {
    std::ifstream in(log_path);
    if (!in) throw ValidationError("replay client: cannot open log " + log_path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json record = json::parse(line);
        if (!record.contains("prompt") || !record.contains("reply")) continue;
        by_prompt_[record["prompt"].get<std::string>()].push_back(
            record["reply"].get<std::string>());
    }
}

std::string ReplayClient::complete(const CompletionRequest& request) {
    request.validate();
    std::lock_guard lock(mutex_);
    auto it = by_prompt_.find(request.prompt);
    if (it == by_prompt_.end() || it->second.empty())
        throw RuntimeFailure("replay client: no recorded reply for prompt");
    std::string reply = std::move(it->second.front());
    it->second.pop_front();
    return reply;
}

std::string LoggingClient::complete(const CompletionRequest& request) {
    CompletionRequest req = request;
    if (req.request_id == 0) req.request_id = next_id_.fetch_add(1);
    const std::string reply = inner_->complete(req);
    log_->append({{"request_id", req.request_id}, {"prompt", req.prompt}, {"reply", reply}});
    return reply;
}

std::string RetryingClient::complete(const CompletionRequest& request) {
    double delay_ms = policy_.initial_ms;
    int retries = 0;
    std::string last_error;
    for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
        try {
            const std::string reply = inner_->complete(request);
            last_retries_ = retries;
            if (log_ && retries > 0)
                log_->append({{"event", "retries"},
                              {"request_id", request.request_id},
                              {"count", retries}});
            return reply;
        } catch (const AuthFailedError&) {
            throw;
        } catch (const LlmError& e) {
            last_error = e.what();
            if (attempt == policy_.max_retries) break;
            ++retries;
            if (log_)
                log_->append({{"event", "retry"},
                              {"request_id", request.request_id},
                              {"attempt", attempt + 1},
                              {"error", last_error}});
            if (delay_ms > 0)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(static_cast<long>(delay_ms)));
            delay_ms = std::min(delay_ms * policy_.multiplier, policy_.max_ms);
        }
    }
    last_retries_ = retries;
    throw ExhaustedRetriesError("retries exhausted after " + std::to_string(retries) +
                                    " retries, last error: " + last_error,
                                request.request_id);
}

}  // namespace pforge
