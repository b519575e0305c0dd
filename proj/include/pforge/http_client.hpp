#pragma once

#include <memory>

#include "pforge/llm_client.hpp"

namespace pforge {

// Single-shot OpenAI-compatible chat-completions backend. Compose with
// RetryingClient (see make_http_client) for backoff; an internal semaphore
// enforces max_concurrent_requests. The API key is read from the environment
// variable named in the config and is redacted from logs.
class HttpLlmClient : public LlmClient {
public:
    explicit HttpLlmClient(LlmConfig config, std::shared_ptr<RequestLog> log = nullptr);
    ~HttpLlmClient() override;
    std::string complete(const CompletionRequest& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// HTTP backend wrapped in the retry policy from the config.
std::shared_ptr<LlmClient> make_http_client(const LlmConfig& config,
                                            std::shared_ptr<RequestLog> log = nullptr);

}  // namespace pforge
