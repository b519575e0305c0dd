#include "pforge/http_client.hpp"

#include <cstdlib>
#include <semaphore>

#include <httplib.h>

namespace pforge {

using nlohmann::json;

namespace {

struct ParsedUrl {
    bool https = false;
    std::string host_port;  // host[:port]
    std::string path_prefix;
};

ParsedUrl parse_base_url(const std::string& base_url) {
    ParsedUrl out;
    std::string rest = base_url;
    if (rest.rfind("https://", 0) == 0) {
        out.https = true;
        rest = rest.substr(8);
    } else if (rest.rfind("http://", 0) == 0) {
        rest = rest.substr(7);
    } else {
        throw ValidationError("llm base_url must start with http:// or https://");
    }
    const std::size_t slash = rest.find('/');
    out.host_port = rest.substr(0, slash);
    if (slash != std::string::npos) out.path_prefix = rest.substr(slash);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
    return out;
}

}  // namespace

struct HttpLlmClient::Impl {
    LlmConfig config;
    ParsedUrl url;
    std::string api_key;
    std::shared_ptr<RequestLog> log;
    std::counting_semaphore<256> slots;

    Impl(LlmConfig cfg, std::shared_ptr<RequestLog> log_in)
        : config(std::move(cfg)),
          url(parse_base_url(config.base_url)),
          log(std::move(log_in)),
          slots(config.max_concurrent_requests) {
        if (!config.api_key_env.empty()) {
            if (const char* key = std::getenv(config.api_key_env.c_str())) api_key = key;
        }
    }

    std::unique_ptr<httplib::Client> make_connection() const {
        auto cli = std::make_unique<httplib::Client>(
            (url.https ? "https://" : "http://") + url.host_port);
        const auto timeout = std::chrono::milliseconds(
            static_cast<long>(config.timeout_seconds * 1000.0));
        cli->set_connection_timeout(timeout);
        cli->set_read_timeout(timeout);
        cli->set_write_timeout(timeout);
        if (!api_key.empty()) cli->set_bearer_token_auth(api_key);
        return cli;
    }
};

HttpLlmClient::HttpLlmClient(LlmConfig config, std::shared_ptr<RequestLog> log) {
    config.validate();
    impl_ = std::make_unique<Impl>(std::move(config), std::move(log));
}

HttpLlmClient::~HttpLlmClient() = default;

std::string HttpLlmClient::complete(const CompletionRequest& request) {
    request.validate();
    impl_->slots.acquire();
    struct Release {
        std::counting_semaphore<256>& s;
        ~Release() { s.release(); }
    } release{impl_->slots};

    json body = {{"model", impl_->config.model_id},
                 {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                 {"max_tokens", request.max_tokens},
                 {"temperature", request.temperature}};
    if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;

    if (impl_->log)
        impl_->log->append({{"event", "http_request"},
                            {"request_id", request.request_id},
                            {"url", impl_->config.base_url + "/chat/completions"},
                            {"body", body}});

    auto cli = impl_->make_connection();
    const auto res = cli->Post(impl_->url.path_prefix + "/chat/completions", body.dump(),
                               "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
            err == httplib::Error::Write)
            throw TimeoutError("llm request timed out: " + httplib::to_string(err),
                               request.request_id);
        throw TransientError("llm transport failure: " + httplib::to_string(err),
                             request.request_id);
    }
    if (impl_->log)
        impl_->log->append({{"event", "http_response"},
                            {"request_id", request.request_id},
                            {"status", res->status},
                            {"body", res->body}});
    if (res->status == 401 || res->status == 403)
        throw AuthFailedError("llm auth failed (status " + std::to_string(res->status) + ")",
                              request.request_id);
    if (res->status == 429)
        throw RateLimitedError("llm rate limited", request.request_id);
    if (res->status >= 500)
        throw TransientError("llm server error (status " + std::to_string(res->status) + ")",
                             request.request_id);
    if (res->status != 200)
        throw RuntimeFailure("llm request failed (status " + std::to_string(res->status) +
                             "): " + res->body);

    try {
        const json reply = json::parse(res->body);
        const auto& choices = reply.at("choices");
        if (choices.empty()) throw RuntimeFailure("llm reply has no choices");
        const auto& message = choices[0].at("message");
        return message.at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw RuntimeFailure(std::string("llm reply parse error: ") + e.what());
    }
}

std::shared_ptr<LlmClient> make_http_client(const LlmConfig& config,
                                            std::shared_ptr<RequestLog> log) {
    auto inner = std::make_shared<HttpLlmClient>(config, log);
    return std::make_shared<RetryingClient>(inner, RetryPolicy::from(config), log);
}

}  // namespace pforge
