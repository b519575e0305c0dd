#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pforge/llm_client.hpp"

using namespace pforge;

namespace {

CompletionRequest req(const std::string& prompt) {
    CompletionRequest r;
    r.prompt = prompt;
    r.request_id = 7;
    return r;
}

RetryPolicy fast_policy(int retries) { return {retries, 0.0, 2.0, 0.0}; }

}  // namespace

TEST_CASE("request validation") {
    CompletionRequest r;
    CHECK_THROWS_AS(r.validate(), ValidationError);
    r.prompt = "x";
    r.max_tokens = 0;
    CHECK_THROWS_AS(r.validate(), ValidationError);
    r.max_tokens = 10;
    r.temperature = -1;
    CHECK_THROWS_AS(r.validate(), ValidationError);
}

TEST_CASE("canned client returns exact replies and the fallback") {
    CannedClient canned(std::map<std::string, std::string>{{"hello", "world"}});
    CHECK(canned.complete(req("hello")) == "world");
    CHECK_THROWS_AS(canned.complete(req("other")), TransientError);
    CannedClient with_fallback(std::map<std::string, std::string>{{"hello", "world"}},
                               std::string("fb"));
    CHECK(with_fallback.complete(req("other")) == "fb");
}

TEST_CASE("echo client returns the prompt") {
    EchoClient echo;
    CHECK(echo.complete(req("mirror")) == "mirror");
}

TEST_CASE("a backend that fails twice then succeeds is retried to success") {
    auto scripted = std::make_shared<ScriptedClient>(std::vector<ScriptedClient::Step>{
        {"", "transient"}, {"", "rate"}, {"ok", nullptr}});
    auto log = std::make_shared<RequestLog>("/tmp/pforge_retry_log.jsonl");
    std::filesystem::remove("/tmp/pforge_retry_log.jsonl");
    log = std::make_shared<RequestLog>("/tmp/pforge_retry_log.jsonl");
    RetryingClient retrying(scripted, fast_policy(3), log);
    CHECK(retrying.complete(req("x")) == "ok");
    CHECK(retrying.last_retry_count() == 2);
    CHECK(scripted->calls() == 3);

    std::ifstream in("/tmp/pforge_retry_log.jsonl");
    int retry_events = 0;
    std::string line;
    while (std::getline(in, line))
        if (line.find("\"retry\"") != std::string::npos) ++retry_events;
    CHECK(retry_events == 2);
}

TEST_CASE("zero retries with a failing backend exhausts immediately") {
    auto scripted = std::make_shared<ScriptedClient>(
        std::vector<ScriptedClient::Step>{{"", "transient"}, {"ok", nullptr}});
    RetryingClient retrying(scripted, fast_policy(0));
    CHECK_THROWS_AS(retrying.complete(req("x")), ExhaustedRetriesError);
    CHECK(scripted->calls() == 1);
}

TEST_CASE("auth failures are final") {
    auto scripted = std::make_shared<ScriptedClient>(
        std::vector<ScriptedClient::Step>{{"", "auth"}, {"ok", nullptr}});
    RetryingClient retrying(scripted, fast_policy(5));
    CHECK_THROWS_AS(retrying.complete(req("x")), AuthFailedError);
    CHECK(scripted->calls() == 1);
}

TEST_CASE("timeouts are retried") {
    auto scripted = std::make_shared<ScriptedClient>(
        std::vector<ScriptedClient::Step>{{"", "timeout"}, {"ok", nullptr}});
    RetryingClient retrying(scripted, fast_policy(1));
    CHECK(retrying.complete(req("x")) == "ok");
}

TEST_CASE("llm errors carry the request id") {
    ScriptedClient scripted(std::vector<ScriptedClient::Step>{{"", "rate"}});
    try {
        scripted.complete(req("x"));
        FAIL("expected RateLimitedError");
    } catch (const LlmError& e) {
        CHECK(e.request_id == 7);
    }
}

TEST_CASE("logged runs replay bit-exactly, duplicate prompts served in order") {
    const std::string log_path = "/tmp/pforge_replay_log.jsonl";
    std::filesystem::remove(log_path);
    {
        auto inner = std::make_shared<ScriptedClient>(std::vector<ScriptedClient::Step>{
            {"first", nullptr}, {"second", nullptr}, {"other", nullptr}});
        LoggingClient logging(inner, std::make_shared<RequestLog>(log_path));
        CHECK(logging.complete(req("dup")) == "first");
        CHECK(logging.complete(req("dup")) == "second");
        CHECK(logging.complete(req("unique")) == "other");
    }
    ReplayClient replay(log_path);
    CHECK(replay.complete(req("dup")) == "first");
    CHECK(replay.complete(req("dup")) == "second");
    CHECK(replay.complete(req("unique")) == "other");
    CHECK_THROWS_AS(replay.complete(req("dup")), RuntimeFailure);
    CHECK_THROWS_AS(replay.complete(req("never")), RuntimeFailure);
}

TEST_CASE("llm config validation and env overrides") {
    LlmConfig cfg;
    cfg.validate();
    cfg.max_concurrent_requests = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    setenv("PERSONA_FORGE_LLM_BASE_URL", "http://example:1234/v2", 1);
    setenv("PERSONA_FORGE_LLM_MODEL", "test-model", 1);
    const LlmConfig overridden = LlmConfig::with_env_overrides(LlmConfig{});
    CHECK(overridden.base_url == "http://example:1234/v2");
    CHECK(overridden.model_id == "test-model");
    unsetenv("PERSONA_FORGE_LLM_BASE_URL");
    unsetenv("PERSONA_FORGE_LLM_MODEL");
}
