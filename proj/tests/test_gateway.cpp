#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>

#include "ragkit/gateway.hpp"
#include "support.hpp"

using namespace ragkit;
using namespace ragkit::gateway;
using testsupport::StubServer;

namespace {

CompletionRequest user_request(const std::string& content) {
    CompletionRequest req;
    req.messages.push_back(Message{"user", content});
    return req;
}

}  // namespace

TEST_CASE("scripted gateway returns the scripted reply") {
    auto gw = testsupport::steps({"hi"});
    Completion c = gw->complete(user_request("hello there"));
    CHECK(c.text == "hi");
    CHECK(c.finish_reason == FinishReason::Stop);
    CHECK(c.prompt_tokens == 2);
    CHECK(c.completion_tokens == 1);
}

TEST_CASE("scripted gateway truncates before stop sequences") {
    auto gw = testsupport::steps({"<search>who died</search> and then some"});
    CompletionRequest req = user_request("q");
    req.stop = {"</search>"};
    Completion c = gw->complete(req);
    CHECK(c.text == "<search>who died");
    CHECK(c.finish_reason == FinishReason::Stop);
    CHECK(c.text.find("</search>") == std::string::npos);
}

TEST_CASE("scripted gateway truncates at max_tokens with Length") {
    auto gw = testsupport::steps({"one two three four five"});
    CompletionRequest req = user_request("q");
    req.max_tokens = 3;
    Completion c = gw->complete(req);
    CHECK(c.text == "one two three");
    CHECK(c.finish_reason == FinishReason::Length);
}

TEST_CASE("step scenarios replay deterministically") {
    std::vector<std::string> replies = {"r0", "r1", "r2"};
    std::vector<std::string> first, second;
    for (int round = 0; round < 2; ++round) {
        auto gw = testsupport::steps(replies);
        auto& out = round == 0 ? first : second;
        for (int i = 0; i < 3; ++i) out.push_back(gw->complete(user_request("q")).text);
    }
    CHECK(first == second);
    CHECK(first == replies);
}

TEST_CASE("call past the scenario end names the call index") {
    auto gw = testsupport::steps({"a", "b", "c"});
    for (int i = 0; i < 3; ++i) gw->complete(user_request("q"));
    CHECK_THROWS_WITH_AS(gw->complete(user_request("q")),
                         doctest::Contains("no rule for call 3"), GatewayError);
}

TEST_CASE("scenario validation") {
    CHECK_THROWS_AS(ScriptedGateway({}), ConfigError);
    // non-contiguous step indices
    CHECK_THROWS_AS(ScriptedGateway({step_rule(0, "a"), step_rule(2, "c")}), ConfigError);
}

TEST_CASE("exact rules match on the stable prompt hash") {
    std::vector<Message> messages = {{"user", "what is the capital?"}};
    auto h = prompt_hash(messages);
    ScriptedGateway gw({step_rule(0, "fallback"), exact_rule(h, "exact!")});
    CompletionRequest req;
    req.messages = messages;
    CHECK(gw.complete(req).text == "exact!");
    // different prompt falls back to the step rule at index 1... which is
    // absent, so the mock refuses
    CHECK_THROWS_AS(gw.complete(user_request("other")), GatewayError);
}

TEST_CASE("prompt hash is stable and content-sensitive") {
    std::vector<Message> a = {{"user", "x"}, {"assistant", "y"}};
    std::vector<Message> b = {{"user", "x"}, {"assistant", "y"}};
    std::vector<Message> c = {{"user", "x"}, {"assistant", "z"}};
    CHECK(prompt_hash(a) == prompt_hash(b));
    CHECK(prompt_hash(a) != prompt_hash(c));
}

TEST_CASE("token accounting: tally equals the sum of per-call records") {
    auto gw = testsupport::steps({"one two", "three", "four five six"});
    gw->complete(user_request("a b c"));
    gw->complete(user_request("d"));
    gw->complete(user_request("e f"));
    const auto& tally = gw->tally();
    auto calls = tally.calls();
    REQUIRE(calls.size() == 3);
    std::int64_t in = 0, out = 0;
    for (const auto& r : calls) {
        in += r.prompt_tokens;
        out += r.completion_tokens;
    }
    CHECK(in == tally.total_prompt_tokens());
    CHECK(out == tally.total_completion_tokens());
    CHECK(in == 6);
    CHECK(out == 6);
}

TEST_CASE("mock purity: scripted pipelines run with no server anywhere") {
    // nothing is listening; a pure mock must not care
    auto gw = testsupport::steps({"fine"});
    CHECK(gw->complete(user_request("q")).text == "fine");
}

TEST_CASE("stop honoring holds for adversarial stop lists") {
    const std::vector<std::string> stops = {"</search>", "STOP", "\n\n"};
    auto gw = testsupport::steps({"alpha STOP beta", "safe text", "a\n\nb</search>"});
    for (int i = 0; i < 3; ++i) {
        CompletionRequest req = user_request("q");
        req.stop = stops;
        Completion c = gw->complete(req);
        for (const auto& s : stops) {
            CAPTURE(c.text);
            CHECK(c.text.find(s) == std::string::npos);
        }
    }
}

// --- OpenAI-compatible client ------------------------------------------------

namespace {

nlohmann::json ok_completion(const std::string& text) {
    return {{"choices",
             {{{"message", {{"role", "assistant"}, {"content", text}}},
               {"finish_reason", "stop"}}}},
            {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}}};
}

OpenAiConfig test_config(const std::string& base_url) {
    OpenAiConfig cfg;
    cfg.base_url = base_url;
    cfg.timeout_seconds = 2.0;
    cfg.max_retries = 3;
    cfg.backoff_base_seconds = 0.01;
    return cfg;
}

}  // namespace

TEST_CASE("openai client round-trips a completion") {
    StubServer server;
    server.on_post([](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        CHECK(body.at("model") == "test-model");
        CHECK(body.at("messages")[0].at("content") == "hello");
        res.set_content(ok_completion("world").dump(), "application/json");
    });
    OpenAiConfig cfg = test_config(server.base_url());
    cfg.model = "test-model";
    OpenAiGateway gw(cfg);
    Completion c = gw.complete(user_request("hello"));
    CHECK(c.text == "world");
    CHECK(c.prompt_tokens == 7);
    CHECK(c.completion_tokens == 3);
    CHECK(c.retries == 0);
}

TEST_CASE("transient failures retry with a visible retry count") {
    StubServer server;
    std::atomic<int> hits{0};
    server.on_post([&](const httplib::Request&, httplib::Response& res) {
        int n = hits.fetch_add(1);
        if (n < 2) {
            res.status = 503;
            return;
        }
        res.set_content(ok_completion("recovered").dump(), "application/json");
    });
    OpenAiGateway gw(test_config(server.base_url()));
    Completion c = gw.complete(user_request("q"));
    CHECK(c.text == "recovered");
    CHECK(c.retries == 2);
    CHECK(hits.load() == 3);
}

TEST_CASE("auth failures do not retry") {
    StubServer server;
    server.on_post([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    OpenAiGateway gw(test_config(server.base_url()));
    CHECK_THROWS_WITH_AS(gw.complete(user_request("q")), doctest::Contains("auth"), GatewayError);
    CHECK(server.requests() == 1);
}

TEST_CASE("retries exhaust into a gateway error with the cause") {
    StubServer server;
    server.on_post([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    OpenAiConfig cfg = test_config(server.base_url());
    cfg.max_retries = 1;
    OpenAiGateway gw(cfg);
    CHECK_THROWS_WITH_AS(gw.complete(user_request("q")), doctest::Contains("status 500"),
                         GatewayError);
    CHECK(server.requests() == 2);  // initial + one retry
}

TEST_CASE("client enforces stop sequences even if the server ignores them") {
    StubServer server;
    server.on_post([](const httplib::Request&, httplib::Response& res) {
        res.set_content(ok_completion("before</search>after").dump(), "application/json");
    });
    OpenAiGateway gw(test_config(server.base_url()));
    CompletionRequest req = user_request("q");
    req.stop = {"</search>"};
    Completion c = gw.complete(req);
    CHECK(c.text == "before");
    CHECK(c.finish_reason == FinishReason::Stop);
}

TEST_CASE("preflight fails fast when nothing is listening") {
    OpenAiConfig cfg = test_config("http://127.0.0.1:1");
    cfg.timeout_seconds = 0.2;
    OpenAiGateway gw(cfg);
    CHECK_THROWS_WITH_AS(gw.preflight(), doctest::Contains("unreachable"), GatewayError);
}

TEST_CASE("http embedding client maps the embeddings endpoint") {
    StubServer server;
    server.on_post([](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json data = nlohmann::json::array();
        for (std::size_t i = 0; i < body.at("input").size(); ++i) {
            data.push_back({{"index", i}, {"embedding", {1.0 * (i + 1), 0.0}}});
        }
        res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    HttpEmbeddingClient client(test_config(server.base_url()));
    auto vecs = client.embed({"a", "b"});
    REQUIRE(vecs.size() == 2);
    CHECK(vecs[0][0] == 1.0);
    CHECK(vecs[1][0] == 2.0);
    CHECK(client.calls() == 1);
}
