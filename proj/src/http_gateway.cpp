#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ragkit/gateway.hpp"
#include "ragkit/util.hpp"

namespace ragkit::gateway {

using nlohmann::json;

namespace {

constexpr std::ptrdiff_t kMaxParallel = 256;

bool status_retryable(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

std::string api_key_from_env(const std::string& env_name) {
    if (env_name.empty()) return {};
    const char* v = std::getenv(env_name.c_str());
    return v ? std::string(v) : std::string();
}

httplib::Headers auth_headers(const std::string& key) {
    httplib::Headers headers;
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    return headers;
}

std::int64_t ws_tokens(const std::string& s) {
    return static_cast<std::int64_t>(count_tokens(s));
}

}  // namespace

struct OpenAiGateway::Impl {
    httplib::Client client;
    std::counting_semaphore<kMaxParallel> slots;
    std::string api_key;

    Impl(const OpenAiConfig& cfg)
        : client(cfg.base_url),
          slots(std::max(1, std::min<int>(cfg.parallelism, kMaxParallel))),
          api_key(api_key_from_env(cfg.api_key_env)) {
        auto secs = std::chrono::duration<double>(cfg.timeout_seconds);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(secs));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(secs));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(secs));
    }
};

OpenAiGateway::OpenAiGateway(OpenAiConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {}

OpenAiGateway::~OpenAiGateway() = default;

void OpenAiGateway::preflight() const {
    auto res = impl_->client.Get("/v1/models", auth_headers(impl_->api_key));
    if (!res) {
        throw GatewayError("gateway unreachable at " + config_.base_url + ": " +
                           httplib::to_string(res.error()));
    }
    if (res->status >= 500) {
        throw GatewayError("gateway preflight failed at " + config_.base_url + ": status " +
                           std::to_string(res->status));
    }
}

Completion OpenAiGateway::complete(const CompletionRequest& request) {
    if (request.messages.empty()) throw ContractError("completion request has no messages");
    if (request.max_tokens < 1) throw ContractError("completion request max_tokens must be >= 1");
    if (request.temperature < 0.0) throw ContractError("completion temperature must be >= 0");

    json body;
    body["model"] = request.model.empty() ? config_.model : request.model;
    body["max_tokens"] = request.max_tokens;
    body["temperature"] = request.temperature;
    json msgs = json::array();
    for (const auto& m : request.messages) {
        msgs.push_back({{"role", m.role}, {"content", m.content}});
    }
    body["messages"] = std::move(msgs);
    if (!request.stop.empty()) body["stop"] = request.stop;
    const std::string payload = body.dump();

    impl_->slots.acquire();
    struct Release {
        Impl* impl;
        ~Release() { impl->slots.release(); }
    } release{impl_.get()};

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            auto delay = std::chrono::duration<double>(config_.backoff_base_seconds *
                                                       static_cast<double>(1 << (attempt - 1)));
            std::this_thread::sleep_for(delay);
        }
        ++http_attempts_;
        auto res = impl_->client.Post("/v1/chat/completions", auth_headers(impl_->api_key),
                                      payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw GatewayError("gateway auth failure: status " + std::to_string(res->status));
        }
        if (res->status != 200) {
            last_error = "status " + std::to_string(res->status);
            if (status_retryable(res->status)) continue;
            throw GatewayError("gateway error: " + last_error);
        }

        json doc = json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty()) {
            last_error = "malformed completion response";
            continue;
        }
        const auto& choice = doc["choices"][0];
        Completion out;
        out.text = choice.contains("message") ? choice["message"].value("content", "")
                                              : choice.value("text", "");
        const std::string finish = choice.value("finish_reason", "stop");
        out.finish_reason = finish == "stop"     ? FinishReason::Stop
                            : finish == "length" ? FinishReason::Length
                                                 : FinishReason::Other;
        if (truncate_at_stops(out.text, request.stop)) out.finish_reason = FinishReason::Stop;
        if (doc.contains("usage")) {
            out.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
            out.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
        }
        if (out.prompt_tokens == 0) {
            for (const auto& m : request.messages) out.prompt_tokens += ws_tokens(m.content);
        }
        if (out.completion_tokens == 0) out.completion_tokens = ws_tokens(out.text);
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("token_logprobs")) {
            for (const auto& lp : choice["logprobs"]["token_logprobs"]) {
                if (lp.is_number()) out.token_logprobs.push_back(lp.get<double>());
            }
        }
        out.retries = attempt;
        tally_.record(out.prompt_tokens, out.completion_tokens);
        return out;
    }
    throw GatewayError("gateway retries exhausted (" + std::to_string(config_.max_retries + 1) +
                       " attempts): " + last_error);
}

struct HttpEmbeddingClient::Impl {
    httplib::Client client;
    std::string api_key;

    Impl(const OpenAiConfig& cfg) : client(cfg.base_url), api_key(api_key_from_env(cfg.api_key_env)) {
        auto secs = std::chrono::duration<double>(cfg.timeout_seconds);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(secs));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(secs));
    }
};

HttpEmbeddingClient::HttpEmbeddingClient(OpenAiConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {}

HttpEmbeddingClient::~HttpEmbeddingClient() = default;

std::vector<std::vector<double>> HttpEmbeddingClient::embed(const std::vector<std::string>& texts) {
    json body;
    body["model"] = config_.model;
    body["input"] = texts;
    auto res = impl_->client.Post("/v1/embeddings", auth_headers(impl_->api_key), body.dump(),
                                  "application/json");
    ++calls_;
    if (!res) {
        throw GatewayError("embedding service unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw GatewayError("embedding service error: status " + std::to_string(res->status));
    }
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("data")) {
        throw GatewayError("embedding service returned malformed response");
    }
    std::vector<std::vector<double>> out(texts.size());
    for (const auto& item : doc["data"]) {
        std::size_t index = item.value("index", std::size_t{0});
        if (index >= out.size()) continue;
        out[index] = item.at("embedding").get<std::vector<double>>();
    }
    return out;
}

}  // namespace ragkit::gateway
