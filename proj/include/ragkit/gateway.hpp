#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ragkit/cost.hpp"
#include "ragkit/dense_backend.hpp"

namespace ragkit::gateway {

struct Message {
    std::string role;  // system | user | assistant
    std::string content;
};

struct CompletionRequest {
    std::vector<Message> messages;
    int max_tokens = 1024;
    double temperature = 0.0;
    std::vector<std::string> stop;
    std::string model;
};

enum class FinishReason { Stop, Length, Other };

struct Completion {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::vector<double> token_logprobs;  // optional, may be empty
    int retries = 0;
};

class LlmGateway {
public:
    virtual ~LlmGateway() = default;
    virtual Completion complete(const CompletionRequest& request) = 0;
    virtual std::string name() const = 0;
    const CostTally& tally() const { return tally_; }

protected:
    CostTally tally_;
};

// Stable FNV-1a 64 hash of a rendered prompt: for each message,
// role + '\x1f' + content + '\x1e' is folded into the running hash.
std::uint64_t prompt_hash(const std::vector<Message>& messages);

// Cut `text` just before the earliest occurrence of any stop sequence.
// Returns true when a cut happened.
bool truncate_at_stops(std::string& text, const std::vector<std::string>& stops);

struct ScriptRule {
    enum class Match { Step, Exact };
    Match match = Match::Step;
    std::size_t step = 0;            // Step: call index this rule answers
    std::uint64_t exact_hash = 0;    // Exact: prompt_hash to match
    std::string reply;
};

inline ScriptRule step_rule(std::size_t step, std::string reply) {
    return ScriptRule{ScriptRule::Match::Step, step, 0, std::move(reply)};
}
inline ScriptRule exact_rule(std::uint64_t hash, std::string reply) {
    return ScriptRule{ScriptRule::Match::Exact, 0, hash, std::move(reply)};
}

// Deterministic offline gateway. Exact rules are consulted first, then the
// Step rule for the current call index. A call no rule answers is an error
// naming the call index: scenarios must be fully scripted.
class ScriptedGateway : public LlmGateway {
public:
    explicit ScriptedGateway(std::vector<ScriptRule> rules);

    Completion complete(const CompletionRequest& request) override;
    std::string name() const override { return "mock"; }
    std::size_t calls() const;

private:
    std::vector<ScriptRule> rules_;
    mutable std::mutex mu_;
    std::size_t next_call_ = 0;
};

struct OpenAiConfig {
    std::string base_url = "http://127.0.0.1:8080";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model = "gpt-4o-mini";
    double timeout_seconds = 30.0;
    int max_retries = 3;
    int parallelism = 4;
    double backoff_base_seconds = 0.5;
};

// OpenAI-compatible chat client: POST {base}/v1/chat/completions.
// Transient failures (connect errors, 429, 5xx) retry with exponential
// backoff; auth failures do not retry. Stop sequences are also enforced
// client-side so returned text never contains one.
class OpenAiGateway : public LlmGateway {
public:
    explicit OpenAiGateway(OpenAiConfig config);
    ~OpenAiGateway() override;

    Completion complete(const CompletionRequest& request) override;
    std::string name() const override { return "openai:" + config_.model; }

    // GET {base}/v1/models; throws when the endpoint is unreachable.
    void preflight() const;

    std::int64_t http_attempts() const { return http_attempts_; }

private:
    struct Impl;
    OpenAiConfig config_;
    std::unique_ptr<Impl> impl_;
    std::int64_t http_attempts_ = 0;
};

// Embedding client speaking POST {base}/v1/embeddings.
class HttpEmbeddingClient : public knowledge::EmbeddingClient {
public:
    explicit HttpEmbeddingClient(OpenAiConfig config);
    ~HttpEmbeddingClient() override;

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::string name() const override { return "embedding:" + config_.model; }

private:
    struct Impl;
    OpenAiConfig config_;
    std::unique_ptr<Impl> impl_;
};

// Per-episode adapter: forwards to a shared gateway while keeping its own
// tally, so per-question cost rows stay exact under concurrency.
class TallyingGateway : public LlmGateway {
public:
    explicit TallyingGateway(LlmGateway& inner) : inner_(&inner) {}
    Completion complete(const CompletionRequest& request) override {
        Completion c = inner_->complete(request);
        tally_.record(c.prompt_tokens, c.completion_tokens);
        return c;
    }
    std::string name() const override { return inner_->name(); }

private:
    LlmGateway* inner_;
};

}  // namespace ragkit::gateway
