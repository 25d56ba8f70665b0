#pragma once

#include <cstdint>
#include <mutex>
#include <vector>

namespace ragkit {

// Cost fields reported per build (construction side) and per run (inference
// side). All fields are >= 0.
struct CostReport {
    double construction_seconds_per_1m_tokens = 0.0;
    std::int64_t llm_calls = 0;
    std::int64_t llm_tokens_in = 0;
    std::int64_t llm_tokens_out = 0;
    double mean_retrieval_seconds = 0.0;
    double mean_context_tokens = 0.0;
};

// seconds * 1e6 / tokens; 0 when the corpus is empty.
double construction_seconds_per_1m(double seconds, std::int64_t token_count);

struct CallRecord {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

// Thread-safe per-call tally kept by gateways. Totals always equal the sum
// of the recorded calls.
class CostTally {
public:
    void record(std::int64_t prompt_tokens, std::int64_t completion_tokens) {
        std::lock_guard<std::mutex> lock(mu_);
        calls_.push_back({prompt_tokens, completion_tokens});
    }
    std::vector<CallRecord> calls() const {
        std::lock_guard<std::mutex> lock(mu_);
        return calls_;
    }
    std::int64_t call_count() const {
        std::lock_guard<std::mutex> lock(mu_);
        return static_cast<std::int64_t>(calls_.size());
    }
    std::int64_t total_prompt_tokens() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::int64_t t = 0;
        for (const auto& c : calls_) t += c.prompt_tokens;
        return t;
    }
    std::int64_t total_completion_tokens() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::int64_t t = 0;
        for (const auto& c : calls_) t += c.completion_tokens;
        return t;
    }

private:
    mutable std::mutex mu_;
    std::vector<CallRecord> calls_;
};

}  // namespace ragkit
