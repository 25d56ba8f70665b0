#include "ragkit/gateway.hpp"

#include <algorithm>

#include "ragkit/util.hpp"

namespace ragkit::gateway {

std::uint64_t prompt_hash(const std::vector<Message>& messages) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& m : messages) {
        h = fnv1a64(m.role, h);
        h = fnv1a64(std::string(1, '\x1f'), h);
        h = fnv1a64(m.content, h);
        h = fnv1a64(std::string(1, '\x1e'), h);
    }
    return h;
}

bool truncate_at_stops(std::string& text, const std::vector<std::string>& stops) {
    std::size_t cut = std::string::npos;
    for (const auto& stop : stops) {
        if (stop.empty()) continue;
        std::size_t p = text.find(stop);
        if (p != std::string::npos && p < cut) cut = p;
    }
    if (cut == std::string::npos) return false;
    text.resize(cut);
    return true;
}

namespace {

std::int64_t message_tokens(const std::vector<Message>& messages) {
    std::int64_t total = 0;
    for (const auto& m : messages) total += static_cast<std::int64_t>(count_tokens(m.content));
    return total;
}

// Truncate to the first max_tokens whitespace tokens, preserving original
// spacing. Returns true when something was cut.
bool truncate_at_length(std::string& text, int max_tokens) {
    auto tokens = tokenize_ws(text);
    if (static_cast<int>(tokens.size()) <= max_tokens) return false;
    text.resize(tokens[static_cast<std::size_t>(max_tokens) - 1].end);
    return true;
}

}  // namespace

ScriptedGateway::ScriptedGateway(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {
    if (rules_.empty()) throw ConfigError("mock: scenario requires at least one rule");
    std::vector<std::size_t> steps;
    for (const auto& r : rules_) {
        if (r.match == ScriptRule::Match::Step) steps.push_back(r.step);
    }
    std::sort(steps.begin(), steps.end());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] != i) {
            throw ConfigError("mock: step rule indices must be contiguous from 0");
        }
    }
}

Completion ScriptedGateway::complete(const CompletionRequest& request) {
    if (request.messages.empty()) throw ContractError("completion request has no messages");
    if (request.max_tokens < 1) throw ContractError("completion request max_tokens must be >= 1");
    if (request.temperature < 0.0) throw ContractError("completion temperature must be >= 0");

    std::size_t call_index;
    const ScriptRule* rule = nullptr;
    {
        std::lock_guard<std::mutex> lock(mu_);
        call_index = next_call_++;
        const std::uint64_t h = prompt_hash(request.messages);
        for (const auto& r : rules_) {
            if (r.match == ScriptRule::Match::Exact && r.exact_hash == h) {
                rule = &r;
                break;
            }
        }
        if (!rule) {
            for (const auto& r : rules_) {
                if (r.match == ScriptRule::Match::Step && r.step == call_index) {
                    rule = &r;
                    break;
                }
            }
        }
    }
    if (!rule) {
        throw GatewayError("mock: no rule for call " + std::to_string(call_index));
    }

    Completion out;
    out.text = rule->reply;
    truncate_at_stops(out.text, request.stop);
    bool cut = truncate_at_length(out.text, request.max_tokens);
    out.finish_reason = cut ? FinishReason::Length : FinishReason::Stop;
    out.prompt_tokens = message_tokens(request.messages);
    out.completion_tokens = static_cast<std::int64_t>(count_tokens(out.text));
    tally_.record(out.prompt_tokens, out.completion_tokens);
    return out;
}

std::size_t ScriptedGateway::calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return next_call_;
}

}  // namespace ragkit::gateway
