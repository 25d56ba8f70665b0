#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragkit/backend.hpp"
#include "ragkit/cost.hpp"
#include "ragkit/gateway.hpp"
#include "ragkit/protocol.hpp"
#include "ragkit/util.hpp"

namespace ragkit::agent {

struct EpisodeBudget {
    int max_search_turns = 5;
    int max_total_llm_calls = 32;
    int max_context_tokens = 24576;
};

struct Step {
    std::string text;  // generated text for this round, info splice included
    std::vector<protocol::Segment> segments;
    std::optional<knowledge::RetrievalResult> retrieval;
};

enum class Termination { Answered, BudgetExhausted, ProtocolFailure };
const char* termination_name(Termination t);

struct Trajectory {
    std::string question;
    std::string prompt_text;  // rendered instruction, newline-terminated
    std::vector<Step> steps;
    std::optional<std::string> final_answer;
    Termination termination = Termination::ProtocolFailure;
    CostReport cost;
    protocol::DialectKind dialect = protocol::DialectKind::AngleTag;
    std::vector<std::string> flags;  // workflow events (fallbacks, reminders, errors)
    std::string error;               // cause for ProtocolFailure

    std::string generated_text() const;
    std::string full_text() const;  // prompt_text + generated_text()
    int retrieval_count() const;
};

void to_json(nlohmann::json& j, const Trajectory& t);
void from_json(const nlohmann::json& j, Trajectory& t);
bool operator==(const Trajectory& a, const Trajectory& b);

struct LogicChainEntry {
    std::string sub_query;
    knowledge::RetrievalResult evidence;
    std::string draft;
};

struct LogicChain {
    std::vector<LogicChainEntry> entries;
};

struct SubQuery {
    std::string key;   // "Sub-query 1", ...
    std::string text;  // may contain #k / Entity#k placeholders
};

enum class DecompositionMode { Text, Triple };

struct EpisodeOptions {
    EpisodeBudget budget;
    int top_k = 5;
    double temperature = 0.0;
    int max_tokens = 1024;
    protocol::RenderOptions render;
    DecompositionMode decomposition = DecompositionMode::Text;
};

// One retrieval, one completion. The evidence block lives in the prompt.
Trajectory run_single_shot(const std::string& question, const knowledge::KnowledgeBackend& backend,
                           gateway::LlmGateway& gw, const EpisodeOptions& opts = {});

// Reasoning-driven on-demand search with knowledge refinement between
// retrieval and context insertion.
Trajectory run_on_demand(const std::string& question, const knowledge::KnowledgeBackend& backend,
                         gateway::LlmGateway& gw, const EpisodeOptions& opts = {},
                         protocol::DialectKind dialect = protocol::DialectKind::PipeTag);

// Plain ReAct loop (no refinement, no decomposition); used for evaluating
// trained policies and for rollout collection.
Trajectory run_rl_dialect(const std::string& question, const knowledge::KnowledgeBackend& backend,
                          gateway::LlmGateway& gw, const EpisodeOptions& opts,
                          protocol::DialectKind dialect);

// Decompose -> retrieve per sub-query -> draft -> verify -> expand workflow.
Trajectory run_orchestrated(const std::string& question,
                            const knowledge::KnowledgeBackend& backend, gateway::LlmGateway& gw,
                            const EpisodeOptions& opts = {});

// Compress retrieved docs into a reasoning-relevant summary: renders the
// refinement template and returns the text after its "Final Information"
// marker (the whole completion when the marker is missing). Empty docs
// short-circuit to "No helpful information found." without an LLM call.
std::string refine_knowledge(const std::string& prev_reasoning, const std::string& search_query,
                             const knowledge::RetrievalResult& docs, gateway::LlmGateway& gw,
                             const EpisodeOptions& opts = {});

struct DecompositionError : ragkit::Error {
    using ragkit::Error::Error;
};

// Splits a question into ordered sub-queries via the decomposition template.
// Unparseable JSON retries once with an appended "Output valid JSON only"
// line; a second failure throws DecompositionError.
std::vector<SubQuery> decompose(const std::string& question, gateway::LlmGateway& gw,
                                DecompositionMode mode, const EpisodeOptions& opts = {});

// Replace #k / Entity#k with answers[k]; a missing answer is an error
// naming k.
std::string substitute_placeholders(const std::string& sub_query,
                                    const std::map<int, std::string>& answers);

struct Verification {
    bool yes = false;
    std::string analysis;
};

// Yes iff the completion's final non-empty line, stripped of punctuation,
// equals "yes" case-insensitively; anything else is No.
Verification verify_evidence(const std::string& question, const LogicChain& chain,
                             const std::string& draft_answer, gateway::LlmGateway& gw,
                             const EpisodeOptions& opts = {});

// Parses a list-of-strings reply, de-duplicated against prior sub-queries by
// normalized text; unparseable replies expand to nothing.
std::vector<std::string> expand_queries(const std::string& question, const LogicChain& chain,
                                        const std::string& draft, const std::string& analysis,
                                        gateway::LlmGateway& gw, const EpisodeOptions& opts = {});

// "{\"query\": \"...\"}" action payloads unwrap to the inner string; anything
// else is returned as-is.
std::string unwrap_query_payload(const std::string& payload);

std::string final_nonempty_line(const std::string& text);

}  // namespace ragkit::agent
