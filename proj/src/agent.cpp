#include "ragkit/agent.hpp"

#include <algorithm>
#include <climits>

#include "ragkit/templates.hpp"
#include "ragkit/util.hpp"

namespace ragkit::agent {

using gateway::Completion;
using gateway::CompletionRequest;
using knowledge::RetrievalResult;
using protocol::Dialect;
using protocol::DialectKind;
using protocol::SegmentKind;

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::Answered: return "answered";
        case Termination::BudgetExhausted: return "budget_exhausted";
        case Termination::ProtocolFailure: return "protocol_failure";
    }
    return "protocol_failure";
}

std::string Trajectory::generated_text() const {
    std::string out;
    for (const Step& s : steps) out += s.text;
    return out;
}

std::string Trajectory::full_text() const {
    return prompt_text + generated_text();
}

int Trajectory::retrieval_count() const {
    int n = 0;
    for (const Step& s : steps) {
        if (s.retrieval.has_value()) ++n;
    }
    return n;
}

// --- JSON serialization ------------------------------------------------

namespace {

nlohmann::json unit_to_json(const knowledge::EvidenceUnit& u) {
    return {{"id", u.id},
            {"title", u.title},
            {"text", u.text},
            {"score", u.score},
            {"kind", knowledge::evidence_kind_name(u.kind)},
            {"source_chunk_id", u.source_chunk_id}};
}

knowledge::EvidenceUnit unit_from_json(const nlohmann::json& j) {
    knowledge::EvidenceUnit u;
    u.id = j.value("id", std::string());
    u.title = j.value("title", std::string());
    u.text = j.value("text", std::string());
    u.score = j.value("score", 0.0);
    const std::string kind = j.value("kind", "chunk");
    u.kind = kind == "graph_edge"   ? knowledge::EvidenceKind::GraphEdge
             : kind == "graph_path" ? knowledge::EvidenceKind::GraphPath
                                    : knowledge::EvidenceKind::Chunk;
    u.source_chunk_id = j.value("source_chunk_id", std::string());
    return u;
}

nlohmann::json retrieval_to_json(const RetrievalResult& r) {
    nlohmann::json units = nlohmann::json::array();
    for (const auto& u : r.units) units.push_back(unit_to_json(u));
    return {{"query", r.query},
            {"backend", r.backend_name},
            {"elapsed_ms", r.elapsed_ms},
            {"units", std::move(units)}};
}

RetrievalResult retrieval_from_json(const nlohmann::json& j) {
    RetrievalResult r;
    r.query = j.value("query", std::string());
    r.backend_name = j.value("backend", std::string());
    r.elapsed_ms = j.value("elapsed_ms", 0.0);
    for (const auto& u : j.value("units", nlohmann::json::array())) {
        r.units.push_back(unit_from_json(u));
    }
    return r;
}

SegmentKind segment_kind_from_name(const std::string& name) {
    if (name == "think") return SegmentKind::Think;
    if (name == "search") return SegmentKind::SearchQuery;
    if (name == "information") return SegmentKind::Information;
    if (name == "answer") return SegmentKind::Answer;
    return SegmentKind::Plain;
}

nlohmann::json cost_to_json(const CostReport& c) {
    return {{"construction_seconds_per_1m_tokens", c.construction_seconds_per_1m_tokens},
            {"llm_calls", c.llm_calls},
            {"llm_tokens_in", c.llm_tokens_in},
            {"llm_tokens_out", c.llm_tokens_out},
            {"mean_retrieval_seconds", c.mean_retrieval_seconds},
            {"mean_context_tokens", c.mean_context_tokens}};
}

CostReport cost_from_json(const nlohmann::json& j) {
    CostReport c;
    c.construction_seconds_per_1m_tokens = j.value("construction_seconds_per_1m_tokens", 0.0);
    c.llm_calls = j.value("llm_calls", std::int64_t{0});
    c.llm_tokens_in = j.value("llm_tokens_in", std::int64_t{0});
    c.llm_tokens_out = j.value("llm_tokens_out", std::int64_t{0});
    c.mean_retrieval_seconds = j.value("mean_retrieval_seconds", 0.0);
    c.mean_context_tokens = j.value("mean_context_tokens", 0.0);
    return c;
}

}  // namespace

void to_json(nlohmann::json& j, const Trajectory& t) {
    nlohmann::json steps = nlohmann::json::array();
    for (const Step& s : t.steps) {
        nlohmann::json segments = nlohmann::json::array();
        for (const auto& seg : s.segments) {
            segments.push_back({{"kind", protocol::segment_kind_name(seg.kind)},
                                {"text", seg.text},
                                {"begin", seg.begin},
                                {"end", seg.end}});
        }
        nlohmann::json step = {{"text", s.text}, {"segments", std::move(segments)}};
        step["retrieval"] =
            s.retrieval ? retrieval_to_json(*s.retrieval) : nlohmann::json(nullptr);
        steps.push_back(std::move(step));
    }
    j = nlohmann::json{{"question", t.question},
                       {"prompt_text", t.prompt_text},
                       {"dialect", protocol::dialect_by_kind(t.dialect).name},
                       {"steps", std::move(steps)},
                       {"termination", termination_name(t.termination)},
                       {"flags", t.flags},
                       {"error", t.error},
                       {"cost", cost_to_json(t.cost)}};
    j["final_answer"] = t.final_answer ? nlohmann::json(*t.final_answer) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, Trajectory& t) {
    t = Trajectory{};
    t.question = j.value("question", std::string());
    t.prompt_text = j.value("prompt_text", std::string());
    if (auto kind = protocol::dialect_kind_from_name(j.value("dialect", "angle"))) {
        t.dialect = *kind;
    }
    for (const auto& sj : j.value("steps", nlohmann::json::array())) {
        Step s;
        s.text = sj.value("text", std::string());
        for (const auto& gj : sj.value("segments", nlohmann::json::array())) {
            protocol::Segment seg;
            seg.kind = segment_kind_from_name(gj.value("kind", "plain"));
            seg.text = gj.value("text", std::string());
            seg.begin = gj.value("begin", std::size_t{0});
            seg.end = gj.value("end", std::size_t{0});
            s.segments.push_back(std::move(seg));
        }
        if (sj.contains("retrieval") && !sj["retrieval"].is_null()) {
            s.retrieval = retrieval_from_json(sj["retrieval"]);
        }
        t.steps.push_back(std::move(s));
    }
    if (j.contains("final_answer") && !j["final_answer"].is_null()) {
        t.final_answer = j["final_answer"].get<std::string>();
    }
    const std::string term = j.value("termination", "protocol_failure");
    t.termination = term == "answered"           ? Termination::Answered
                    : term == "budget_exhausted" ? Termination::BudgetExhausted
                                                 : Termination::ProtocolFailure;
    t.flags = j.value("flags", std::vector<std::string>{});
    t.error = j.value("error", std::string());
    if (j.contains("cost")) t.cost = cost_from_json(j["cost"]);
}

bool operator==(const Trajectory& a, const Trajectory& b) {
    nlohmann::json ja, jb;
    to_json(ja, a);
    to_json(jb, b);
    return ja == jb;
}

// --- episode plumbing ---------------------------------------------------

namespace {

// Thrown when an episode tries to exceed its LLM call budget.
struct CallBudgetExceeded {};

class BudgetedGateway : public gateway::LlmGateway {
public:
    BudgetedGateway(gateway::LlmGateway& inner, int max_calls)
        : inner_(&inner), max_calls_(max_calls) {}
    Completion complete(const CompletionRequest& request) override {
        if (calls_ >= max_calls_) throw CallBudgetExceeded{};
        ++calls_;
        return inner_->complete(request);
    }
    std::string name() const override { return inner_->name(); }
    int calls() const { return calls_; }

private:
    gateway::LlmGateway* inner_;
    int max_calls_;
    int calls_ = 0;
};

constexpr const char* kRetrievalSentinel = "No results found.";
constexpr const char* kRefineSentinel = "No helpful information found.";
constexpr const char* kForcedAnswerSuffix = "Based on the above, answer now";

Completion issue(gateway::LlmGateway& gw, const std::string& context,
                 std::vector<std::string> stop, const EpisodeOptions& opts) {
    CompletionRequest req;
    req.messages.push_back(gateway::Message{"user", context});
    req.max_tokens = opts.max_tokens;
    req.temperature = opts.temperature;
    req.stop = std::move(stop);
    return gw.complete(req);
}

// Re-append the close tag a stop sequence swallowed, so boundary detection
// sees the complete action. When both an action and an answer tag are left
// open, the one opened last is the one being generated.
std::string reconstruct_close(std::string text, const Dialect& d) {
    auto open_without_close = [&](const std::string& open,
                                  const std::string& close) -> std::size_t {
        std::size_t last_open = text.rfind(open);
        if (last_open == std::string::npos) return std::string::npos;
        if (text.find(close, last_open + open.size()) != std::string::npos) {
            return std::string::npos;
        }
        return last_open;
    };
    std::size_t action_at = open_without_close(d.action_open, d.action_close);
    std::size_t answer_at = open_without_close(d.answer_open, d.answer_close);
    if (action_at == std::string::npos && answer_at == std::string::npos) return text;
    if (answer_at != std::string::npos &&
        (action_at == std::string::npos || answer_at > action_at)) {
        return text + d.answer_close;
    }
    return text + d.action_close;
}

const templates::PromptTemplate& loop_instruction(DialectKind dialect) {
    switch (dialect) {
        case DialectKind::PipeTag: return templates::search_o1_instruction();
        case DialectKind::QueryTag: return templates::graph_r1_instruction();
        case DialectKind::AngleTag: return templates::search_r1_instruction();
    }
    return templates::search_r1_instruction();
}

std::string format_reminder(const Dialect& d) {
    return "(Reminder: follow the required output format. Use " + d.action_open + "..." +
           d.action_close + " to search, or " + d.answer_open + "..." + d.answer_close +
           " to give the final answer.)";
}

void push_step(Trajectory& traj, std::string& ctx, std::string text, const Dialect& d,
               std::optional<RetrievalResult> retrieval = std::nullopt) {
    Step s;
    s.text = std::move(text);
    s.segments = protocol::parse_segments(s.text, d);
    s.retrieval = std::move(retrieval);
    ctx += s.text;
    traj.steps.push_back(std::move(s));
}

void fill_cost(Trajectory& traj, const CostTally& tally) {
    traj.cost.llm_calls = tally.call_count();
    traj.cost.llm_tokens_in = tally.total_prompt_tokens();
    traj.cost.llm_tokens_out = tally.total_completion_tokens();
    traj.cost.mean_context_tokens =
        traj.cost.llm_calls > 0
            ? static_cast<double>(traj.cost.llm_tokens_in) / static_cast<double>(traj.cost.llm_calls)
            : 0.0;
    double ms = 0.0;
    int n = 0;
    for (const Step& s : traj.steps) {
        if (s.retrieval) {
            ms += s.retrieval->elapsed_ms;
            ++n;
        }
    }
    traj.cost.mean_retrieval_seconds = n > 0 ? ms / 1000.0 / n : 0.0;
}

// One extra completion after the budget hit; the trajectory still terminates
// BudgetExhausted even when an answer comes back.
void forced_answer(Trajectory& traj, std::string& ctx, gateway::LlmGateway& gw,
                   const EpisodeOptions& opts, const Dialect& d) {
    try {
        Completion c =
            issue(gw, traj.prompt_text + ctx + "\n" + kForcedAnswerSuffix, {d.answer_close}, opts);
        std::string text = reconstruct_close(c.text, d);
        push_step(traj, ctx, text + "\n", d);
        if (auto ans = protocol::extract_answer(text, d)) traj.final_answer = ans;
    } catch (const CallBudgetExceeded&) {
        traj.flags.push_back("llm_call_budget");
    } catch (const GatewayError& e) {
        traj.flags.push_back(std::string("forced_answer_gateway_error: ") + e.what());
    }
    traj.termination = Termination::BudgetExhausted;
}

Trajectory run_loop(const std::string& question, const knowledge::KnowledgeBackend& backend,
                    gateway::LlmGateway& outer, const EpisodeOptions& opts, DialectKind dialect,
                    bool refine) {
    gateway::TallyingGateway tallied(outer);
    BudgetedGateway gw(tallied, opts.budget.max_total_llm_calls);
    const Dialect& d = protocol::dialect_by_kind(dialect);

    Trajectory traj;
    traj.question = question;
    traj.dialect = dialect;
    std::map<std::string, std::string> values = {{"question", question}};
    if (dialect == DialectKind::PipeTag) {
        values["MAX_SEARCH_LIMIT"] = std::to_string(opts.budget.max_search_turns);
    }
    traj.prompt_text = loop_instruction(dialect).render(values) + "\n";

    std::string ctx;
    int turns = 0;
    bool reminded = false;

    try {
        while (true) {
            if (static_cast<int>(count_tokens(traj.prompt_text + ctx)) >
                opts.budget.max_context_tokens) {
                traj.flags.push_back("context_budget");
                forced_answer(traj, ctx, gw, opts, d);
                break;
            }
            Completion c = issue(gw, traj.prompt_text + ctx, {d.action_close, d.answer_close}, opts);
            std::string text = reconstruct_close(c.text, d);
            auto boundary = protocol::detect_action_boundary(text, d);

            if (boundary && boundary->kind == protocol::BoundaryKind::AnswerIssued) {
                push_step(traj, ctx, text + "\n", d);
                traj.final_answer = boundary->payload;
                traj.termination = Termination::Answered;
                break;
            }

            if (boundary && boundary->kind == protocol::BoundaryKind::SearchIssued) {
                if (turns >= opts.budget.max_search_turns) {
                    push_step(traj, ctx, text + "\n", d);
                    traj.flags.push_back("search_budget");
                    forced_answer(traj, ctx, gw, opts, d);
                    break;
                }
                ++turns;
                const std::string query = unwrap_query_payload(boundary->payload);
                std::optional<RetrievalResult> result;
                std::string info_body;
                try {
                    result = backend.retrieve(query, opts.top_k);
                } catch (const std::exception& e) {
                    traj.flags.push_back(std::string("retrieval_error: ") + e.what());
                }
                if (result && refine) {
                    info_body = refine_knowledge(ctx + text, query, *result, gw, opts);
                } else if (result) {
                    info_body = protocol::format_evidence(*result, opts.render);
                } else {
                    info_body = kRetrievalSentinel;
                }
                push_step(traj, ctx,
                          text + "\n" + d.info_open + info_body + d.info_close + "\n", d,
                          std::move(result));
                continue;
            }

            // No action boundary: a boxed answer still terminates; otherwise
            // remind once, then give up.
            if (auto ans = protocol::extract_answer(text, d)) {
                push_step(traj, ctx, text + "\n", d);
                traj.final_answer = ans;
                traj.termination = Termination::Answered;
                break;
            }
            push_step(traj, ctx, text + "\n", d);
            if (!reminded) {
                reminded = true;
                traj.flags.push_back("format_reminder");
                ctx += format_reminder(d) + "\n";
                continue;
            }
            traj.flags.push_back("no_progress");
            traj.termination = Termination::BudgetExhausted;
            break;
        }
    } catch (const CallBudgetExceeded&) {
        traj.flags.push_back("llm_call_budget");
        traj.termination = Termination::BudgetExhausted;
    } catch (const GatewayError& e) {
        traj.termination = Termination::ProtocolFailure;
        traj.error = e.what();
    }

    fill_cost(traj, tallied.tally());
    return traj;
}

}  // namespace

std::string unwrap_query_payload(const std::string& payload) {
    nlohmann::json j = nlohmann::json::parse(payload, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("query") && j["query"].is_string()) {
        return j["query"].get<std::string>();
    }
    return payload;
}

std::string final_nonempty_line(const std::string& text) {
    std::size_t end = text.size();
    while (end > 0) {
        std::size_t start = text.rfind('\n', end - 1);
        std::size_t line_begin = start == std::string::npos ? 0 : start + 1;
        std::string line = trim(text.substr(line_begin, end - line_begin));
        if (!line.empty()) return line;
        if (start == std::string::npos) break;
        end = start;
    }
    return "";
}

std::string refine_knowledge(const std::string& prev_reasoning, const std::string& search_query,
                             const knowledge::RetrievalResult& docs, gateway::LlmGateway& gw,
                             const EpisodeOptions& opts) {
    if (docs.units.empty()) return kRefineSentinel;
    std::string prompt = templates::reason_in_documents().render(
        {{"prev_reasoning", prev_reasoning},
         {"search_query", search_query},
         {"document", protocol::format_evidence(docs, opts.render)}});
    Completion c = issue(gw, prompt, {}, opts);
    const std::string marker = "Final Information";
    std::size_t pos = c.text.find(marker);
    if (pos == std::string::npos) return c.text;
    return trim(c.text.substr(pos + marker.size()));
}

Trajectory run_single_shot(const std::string& question, const knowledge::KnowledgeBackend& backend,
                           gateway::LlmGateway& outer, const EpisodeOptions& opts) {
    gateway::TallyingGateway tallied(outer);
    BudgetedGateway gw(tallied, opts.budget.max_total_llm_calls);
    const Dialect& d = protocol::angle_tag();

    Trajectory traj;
    traj.question = question;
    traj.dialect = DialectKind::AngleTag;

    std::optional<RetrievalResult> result;
    try {
        result = backend.retrieve(question, opts.top_k);
    } catch (const std::exception& e) {
        traj.flags.push_back(std::string("retrieval_error: ") + e.what());
    }
    RetrievalResult for_render;
    if (result) for_render = *result;
    const std::string evidence = protocol::render_information(for_render, d, opts.render);
    traj.prompt_text = templates::single_shot_instruction().render(
                           {{"evidence", evidence}, {"question", question}}) +
                       "\n";

    try {
        Completion c = issue(gw, traj.prompt_text, {}, opts);
        std::string ctx;
        push_step(traj, ctx, c.text + "\n", d, std::move(result));
        auto ans = protocol::extract_answer(c.text, d);
        if (!ans) {
            std::string whole = trim(c.text);
            if (!whole.empty()) ans = whole;  // untagged single-shot answers count
        }
        if (ans) {
            traj.final_answer = ans;
            traj.termination = Termination::Answered;
        } else {
            traj.termination = Termination::ProtocolFailure;
            traj.error = "empty completion";
        }
    } catch (const CallBudgetExceeded&) {
        traj.flags.push_back("llm_call_budget");
        traj.termination = Termination::BudgetExhausted;
    } catch (const GatewayError& e) {
        traj.termination = Termination::ProtocolFailure;
        traj.error = e.what();
    }
    fill_cost(traj, tallied.tally());
    return traj;
}

Trajectory run_on_demand(const std::string& question, const knowledge::KnowledgeBackend& backend,
                         gateway::LlmGateway& gw, const EpisodeOptions& opts,
                         DialectKind dialect) {
    return run_loop(question, backend, gw, opts, dialect, /*refine=*/true);
}

Trajectory run_rl_dialect(const std::string& question, const knowledge::KnowledgeBackend& backend,
                          gateway::LlmGateway& gw, const EpisodeOptions& opts,
                          DialectKind dialect) {
    return run_loop(question, backend, gw, opts, dialect, /*refine=*/false);
}

// --- orchestrated workflow ----------------------------------------------

namespace {

std::string strip_code_fences(std::string text) {
    std::size_t fence = text.find("```");
    while (fence != std::string::npos) {
        std::size_t line_end = text.find('\n', fence);
        if (line_end == std::string::npos) {
            text.erase(fence);
            break;
        }
        text.erase(fence, line_end - fence + 1);
        fence = text.find("```");
    }
    return text;
}

int trailing_int(const std::string& key) {
    std::size_t end = key.size();
    while (end > 0 && key[end - 1] >= '0' && key[end - 1] <= '9') --end;
    if (end == key.size()) return INT_MAX;
    return std::stoi(key.substr(end));
}

std::string triple_value_to_text(const nlohmann::json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_array()) {
        std::string out;
        for (const auto& item : value) {
            if (!out.empty()) out += "\n";
            if (item.is_string()) {
                out += item.get<std::string>();
            } else if (item.is_array()) {
                std::string line = "(";
                for (std::size_t i = 0; i < item.size(); ++i) {
                    if (i > 0) line += ", ";
                    line += item[i].is_string() ? item[i].get<std::string>() : item[i].dump();
                }
                line += ")";
                out += line;
            } else {
                out += item.dump();
            }
        }
        return out;
    }
    return value.dump();
}

std::string chain_context(const LogicChain& chain, const protocol::RenderOptions& render) {
    std::string out;
    for (std::size_t i = 0; i < chain.entries.size(); ++i) {
        const auto& e = chain.entries[i];
        out += "Sub-query " + std::to_string(i + 1) + ": " + e.sub_query + "\n";
        out += "Evidence:\n" + protocol::format_evidence(e.evidence, render) + "\n";
        if (!e.draft.empty()) out += "Draft: " + e.draft + "\n";
        out += "\n";
    }
    return out;
}

std::string strip_to_alnum_space(const std::string& s) {
    std::string out;
    for (char c : s) {
        bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == ' ';
        if (keep) out.push_back(c);
    }
    return out;
}

}  // namespace

std::vector<SubQuery> decompose(const std::string& question, gateway::LlmGateway& gw,
                                DecompositionMode mode, const EpisodeOptions& opts) {
    const auto& tmpl = mode == DecompositionMode::Text ? templates::decompose_text()
                                                       : templates::decompose_triple();
    std::string prompt = tmpl.render({{"query", question}});
    for (int attempt = 0; attempt < 2; ++attempt) {
        Completion c = issue(gw, prompt, {}, opts);
        std::string text = strip_code_fences(c.text);
        std::size_t open = text.find('{');
        std::size_t close = text.rfind('}');
        if (open != std::string::npos && close != std::string::npos && close > open) {
            nlohmann::json obj =
                nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
            if (!obj.is_discarded() && obj.is_object() && !obj.empty()) {
                std::vector<SubQuery> out;
                for (auto it = obj.begin(); it != obj.end(); ++it) {
                    out.push_back(SubQuery{it.key(), triple_value_to_text(it.value())});
                }
                std::stable_sort(out.begin(), out.end(),
                                 [](const SubQuery& a, const SubQuery& b) {
                                     return trailing_int(a.key) < trailing_int(b.key);
                                 });
                return out;
            }
        }
        prompt += "\nOutput valid JSON only";
    }
    throw DecompositionError("decomposition: reply was not a JSON object after retry");
}

std::string substitute_placeholders(const std::string& sub_query,
                                    const std::map<int, std::string>& answers) {
    std::string out;
    std::size_t i = 0;
    const std::string entity = "Entity#";
    while (i < sub_query.size()) {
        bool is_entity = sub_query.compare(i, entity.size(), entity) == 0;
        bool is_hash = sub_query[i] == '#';
        std::size_t digits = i + (is_entity ? entity.size() : 1);
        if ((is_entity || is_hash) && digits < sub_query.size() &&
            sub_query[digits] >= '0' && sub_query[digits] <= '9') {
            std::size_t end = digits;
            while (end < sub_query.size() && sub_query[end] >= '0' && sub_query[end] <= '9') ++end;
            int k = std::stoi(sub_query.substr(digits, end - digits));
            auto it = answers.find(k);
            if (it == answers.end()) {
                throw ContractError("substitution: missing answer for #" + std::to_string(k));
            }
            out += it->second;
            i = end;
            continue;
        }
        out.push_back(sub_query[i]);
        ++i;
    }
    return out;
}

Verification verify_evidence(const std::string& question, const LogicChain& chain,
                             const std::string& draft_answer, gateway::LlmGateway& gw,
                             const EpisodeOptions& opts) {
    std::string prompt = templates::evidence_verification().render(
        {{"query", question},
         {"context_data", chain_context(chain, opts.render)},
         {"model_response", draft_answer}});
    Completion c = issue(gw, prompt, {}, opts);
    Verification v;
    v.analysis = c.text;
    std::string verdict = normalize_ws(strip_to_alnum_space(final_nonempty_line(c.text)));
    v.yes = (verdict == "yes");  // anything else is a No
    return v;
}

std::vector<std::string> expand_queries(const std::string& question, const LogicChain& chain,
                                        const std::string& draft, const std::string& analysis,
                                        gateway::LlmGateway& gw, const EpisodeOptions& opts) {
    std::string prompt = templates::query_expansion().render(
        {{"query", question},
         {"context_data", chain_context(chain, opts.render)},
         {"model_response", draft},
         {"evidence_verification", analysis}});
    Completion c = issue(gw, prompt, {}, opts);

    std::vector<std::string> raw;
    std::string text = strip_code_fences(c.text);
    std::size_t open = text.find('[');
    std::size_t close = text.rfind(']');
    if (open != std::string::npos && close != std::string::npos && close > open) {
        nlohmann::json arr =
            nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
        if (!arr.is_discarded() && arr.is_array()) {
            for (const auto& item : arr) {
                if (item.is_string()) raw.push_back(item.get<std::string>());
            }
        } else {
            // python-style list with single quotes: pull out quoted runs
            std::string body = text.substr(open + 1, close - open - 1);
            std::size_t i = 0;
            while (i < body.size()) {
                char q = body[i];
                if (q == '\'' || q == '"') {
                    std::size_t end = body.find(q, i + 1);
                    if (end == std::string::npos) break;
                    raw.push_back(body.substr(i + 1, end - i - 1));
                    i = end + 1;
                } else {
                    ++i;
                }
            }
        }
    }

    std::vector<std::string> out;
    std::vector<std::string> seen;
    for (const auto& e : chain.entries) seen.push_back(normalize_ws(e.sub_query));
    for (const auto& q : raw) {
        std::string norm = normalize_ws(q);
        if (norm.empty()) continue;
        if (std::find(seen.begin(), seen.end(), norm) != seen.end()) continue;
        seen.push_back(norm);
        out.push_back(trim(q));
    }
    return out;
}

Trajectory run_orchestrated(const std::string& question,
                            const knowledge::KnowledgeBackend& backend, gateway::LlmGateway& outer,
                            const EpisodeOptions& opts) {
    gateway::TallyingGateway tallied(outer);
    BudgetedGateway gw(tallied, opts.budget.max_total_llm_calls);
    const Dialect& d = protocol::angle_tag();

    Trajectory traj;
    traj.question = question;
    traj.dialect = DialectKind::AngleTag;
    traj.prompt_text = question + "\n";
    std::string ctx;

    auto retrieve_or_flag = [&](const std::string& query) {
        RetrievalResult result;
        try {
            result = backend.retrieve(query, opts.top_k);
        } catch (const std::exception& e) {
            traj.flags.push_back(std::string("retrieval_error: ") + e.what());
            result.query = query;
        }
        return result;
    };

    try {
        std::vector<SubQuery> pending;
        try {
            pending = decompose(question, gw, opts.decomposition, opts);
        } catch (const DecompositionError&) {
            // fall back to single-shot semantics inside this episode
            traj.flags.push_back("decomposition_fallback");
            RetrievalResult result = retrieve_or_flag(question);
            const std::string evidence = protocol::render_information(result, d, opts.render);
            std::string prompt = templates::single_shot_instruction().render(
                {{"evidence", evidence}, {"question", question}});
            Completion c = issue(gw, prompt, {}, opts);
            push_step(traj, ctx, c.text + "\n", d, std::move(result));
            auto ans = protocol::extract_answer(c.text, d);
            if (!ans && !trim(c.text).empty()) ans = trim(c.text);
            traj.final_answer = ans;
            traj.termination = ans ? Termination::Answered : Termination::BudgetExhausted;
            fill_cost(traj, tallied.tally());
            return traj;
        }

        LogicChain chain;
        std::map<int, std::string> answers;
        int turns = 0;
        int next_index = 1;
        const int initial_count = static_cast<int>(pending.size());
        const int max_reverifies = std::max(0, opts.budget.max_search_turns - initial_count);

        auto process_subquery = [&](const std::string& raw_text) {
            std::string substituted;
            try {
                substituted = substitute_placeholders(raw_text, answers);
            } catch (const ContractError& e) {
                traj.flags.push_back(std::string("substitution_error: ") + e.what());
                substituted = raw_text;
            }
            RetrievalResult result = retrieve_or_flag(substituted);
            std::string entry_draft;
            Completion c = issue(gw,
                                 templates::deep_answer().render(
                                     {{"query", substituted},
                                      {"context_data", protocol::format_evidence(result, opts.render)}}),
                                 {}, opts);
            entry_draft = trim(c.text);
            std::string step_text = d.action_open + substituted + d.action_close + "\n" +
                                    d.info_open + protocol::format_evidence(result, opts.render) +
                                    d.info_close + "\n" + d.think_open + entry_draft +
                                    d.think_close + "\n";
            push_step(traj, ctx, std::move(step_text), d, std::move(result));
            chain.entries.push_back(
                LogicChainEntry{substituted, traj.steps.back().retrieval.value(), entry_draft});
            answers[next_index] = final_nonempty_line(entry_draft);
            ++next_index;
            ++turns;
        };

        for (const SubQuery& sq : pending) {
            if (turns >= opts.budget.max_search_turns) break;
            process_subquery(sq.text);
        }

        auto draft_and_verify = [&]() {
            Completion c = issue(gw,
                                 templates::deep_answer().render(
                                     {{"query", question},
                                      {"context_data", chain_context(chain, opts.render)}}),
                                 {}, opts);
            std::string draft = trim(c.text);
            Verification v = verify_evidence(question, chain, draft, gw, opts);
            return std::pair<std::string, Verification>(draft, v);
        };

        auto [draft, verdict] = draft_and_verify();
        int reverifies = 0;
        while (!verdict.yes && reverifies < max_reverifies &&
               turns < opts.budget.max_search_turns) {
            auto additions = expand_queries(question, chain, draft, verdict.analysis, gw, opts);
            if (additions.empty()) break;
            for (const auto& q : additions) {
                if (turns >= opts.budget.max_search_turns) break;
                process_subquery(q);
            }
            std::tie(draft, verdict) = draft_and_verify();
            ++reverifies;
        }

        auto tagged = protocol::extract_answer(draft, d);
        std::optional<std::string> ans = tagged;
        if (!ans && !draft.empty()) ans = draft;  // contain-EM scores the whole draft
        std::string final_step = d.think_open + draft + d.think_close + "\n";
        if (ans) {
            const std::string shown = tagged ? *tagged : final_nonempty_line(draft);
            final_step += d.answer_open + " " + shown + " " + d.answer_close + "\n";
        }
        push_step(traj, ctx, std::move(final_step), d);
        traj.final_answer = ans;
        traj.termination = verdict.yes && ans ? Termination::Answered
                                              : Termination::BudgetExhausted;
    } catch (const CallBudgetExceeded&) {
        traj.flags.push_back("llm_call_budget");
        traj.termination = Termination::BudgetExhausted;
    } catch (const GatewayError& e) {
        traj.termination = Termination::ProtocolFailure;
        traj.error = e.what();
    }

    fill_cost(traj, tallied.tally());
    return traj;
}

}  // namespace ragkit::agent
