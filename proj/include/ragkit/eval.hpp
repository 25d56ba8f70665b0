#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragkit/agent.hpp"
#include "ragkit/cost.hpp"

namespace ragkit::eval {

// SQuAD-style normalization: lowercase, strip punctuation, drop the articles
// a/an/the, collapse whitespace. Non-ASCII bytes pass through untouched.
std::string normalize_answer(std::string_view text);

// 1 iff some normalized gold is a non-empty substring of the normalized
// prediction. Substring semantics are literal: gold "no" matches "north".
int contain_em(const std::string& prediction, const std::vector<std::string>& golds);

// Token-multiset F1 over lowercased, punctuation-stripped whitespace tokens
// (articles are retained here, unlike contain-EM normalization). Both empty
// -> 1, exactly one empty -> 0.
double f1(const std::string& prediction, const std::string& gold);
double f1_multi(const std::string& prediction, const std::vector<std::string>& golds);

// The token stream f1 scores over.
std::vector<std::string> f1_tokens(std::string_view text);

// |retrieved doc ids across all turns ∩ gold| / |gold|; absent when gold is
// empty. Cumulative across turns.
std::optional<double> retrieval_recall(const agent::Trajectory& traj,
                                       const std::set<std::string>& gold_doc_ids);

struct QuestionRow {
    std::string qid;
    int em = 0;
    double f1 = 0.0;
    int search_turns = 0;
    std::optional<double> recall;
    std::string answer;
    std::string termination;
    std::int64_t llm_calls = 0;
    std::int64_t llm_tokens_in = 0;
    std::int64_t llm_tokens_out = 0;
    double retrieval_seconds_total = 0.0;
};

struct RunRows {
    std::int64_t seed = 0;
    std::vector<QuestionRow> rows;
};

constexpr int kReportSchemaVersion = 1;

struct MetricsReport {
    std::string dataset;
    std::string pipeline;
    std::string backend;
    int n = 0;
    int runs = 0;
    double contain_em_mean = 0.0;  // fraction in [0, 1]
    double f1_mean = 0.0;
    double em_std_over_runs = 0.0;  // population std of per-run EM means
    double mean_search_turns = 0.0;
    std::optional<double> retrieval_recall;
    CostReport cost;
    std::vector<QuestionRow> per_question;  // first run's rows, dataset order
    std::vector<double> per_run_em_means;
};

// Means over questions, variance over the per-run Contain EM means.
MetricsReport aggregate(const std::vector<RunRows>& runs, const std::string& dataset,
                        const std::string& pipeline, const std::string& backend);

// "42.36±0.22": percentages with two decimals.
std::string mean_pm_std(double mean_fraction, double std_fraction);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

std::string render_table(const MetricsReport& report);
std::string to_csv(const MetricsReport& report);

}  // namespace ragkit::eval
