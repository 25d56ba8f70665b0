#include "ragkit/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "ragkit/backend.hpp"
#include "ragkit/util.hpp"

namespace ragkit::eval {

std::string normalize_answer(std::string_view text) {
    // lowercase + strip ASCII punctuation
    std::string depunct;
    depunct.reserve(text.size());
    for (char raw : text) {
        char c = raw;
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        unsigned char u = static_cast<unsigned char>(c);
        bool punct = u < 0x80 && std::ispunct(u);
        if (!punct) depunct.push_back(c);
    }
    // drop articles, collapse whitespace
    std::string out;
    for (const auto& tok : tokenize_ws(depunct)) {
        std::string word(tok.text);
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += word;
    }
    return out;
}

int contain_em(const std::string& prediction, const std::vector<std::string>& golds) {
    const std::string pred = normalize_answer(prediction);
    for (const auto& gold : golds) {
        const std::string g = normalize_answer(gold);
        if (g.empty()) continue;
        if (pred.find(g) != std::string::npos) return 1;
    }
    return 0;
}

std::vector<std::string> f1_tokens(std::string_view text) {
    std::string depunct;
    depunct.reserve(text.size());
    for (char raw : text) {
        char c = raw;
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        unsigned char u = static_cast<unsigned char>(c);
        bool punct = u < 0x80 && std::ispunct(u);
        if (!punct) depunct.push_back(c);
    }
    std::vector<std::string> out;
    for (const auto& t : tokenize_ws(depunct)) out.emplace_back(t.text);
    return out;
}

double f1(const std::string& prediction, const std::string& gold) {
    auto pred_tokens = f1_tokens(prediction);
    auto gold_tokens = f1_tokens(gold);
    if (pred_tokens.empty() && gold_tokens.empty()) return 1.0;
    if (pred_tokens.empty() || gold_tokens.empty()) return 0.0;

    std::map<std::string, int> pred_counts;
    for (const auto& t : pred_tokens) pred_counts[t] += 1;
    int overlap = 0;
    for (const auto& t : gold_tokens) {
        auto it = pred_counts.find(t);
        if (it != pred_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;
        }
    }
    return 2.0 * overlap /
           static_cast<double>(pred_tokens.size() + gold_tokens.size());
}

double f1_multi(const std::string& prediction, const std::vector<std::string>& golds) {
    double best = 0.0;
    for (const auto& gold : golds) best = std::max(best, f1(prediction, gold));
    return best;
}

std::optional<double> retrieval_recall(const agent::Trajectory& traj,
                                       const std::set<std::string>& gold_doc_ids) {
    if (gold_doc_ids.empty()) return std::nullopt;
    std::set<std::string> retrieved;
    for (const auto& step : traj.steps) {
        if (!step.retrieval) continue;
        for (const auto& unit : step.retrieval->units) {
            retrieved.insert(knowledge::unit_doc_id(unit));
        }
    }
    int hit = 0;
    for (const auto& g : gold_doc_ids) {
        if (retrieved.count(g)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(gold_doc_ids.size());
}

MetricsReport aggregate(const std::vector<RunRows>& runs, const std::string& dataset,
                        const std::string& pipeline, const std::string& backend) {
    if (runs.empty()) throw ContractError("aggregate: no runs");
    const std::size_t n = runs.front().rows.size();
    if (n == 0) throw ContractError("aggregate: no question rows");
    for (const auto& run : runs) {
        if (run.rows.size() != n) {
            throw ContractError("aggregate: runs cover different question counts");
        }
    }

    MetricsReport report;
    report.dataset = dataset;
    report.pipeline = pipeline;
    report.backend = backend;
    report.n = static_cast<int>(n);
    report.runs = static_cast<int>(runs.size());
    report.per_question = runs.front().rows;

    double em_total = 0.0, f1_total = 0.0, turns_total = 0.0;
    double recall_total = 0.0;
    std::size_t recall_n = 0;
    std::int64_t calls = 0, tokens_in = 0, tokens_out = 0;
    double retrieval_seconds = 0.0;
    std::int64_t retrievals = 0;

    for (const auto& run : runs) {
        double run_em = 0.0;
        for (const auto& row : run.rows) {
            run_em += row.em;
            em_total += row.em;
            f1_total += row.f1;
            turns_total += row.search_turns;
            if (row.recall) {
                recall_total += *row.recall;
                ++recall_n;
            }
            calls += row.llm_calls;
            tokens_in += row.llm_tokens_in;
            tokens_out += row.llm_tokens_out;
            retrieval_seconds += row.retrieval_seconds_total;
            retrievals += row.search_turns;
        }
        report.per_run_em_means.push_back(run_em / static_cast<double>(n));
    }

    const double total_rows = static_cast<double>(n * runs.size());
    report.contain_em_mean = em_total / total_rows;
    report.f1_mean = f1_total / total_rows;
    report.mean_search_turns = turns_total / total_rows;
    if (recall_n > 0) report.retrieval_recall = recall_total / static_cast<double>(recall_n);

    double mean_of_means = 0.0;
    for (double m : report.per_run_em_means) mean_of_means += m;
    mean_of_means /= static_cast<double>(report.per_run_em_means.size());
    double var = 0.0;
    for (double m : report.per_run_em_means) var += (m - mean_of_means) * (m - mean_of_means);
    var /= static_cast<double>(report.per_run_em_means.size());  // population
    report.em_std_over_runs = std::sqrt(var);

    report.cost.llm_calls = calls;
    report.cost.llm_tokens_in = tokens_in;
    report.cost.llm_tokens_out = tokens_out;
    report.cost.mean_retrieval_seconds =
        retrievals > 0 ? retrieval_seconds / static_cast<double>(retrievals) : 0.0;
    report.cost.mean_context_tokens =
        calls > 0 ? static_cast<double>(tokens_in) / static_cast<double>(calls) : 0.0;
    return report;
}

std::string mean_pm_std(double mean_fraction, double std_fraction) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f±%.2f", mean_fraction * 100.0,
                  std_fraction * 100.0);
    return std::string(buf);
}

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json per_question = nlohmann::json::array();
    for (const auto& row : report.per_question) {
        nlohmann::json r = {{"qid", row.qid},
                            {"em", row.em},
                            {"f1", row.f1},
                            {"turns", row.search_turns},
                            {"answer", row.answer},
                            {"termination", row.termination},
                            {"llm_calls", row.llm_calls},
                            {"llm_tokens_in", row.llm_tokens_in},
                            {"llm_tokens_out", row.llm_tokens_out},
                            {"retrieval_seconds_total", row.retrieval_seconds_total}};
        r["recall"] = row.recall ? nlohmann::json(*row.recall) : nlohmann::json(nullptr);
        per_question.push_back(std::move(r));
    }
    nlohmann::json j = {
        {"schema_version", kReportSchemaVersion},
        {"dataset", report.dataset},
        {"pipeline", report.pipeline},
        {"backend", report.backend},
        {"n", report.n},
        {"runs", report.runs},
        {"contain_em_mean", report.contain_em_mean},
        {"f1_mean", report.f1_mean},
        {"em_std_over_runs", report.em_std_over_runs},
        {"em_mean_pm_std", mean_pm_std(report.contain_em_mean, report.em_std_over_runs)},
        {"mean_search_turns", report.mean_search_turns},
        {"per_run_em_means", report.per_run_em_means},
        {"cost",
         {{"construction_seconds_per_1m_tokens", report.cost.construction_seconds_per_1m_tokens},
          {"llm_calls", report.cost.llm_calls},
          {"llm_tokens_in", report.cost.llm_tokens_in},
          {"llm_tokens_out", report.cost.llm_tokens_out},
          {"mean_retrieval_seconds", report.cost.mean_retrieval_seconds},
          {"mean_context_tokens", report.cost.mean_context_tokens}}},
        {"per_question", std::move(per_question)},
        {"metadata",
         {{"normalization", "squad"},
          {"variance", "population std over per-run contain-em means"},
          {"recall", "cumulative over turns"}}},
    };
    j["retrieval_recall"] =
        report.retrieval_recall ? nlohmann::json(*report.retrieval_recall) : nlohmann::json(nullptr);
    return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
    const int version = j.value("schema_version", -1);
    if (version != kReportSchemaVersion) {
        throw ConfigError("report schema version mismatch: found " + std::to_string(version) +
                          ", expected " + std::to_string(kReportSchemaVersion));
    }
    MetricsReport report;
    report.dataset = j.value("dataset", std::string());
    report.pipeline = j.value("pipeline", std::string());
    report.backend = j.value("backend", std::string());
    report.n = j.value("n", 0);
    report.runs = j.value("runs", 0);
    report.contain_em_mean = j.value("contain_em_mean", 0.0);
    report.f1_mean = j.value("f1_mean", 0.0);
    report.em_std_over_runs = j.value("em_std_over_runs", 0.0);
    report.mean_search_turns = j.value("mean_search_turns", 0.0);
    if (j.contains("retrieval_recall") && !j["retrieval_recall"].is_null()) {
        report.retrieval_recall = j["retrieval_recall"].get<double>();
    }
    report.per_run_em_means = j.value("per_run_em_means", std::vector<double>{});
    if (j.contains("cost")) {
        const auto& c = j["cost"];
        report.cost.construction_seconds_per_1m_tokens =
            c.value("construction_seconds_per_1m_tokens", 0.0);
        report.cost.llm_calls = c.value("llm_calls", std::int64_t{0});
        report.cost.llm_tokens_in = c.value("llm_tokens_in", std::int64_t{0});
        report.cost.llm_tokens_out = c.value("llm_tokens_out", std::int64_t{0});
        report.cost.mean_retrieval_seconds = c.value("mean_retrieval_seconds", 0.0);
        report.cost.mean_context_tokens = c.value("mean_context_tokens", 0.0);
    }
    for (const auto& r : j.value("per_question", nlohmann::json::array())) {
        QuestionRow row;
        row.qid = r.value("qid", std::string());
        row.em = r.value("em", 0);
        row.f1 = r.value("f1", 0.0);
        row.search_turns = r.value("turns", 0);
        if (r.contains("recall") && !r["recall"].is_null()) row.recall = r["recall"].get<double>();
        row.answer = r.value("answer", std::string());
        row.termination = r.value("termination", std::string());
        row.llm_calls = r.value("llm_calls", std::int64_t{0});
        row.llm_tokens_in = r.value("llm_tokens_in", std::int64_t{0});
        row.llm_tokens_out = r.value("llm_tokens_out", std::int64_t{0});
        row.retrieval_seconds_total = r.value("retrieval_seconds_total", 0.0);
        report.per_question.push_back(std::move(row));
    }
    return report;
}

std::string render_table(const MetricsReport& report) {
    std::ostringstream out;
    char line[256];
    out << "dataset=" << report.dataset << " pipeline=" << report.pipeline
        << " backend=" << report.backend << " n=" << report.n << " runs=" << report.runs << "\n";
    std::snprintf(line, sizeof(line), "  %-18s %s\n", "Contain EM",
                  mean_pm_std(report.contain_em_mean, report.em_std_over_runs).c_str());
    out << line;
    std::snprintf(line, sizeof(line), "  %-18s %.2f\n", "F1", report.f1_mean * 100.0);
    out << line;
    std::snprintf(line, sizeof(line), "  %-18s %.2f\n", "Search Turn", report.mean_search_turns);
    out << line;
    if (report.retrieval_recall) {
        std::snprintf(line, sizeof(line), "  %-18s %.2f\n", "Recall",
                      *report.retrieval_recall * 100.0);
        out << line;
    }
    std::snprintf(line, sizeof(line), "  %-18s %lld\n", "LLM calls",
                  static_cast<long long>(report.cost.llm_calls));
    out << line;
    std::snprintf(line, sizeof(line), "  %-18s %.4f\n", "Mean retrieval s",
                  report.cost.mean_retrieval_seconds);
    out << line;
    std::snprintf(line, sizeof(line), "  %-18s %.1f\n", "Mean context tok",
                  report.cost.mean_context_tokens);
    out << line;
    return out.str();
}

namespace {

std::string csv_escape(const std::string& s) {
    bool needs_quotes = s.find_first_of(",\"\n") != std::string::npos;
    if (!needs_quotes) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

}  // namespace

std::string to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "qid,em,f1,turns,recall,answer\n";
    for (const auto& row : report.per_question) {
        char f1buf[32];
        std::snprintf(f1buf, sizeof(f1buf), "%.4f", row.f1);
        out << csv_escape(row.qid) << "," << row.em << "," << f1buf << "," << row.search_turns
            << ",";
        if (row.recall) {
            char rbuf[32];
            std::snprintf(rbuf, sizeof(rbuf), "%.4f", *row.recall);
            out << rbuf;
        }
        out << "," << csv_escape(row.answer) << "\n";
    }
    return out.str();
}

}  // namespace ragkit::eval
