#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragkit/backend.hpp"
#include "ragkit/eval.hpp"
#include "ragkit/run_config.hpp"

namespace ragkit::engine {

struct DatasetItem {
    std::string id;
    std::string question;
    std::vector<std::string> golden_answers;
    std::vector<std::string> gold_doc_ids;  // optional, enables recall
};

// One JSON object per line: {"id", "question", "golden_answers": [...]}.
std::vector<DatasetItem> load_dataset(const std::string& path);

// Offline preprocessing: build the configured backend from the corpus,
// persist it under output_dir, and report construction cost.
struct BuildOutcome {
    std::string index_path;
    CostReport cost;
    double construction_seconds = 0.0;
    std::int64_t corpus_tokens = 0;
    nlohmann::json summary;  // chunk/node/edge counts and friends
};
BuildOutcome cmd_build(const RunConfig& config);

// Online inference: one full pass per seed, aggregated into a MetricsReport.
// Resumable through a per-question cache keyed by (qid, seed, config hash).
struct RunOutcome {
    eval::MetricsReport report;
    std::string report_json_path;
    std::string report_table_path;
    std::string csv_path;
    int cache_hits = 0;
    int cache_misses = 0;
};
RunOutcome cmd_run(const RunConfig& config);

// GRPO rollout collection: a GroupBatch per question, exported as JSONL.
struct CollectOutcome {
    std::vector<std::string> batch_files;
    std::size_t records = 0;
};
CollectOutcome cmd_collect(const RunConfig& config);

// Merge report files into a pipeline x backend grid per dataset, with
// best (*) and second-best (^) markers per dataset column.
std::string cmd_report(const std::vector<std::string>& report_paths);

// Mock scenario selection: the first scenario whose "match" substring occurs
// in the question; falls back to "default_replies".
class MockScriptBook {
public:
    static MockScriptBook load(const std::string& path);
    std::unique_ptr<gateway::ScriptedGateway> gateway_for(const std::string& question) const;

private:
    struct Scenario {
        std::string match;
        std::vector<std::string> replies;
    };
    std::vector<Scenario> scenarios_;
    std::vector<std::string> default_replies_;
};

// Shared episode dispatch used by cmd_run and cmd_collect.
agent::Trajectory run_episode(const RunConfig& config, const std::string& question,
                              const knowledge::KnowledgeBackend& backend,
                              gateway::LlmGateway& gw);

std::unique_ptr<knowledge::KnowledgeBackend> make_backend(const RunConfig& config,
                                                          gateway::LlmGateway* build_gateway);

}  // namespace ragkit::engine
