#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ragkit/agent.hpp"
#include "ragkit/corpus.hpp"
#include "ragkit/gateway.hpp"

namespace ragkit::engine {

struct GatewaySettings {
    std::string mode = "mock";  // mock | openai
    std::string script_path;    // mock scenario file
    gateway::OpenAiConfig openai;
};

// The experiment grid cell: dataset x pipeline x backend under one budget.
struct RunConfig {
    std::string dataset_path;
    std::string corpus_path;
    std::string index_path;                 // load a persisted backend instead of building
    std::string pipeline = "single-shot";   // single-shot|on-demand|orchestrated|rl-angle|rl-query
    std::string backend = "dense-lexical";  // dense-lexical|dense-embedding|entity-graph|remote:<url>
    agent::EpisodeBudget budget;
    int top_k = 5;
    std::vector<std::int64_t> seeds = {0};
    GatewaySettings gateway;
    std::string output_dir = "out";
    int parallel = 4;
    bool deterministic_timing = false;
    std::string decomposition = "text";  // orchestrated: text | triple
    std::string extractor = "rule";      // entity-graph build: rule | llm
    int graph_hops = 1;
    knowledge::ChunkPolicy chunking;
    int group_size = 8;          // K for rollout collection
    double outcome_weight = 0.9; // reward alpha
};

RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);

// Canonicalized serialization used for hashing; excludes output_dir and
// parallel, which cannot change results.
nlohmann::json canonical_config_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// Existence and value checks for the fields a command is about to use.
void validate_for_build(const RunConfig& config);
void validate_for_run(const RunConfig& config);
void validate_for_collect(const RunConfig& config);

}  // namespace ragkit::engine
