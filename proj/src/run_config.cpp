#include "ragkit/run_config.hpp"

#include <filesystem>

#include "ragkit/util.hpp"

namespace ragkit::engine {

using nlohmann::json;

RunConfig config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    c.dataset_path = doc.value("dataset", c.dataset_path);
    c.corpus_path = doc.value("corpus", c.corpus_path);
    c.index_path = doc.value("index", c.index_path);
    c.pipeline = doc.value("pipeline", c.pipeline);
    c.backend = doc.value("backend", c.backend);
    if (doc.contains("budget")) {
        const auto& b = doc["budget"];
        c.budget.max_search_turns = b.value("max_search_turns", c.budget.max_search_turns);
        c.budget.max_total_llm_calls = b.value("max_total_llm_calls", c.budget.max_total_llm_calls);
        c.budget.max_context_tokens = b.value("max_context_tokens", c.budget.max_context_tokens);
    }
    c.top_k = doc.value("top_k", c.top_k);
    if (doc.contains("seeds")) c.seeds = doc["seeds"].get<std::vector<std::int64_t>>();
    if (doc.contains("gateway")) {
        const auto& g = doc["gateway"];
        c.gateway.mode = g.value("mode", c.gateway.mode);
        c.gateway.script_path = g.value("script", c.gateway.script_path);
        c.gateway.openai.base_url = g.value("base_url", c.gateway.openai.base_url);
        c.gateway.openai.api_key_env = g.value("api_key_env", c.gateway.openai.api_key_env);
        c.gateway.openai.model = g.value("model", c.gateway.openai.model);
        c.gateway.openai.timeout_seconds = g.value("timeout_seconds", c.gateway.openai.timeout_seconds);
        c.gateway.openai.max_retries = g.value("max_retries", c.gateway.openai.max_retries);
        c.gateway.openai.parallelism = g.value("parallelism", c.gateway.openai.parallelism);
        c.gateway.openai.backoff_base_seconds =
            g.value("backoff_base_seconds", c.gateway.openai.backoff_base_seconds);
    }
    c.output_dir = doc.value("output_dir", c.output_dir);
    c.parallel = doc.value("parallel", c.parallel);
    c.deterministic_timing = doc.value("deterministic_timing", c.deterministic_timing);
    c.decomposition = doc.value("decomposition", c.decomposition);
    c.extractor = doc.value("extractor", c.extractor);
    c.graph_hops = doc.value("graph_hops", c.graph_hops);
    if (doc.contains("chunking")) {
        const auto& ch = doc["chunking"];
        c.chunking.max_tokens = ch.value("max_tokens", c.chunking.max_tokens);
        c.chunking.overlap_tokens = ch.value("overlap_tokens", c.chunking.overlap_tokens);
    }
    c.group_size = doc.value("group_size", c.group_size);
    c.outcome_weight = doc.value("outcome_weight", c.outcome_weight);
    return c;
}

json config_to_json(const RunConfig& c) {
    json doc;
    doc["dataset"] = c.dataset_path;
    doc["corpus"] = c.corpus_path;
    doc["index"] = c.index_path;
    doc["pipeline"] = c.pipeline;
    doc["backend"] = c.backend;
    doc["budget"] = {{"max_search_turns", c.budget.max_search_turns},
                     {"max_total_llm_calls", c.budget.max_total_llm_calls},
                     {"max_context_tokens", c.budget.max_context_tokens}};
    doc["top_k"] = c.top_k;
    doc["seeds"] = c.seeds;
    doc["gateway"] = {{"mode", c.gateway.mode},
                      {"script", c.gateway.script_path},
                      {"base_url", c.gateway.openai.base_url},
                      {"api_key_env", c.gateway.openai.api_key_env},
                      {"model", c.gateway.openai.model},
                      {"timeout_seconds", c.gateway.openai.timeout_seconds},
                      {"max_retries", c.gateway.openai.max_retries},
                      {"parallelism", c.gateway.openai.parallelism},
                      {"backoff_base_seconds", c.gateway.openai.backoff_base_seconds}};
    doc["output_dir"] = c.output_dir;
    doc["parallel"] = c.parallel;
    doc["deterministic_timing"] = c.deterministic_timing;
    doc["decomposition"] = c.decomposition;
    doc["extractor"] = c.extractor;
    doc["graph_hops"] = c.graph_hops;
    doc["chunking"] = {{"max_tokens", c.chunking.max_tokens},
                       {"overlap_tokens", c.chunking.overlap_tokens}};
    doc["group_size"] = c.group_size;
    doc["outcome_weight"] = c.outcome_weight;
    return doc;
}

json canonical_config_json(const RunConfig& config) {
    json doc = config_to_json(config);
    doc.erase("output_dir");
    doc.erase("parallel");
    return doc;
}

std::string config_hash(const RunConfig& config) {
    // nlohmann objects keep keys sorted, so dump() is already canonical
    return to_hex(fnv1a64(canonical_config_json(config).dump()));
}

namespace {

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError("missing " + what + " path");
    if (!std::filesystem::exists(path)) {
        throw ConfigError(what + " path does not exist: " + path);
    }
}

bool known_pipeline(const std::string& p) {
    return p == "single-shot" || p == "on-demand" || p == "orchestrated" || p == "rl-angle" ||
           p == "rl-query";
}

bool known_backend(const std::string& b) {
    return b == "dense-lexical" || b == "dense-embedding" || b == "entity-graph" ||
           b.rfind("remote:", 0) == 0;
}

void validate_common(const RunConfig& c) {
    if (!known_backend(c.backend)) throw ConfigError("unknown backend: " + c.backend);
    if (c.top_k < 1) throw ConfigError("top_k must be >= 1");
    if (c.budget.max_search_turns < 1 || c.budget.max_total_llm_calls < 1 ||
        c.budget.max_context_tokens < 1) {
        throw ConfigError("budget fields must all be >= 1");
    }
    if (c.gateway.mode != "mock" && c.gateway.mode != "openai") {
        throw ConfigError("gateway mode must be 'mock' or 'openai'");
    }
    if (c.gateway.mode == "mock") require_file(c.gateway.script_path, "gateway script");
}

void validate_episode_source(const RunConfig& c) {
    require_file(c.dataset_path, "dataset");
    if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (!known_pipeline(c.pipeline)) throw ConfigError("unknown pipeline: " + c.pipeline);
    if (!c.index_path.empty()) {
        require_file(c.index_path, "index");
    } else if (c.backend.rfind("remote:", 0) != 0) {
        require_file(c.corpus_path, "corpus");
    }
    if (c.parallel < 1) throw ConfigError("parallel must be >= 1");
}

}  // namespace

void validate_for_build(const RunConfig& c) {
    validate_common(c);
    if (c.backend.rfind("remote:", 0) == 0) {
        throw ConfigError("remote backends are not built locally; point runs at " + c.backend);
    }
    require_file(c.corpus_path, "corpus");
    if (c.extractor != "rule" && c.extractor != "llm") {
        throw ConfigError("extractor must be 'rule' or 'llm'");
    }
    if (c.graph_hops < 1) throw ConfigError("graph_hops must be >= 1");
}

void validate_for_run(const RunConfig& c) {
    validate_common(c);
    validate_episode_source(c);
    if (c.decomposition != "text" && c.decomposition != "triple") {
        throw ConfigError("decomposition must be 'text' or 'triple'");
    }
}

void validate_for_collect(const RunConfig& c) {
    validate_common(c);
    validate_episode_source(c);
    if (c.pipeline != "rl-angle" && c.pipeline != "rl-query") {
        throw ConfigError("collect requires pipeline rl-angle or rl-query");
    }
    if (c.group_size < 2) throw ConfigError("group_size must be >= 2 for rollout collection");
    if (c.outcome_weight < 0.0 || c.outcome_weight > 1.0) {
        throw ConfigError("outcome_weight must lie in [0, 1]");
    }
}

}  // namespace ragkit::engine
