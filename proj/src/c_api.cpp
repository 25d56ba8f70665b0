#include "ragkit/c_api.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragkit/backend.hpp"
#include "ragkit/engine.hpp"
#include "ragkit/eval.hpp"
#include "ragkit/protocol.hpp"
#include "ragkit/util.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

thread_local std::string tl_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

int32_t classify(const std::exception& e) {
    if (dynamic_cast<const ragkit::ConfigError*>(&e)) return RK_ERR_CONFIG;
    if (dynamic_cast<const ragkit::IoError*>(&e)) return RK_ERR_IO;
    if (dynamic_cast<const ragkit::ParseError*>(&e)) return RK_ERR_PARSE;
    return RK_ERR_RUNTIME;
}

template <typename Fn>
int32_t guarded(Fn&& fn) {
    try {
        tl_error.clear();
        return fn();
    } catch (const std::exception& e) {
        tl_error = e.what();
        return classify(e);
    } catch (...) {
        tl_error = "unknown error";
        return RK_ERR_RUNTIME;
    }
}

int32_t parse_config(const char* config_json, ragkit::engine::RunConfig* out) {
    nlohmann::json doc = nlohmann::json::parse(config_json, nullptr, false);
    if (doc.is_discarded()) {
        throw ragkit::ConfigError("config is not valid JSON");
    }
    *out = ragkit::engine::config_from_json(doc);
    return RK_OK;
}

const ragkit::protocol::Dialect& dialect_or_throw(const char* name) {
    auto kind = ragkit::protocol::dialect_kind_from_name(name ? name : "");
    if (!kind) throw ragkit::ConfigError("unknown dialect; use angle | pipe | query");
    return ragkit::protocol::dialect_by_kind(*kind);
}

}  // namespace

extern "C" {

const char* rk_version(void) { return kVersion; }

const char* rk_last_error(void) { return tl_error.c_str(); }

void rk_string_free(char* s) { std::free(s); }

int32_t rk_cmd_build(const char* config_json, char** out_summary_json) {
    if (!config_json) {
        tl_error = "null pointer: config_json";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        ragkit::engine::RunConfig config;
        parse_config(config_json, &config);
        auto outcome = ragkit::engine::cmd_build(config);
        nlohmann::json summary = outcome.summary;
        summary["index_path"] = outcome.index_path;
        summary["construction_seconds"] = outcome.construction_seconds;
        summary["corpus_tokens"] = outcome.corpus_tokens;
        summary["cost"] = {
            {"construction_seconds_per_1m_tokens", outcome.cost.construction_seconds_per_1m_tokens},
            {"llm_calls", outcome.cost.llm_calls},
            {"llm_tokens_in", outcome.cost.llm_tokens_in},
            {"llm_tokens_out", outcome.cost.llm_tokens_out}};
        if (out_summary_json) *out_summary_json = dup_string(summary.dump(2));
        return RK_OK;
    });
}

int32_t rk_cmd_run(const char* config_json, char** out_report_json) {
    if (!config_json) {
        tl_error = "null pointer: config_json";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        ragkit::engine::RunConfig config;
        parse_config(config_json, &config);
        auto outcome = ragkit::engine::cmd_run(config);
        nlohmann::json report = ragkit::eval::report_to_json(outcome.report);
        report["cache_hits"] = outcome.cache_hits;
        report["cache_misses"] = outcome.cache_misses;
        report["report_path"] = outcome.report_json_path;
        if (out_report_json) *out_report_json = dup_string(report.dump(2));
        return RK_OK;
    });
}

int32_t rk_cmd_collect(const char* config_json, char** out_summary_json) {
    if (!config_json) {
        tl_error = "null pointer: config_json";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        ragkit::engine::RunConfig config;
        parse_config(config_json, &config);
        auto outcome = ragkit::engine::cmd_collect(config);
        nlohmann::json summary = {{"batch_files", outcome.batch_files},
                                  {"records", outcome.records}};
        if (out_summary_json) *out_summary_json = dup_string(summary.dump(2));
        return RK_OK;
    });
}

int32_t rk_cmd_report(const char* const* report_paths, int32_t n_paths, char** out_table) {
    if (!report_paths || !out_table) {
        tl_error = "null pointer: report_paths/out_table";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        std::vector<std::string> paths;
        for (int32_t i = 0; i < n_paths; ++i) {
            if (!report_paths[i]) throw ragkit::ConfigError("null report path");
            paths.emplace_back(report_paths[i]);
        }
        *out_table = dup_string(ragkit::engine::cmd_report(paths));
        return RK_OK;
    });
}

int32_t rk_config_hash(const char* config_json, char** out_hex) {
    if (!config_json || !out_hex) {
        tl_error = "null pointer: config_json/out_hex";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        ragkit::engine::RunConfig config;
        parse_config(config_json, &config);
        *out_hex = dup_string(ragkit::engine::config_hash(config));
        return RK_OK;
    });
}

int32_t rk_parse_segments(const char* text, const char* dialect, char** out_json) {
    if (!text || !out_json) {
        tl_error = "null pointer: text/out_json";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        const auto& d = dialect_or_throw(dialect);
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& seg : ragkit::protocol::parse_segments(text, d)) {
            arr.push_back({{"kind", ragkit::protocol::segment_kind_name(seg.kind)},
                           {"text", seg.text},
                           {"begin", seg.begin},
                           {"end", seg.end}});
        }
        *out_json = dup_string(arr.dump());
        return RK_OK;
    });
}

int32_t rk_extract_answer(const char* text, const char* dialect, char** out_answer) {
    if (!text || !out_answer) {
        tl_error = "null pointer: text/out_answer";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        const auto& d = dialect_or_throw(dialect);
        auto answer = ragkit::protocol::extract_answer(text, d);
        *out_answer = answer ? dup_string(*answer) : nullptr;
        return RK_OK;
    });
}

int32_t rk_normalize_answer(const char* text, char** out) {
    if (!text || !out) {
        tl_error = "null pointer: text/out";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        *out = dup_string(ragkit::eval::normalize_answer(text));
        return RK_OK;
    });
}

int32_t rk_contain_em(const char* prediction, const char* const* golds, int32_t n_golds,
                      int32_t* out) {
    if (!prediction || !golds || !out) {
        tl_error = "null pointer: prediction/golds/out";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        std::vector<std::string> gold_list;
        for (int32_t i = 0; i < n_golds; ++i) {
            if (golds[i]) gold_list.emplace_back(golds[i]);
        }
        *out = ragkit::eval::contain_em(prediction, gold_list);
        return RK_OK;
    });
}

int32_t rk_f1(const char* prediction, const char* gold, double* out) {
    if (!prediction || !gold || !out) {
        tl_error = "null pointer: prediction/gold/out";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        *out = ragkit::eval::f1(prediction, gold);
        return RK_OK;
    });
}

struct rk_backend {
    std::unique_ptr<ragkit::knowledge::KnowledgeBackend> impl;
};

int32_t rk_backend_load(const char* index_path, rk_backend** out) {
    if (!index_path || !out) {
        tl_error = "null pointer: index_path/out";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        auto backend = ragkit::knowledge::load_backend(index_path);
        *out = new rk_backend{std::move(backend)};
        return RK_OK;
    });
}

int32_t rk_backend_retrieve(rk_backend* backend, const char* query, int32_t top_k,
                            char** out_json) {
    if (!backend || !query || !out_json) {
        tl_error = "null pointer: backend/query/out_json";
        return RK_ERR_NULL;
    }
    return guarded([&]() -> int32_t {
        auto result = backend->impl->retrieve(query, top_k);
        nlohmann::json units = nlohmann::json::array();
        for (const auto& u : result.units) {
            units.push_back({{"id", u.id},
                             {"title", u.title},
                             {"text", u.text},
                             {"score", u.score},
                             {"kind", ragkit::knowledge::evidence_kind_name(u.kind)}});
        }
        nlohmann::json doc = {{"query", result.query},
                              {"backend", result.backend_name},
                              {"elapsed_ms", result.elapsed_ms},
                              {"units", std::move(units)}};
        *out_json = dup_string(doc.dump());
        return RK_OK;
    });
}

void rk_backend_free(rk_backend* backend) { delete backend; }

}  // extern "C"
