/* C API for the ragkit engine: a small, stable surface over the C++ core.
 *
 * Conventions:
 *   - functions return rk_status (RK_OK == 0); on failure rk_last_error()
 *     holds a thread-local message until the next call on the same thread
 *   - strings returned through char** out parameters are heap-allocated and
 *     must be released with rk_string_free()
 *   - rk_backend is an opaque handle; release with rk_backend_free()
 *   - structured results (segments, retrieval units) come back as JSON text
 */
#ifndef RAGKIT_C_API_H
#define RAGKIT_C_API_H

#include <stdint.h>

#if defined(_WIN32)
#define RK_API __declspec(dllexport)
#else
#define RK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rk_status {
    RK_OK = 0,
    RK_ERR_RUNTIME = 1, /* retrieval/gateway/contract failures */
    RK_ERR_CONFIG = 2,  /* bad configuration; CLI maps this to exit code 2 */
    RK_ERR_NULL = 3,
    RK_ERR_IO = 4,
    RK_ERR_PARSE = 5
} rk_status;

RK_API const char* rk_version(void);
RK_API const char* rk_last_error(void);
RK_API void rk_string_free(char* s);

/* Engine commands. config_json is the run-config document (same schema the
 * CLI reads from --config). */
RK_API int32_t rk_cmd_build(const char* config_json, char** out_summary_json);
RK_API int32_t rk_cmd_run(const char* config_json, char** out_report_json);
RK_API int32_t rk_cmd_collect(const char* config_json, char** out_summary_json);
RK_API int32_t rk_cmd_report(const char* const* report_paths, int32_t n_paths, char** out_table);

/* Canonical config hash (16 hex chars). */
RK_API int32_t rk_config_hash(const char* config_json, char** out_hex);

/* Protocol helpers. dialect is one of "angle" | "pipe" | "query". */
RK_API int32_t rk_parse_segments(const char* text, const char* dialect, char** out_json);
RK_API int32_t rk_extract_answer(const char* text, const char* dialect, char** out_answer);

/* Metrics. */
RK_API int32_t rk_normalize_answer(const char* text, char** out);
RK_API int32_t rk_contain_em(const char* prediction, const char* const* golds, int32_t n_golds,
                             int32_t* out);
RK_API int32_t rk_f1(const char* prediction, const char* gold, double* out);

/* Persisted retrieval backends. */
typedef struct rk_backend rk_backend;
RK_API int32_t rk_backend_load(const char* index_path, rk_backend** out);
RK_API int32_t rk_backend_retrieve(rk_backend* backend, const char* query, int32_t top_k,
                                   char** out_json);
RK_API void rk_backend_free(rk_backend* backend);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* RAGKIT_C_API_H */
