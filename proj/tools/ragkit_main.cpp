// ragkit CLI: build retrieval backends offline, run pipeline x backend
// evaluations, collect GRPO rollout batches, and merge reports. Talks to the
// engine exclusively through the C API in ragkit/c_api.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ragkit/c_api.h"

namespace {

using nlohmann::json;

int exit_code_for(int32_t status) {
    if (status == RK_OK) return 0;
    return status == RK_ERR_CONFIG ? 2 : 1;
}

int report_failure(int32_t status) {
    std::cerr << "error: " << rk_last_error() << "\n";
    return exit_code_for(status);
}

struct CommonOpts {
    std::string config_path;
    std::string dataset, corpus, index, output, pipeline, backend, extractor;
    std::vector<std::int64_t> seeds;
    int top_k = -1;
    int parallel = -1;
    int group_size = -1;
    bool deterministic_timing = false;
};

void add_common_flags(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "JSON config file");
    cmd->add_option("--dataset", opts.dataset, "dataset JSONL path");
    cmd->add_option("--corpus", opts.corpus, "corpus JSONL path");
    cmd->add_option("--index", opts.index, "persisted index to load");
    cmd->add_option("-o,--output", opts.output, "output directory");
    cmd->add_option("--pipeline", opts.pipeline,
                    "single-shot | on-demand | orchestrated | rl-angle | rl-query");
    cmd->add_option("--backend", opts.backend,
                    "dense-lexical | dense-embedding | entity-graph | remote:<url>");
    cmd->add_option("--extractor", opts.extractor, "entity-graph extractor: rule | llm");
    cmd->add_option("--seeds", opts.seeds, "run seeds");
    cmd->add_option("--top-k", opts.top_k, "retrieval depth");
    cmd->add_option("--parallel", opts.parallel, "episode worker count");
    cmd->add_option("--group-size", opts.group_size, "rollouts per question (collect)");
    cmd->add_flag("--deterministic-timing", opts.deterministic_timing,
                  "report timings as zero for byte-stable outputs");
}

// Layer flag overrides on top of the config file.
std::string assemble_config(const CommonOpts& opts, std::string* error) {
    json doc = json::object();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) {
            *error = "cannot open config file: " + opts.config_path;
            return {};
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        doc = json::parse(ss.str(), nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            *error = "config file is not a JSON object: " + opts.config_path;
            return {};
        }
    }
    if (!opts.dataset.empty()) doc["dataset"] = opts.dataset;
    if (!opts.corpus.empty()) doc["corpus"] = opts.corpus;
    if (!opts.index.empty()) doc["index"] = opts.index;
    if (!opts.output.empty()) doc["output_dir"] = opts.output;
    if (!opts.pipeline.empty()) doc["pipeline"] = opts.pipeline;
    if (!opts.backend.empty()) doc["backend"] = opts.backend;
    if (!opts.extractor.empty()) doc["extractor"] = opts.extractor;
    if (!opts.seeds.empty()) doc["seeds"] = opts.seeds;
    if (opts.top_k > 0) doc["top_k"] = opts.top_k;
    if (opts.parallel > 0) doc["parallel"] = opts.parallel;
    if (opts.group_size > 0) doc["group_size"] = opts.group_size;
    if (opts.deterministic_timing) doc["deterministic_timing"] = true;
    return doc.dump();
}

int print_and_free(char* text) {
    if (text) {
        std::cout << text << "\n";
        rk_string_free(text);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agentic retrieval benchmark harness"};
    app.require_subcommand(1);

    CommonOpts build_opts, run_opts, collect_opts;
    auto* build_cmd = app.add_subcommand("build", "build and persist a retrieval backend");
    add_common_flags(build_cmd, build_opts);
    auto* run_cmd = app.add_subcommand("run", "run an evaluation and write reports");
    add_common_flags(run_cmd, run_opts);
    auto* collect_cmd = app.add_subcommand("collect", "collect GRPO rollout batches");
    add_common_flags(collect_cmd, collect_opts);

    std::vector<std::string> report_files;
    std::string report_out;
    auto* report_cmd = app.add_subcommand("report", "merge report files into a comparison grid");
    report_cmd->add_option("files", report_files, "report.json files")->required();
    report_cmd->add_option("-o,--output", report_out, "write the grid to a file as well");

    CLI11_PARSE(app, argc, argv);

    if (build_cmd->parsed()) {
        std::string error;
        std::string config = assemble_config(build_opts, &error);
        if (config.empty() && !error.empty()) {
            std::cerr << "error: " << error << "\n";
            return 2;
        }
        char* summary = nullptr;
        int32_t status = rk_cmd_build(config.c_str(), &summary);
        if (status != RK_OK) return report_failure(status);
        return print_and_free(summary);
    }

    if (run_cmd->parsed()) {
        std::string error;
        std::string config = assemble_config(run_opts, &error);
        if (config.empty() && !error.empty()) {
            std::cerr << "error: " << error << "\n";
            return 2;
        }
        char* report = nullptr;
        int32_t status = rk_cmd_run(config.c_str(), &report);
        if (status != RK_OK) return report_failure(status);
        return print_and_free(report);
    }

    if (collect_cmd->parsed()) {
        std::string error;
        std::string config = assemble_config(collect_opts, &error);
        if (config.empty() && !error.empty()) {
            std::cerr << "error: " << error << "\n";
            return 2;
        }
        char* summary = nullptr;
        int32_t status = rk_cmd_collect(config.c_str(), &summary);
        if (status != RK_OK) return report_failure(status);
        return print_and_free(summary);
    }

    // report
    std::vector<const char*> paths;
    for (const auto& f : report_files) paths.push_back(f.c_str());
    char* table = nullptr;
    int32_t status =
        rk_cmd_report(paths.data(), static_cast<int32_t>(paths.size()), &table);
    if (status != RK_OK) return report_failure(status);
    if (!report_out.empty() && table) {
        std::ofstream out(report_out);
        out << table;
    }
    return print_and_free(table);
}
