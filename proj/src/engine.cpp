#include "ragkit/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ragkit/dense_backend.hpp"
#include "ragkit/graph_backend.hpp"
#include "ragkit/grpo.hpp"
#include "ragkit/remote_backend.hpp"
#include "ragkit/templates.hpp"
#include "ragkit/util.hpp"

namespace ragkit::engine {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<DatasetItem> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file: " + path);
    std::vector<DatasetItem> items;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_view(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            throw ParseError("dataset: line " + std::to_string(line_no) + " is not a JSON object");
        }
        DatasetItem item;
        item.id = obj.value("id", std::string());
        item.question = obj.value("question", std::string());
        if (item.id.empty() || item.question.empty()) {
            throw ParseError("dataset: line " + std::to_string(line_no) +
                             " needs non-empty 'id' and 'question'");
        }
        if (!seen.insert(item.id).second) {
            throw ParseError("dataset: duplicate id '" + item.id + "'");
        }
        if (obj.contains("golden_answers") && obj["golden_answers"].is_array()) {
            for (const auto& g : obj["golden_answers"]) {
                if (g.is_string()) item.golden_answers.push_back(g.get<std::string>());
            }
        }
        if (obj.contains("gold_doc_ids") && obj["gold_doc_ids"].is_array()) {
            for (const auto& g : obj["gold_doc_ids"]) {
                if (g.is_string()) item.gold_doc_ids.push_back(g.get<std::string>());
            }
        }
        items.push_back(std::move(item));
    }
    return items;
}

// --- mock script book -----------------------------------------------------

MockScriptBook MockScriptBook::load(const std::string& path) {
    json doc = json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw ConfigError("mock script is not a JSON object: " + path);
    }
    MockScriptBook book;
    for (const auto& s : doc.value("scenarios", json::array())) {
        Scenario scenario;
        scenario.match = s.value("match", std::string());
        for (const auto& r : s.value("replies", json::array())) {
            if (r.is_string()) scenario.replies.push_back(r.get<std::string>());
        }
        if (scenario.replies.empty()) {
            throw ConfigError("mock script scenario without replies in " + path);
        }
        book.scenarios_.push_back(std::move(scenario));
    }
    for (const auto& r : doc.value("default_replies", json::array())) {
        if (r.is_string()) book.default_replies_.push_back(r.get<std::string>());
    }
    if (book.scenarios_.empty() && book.default_replies_.empty()) {
        throw ConfigError("mock script has neither scenarios nor default_replies: " + path);
    }
    return book;
}

std::unique_ptr<gateway::ScriptedGateway> MockScriptBook::gateway_for(
    const std::string& question) const {
    const std::vector<std::string>* replies = nullptr;
    for (const auto& s : scenarios_) {
        if (!s.match.empty() && question.find(s.match) != std::string::npos) {
            replies = &s.replies;
            break;
        }
    }
    if (!replies) replies = &default_replies_;
    if (replies->empty()) {
        throw GatewayError("mock script has no scenario for question: " + question);
    }
    std::vector<gateway::ScriptRule> rules;
    for (std::size_t i = 0; i < replies->size(); ++i) {
        rules.push_back(gateway::step_rule(i, (*replies)[i]));
    }
    return std::make_unique<gateway::ScriptedGateway>(std::move(rules));
}

// --- backend assembly -------------------------------------------------------

std::unique_ptr<knowledge::KnowledgeBackend> make_backend(const RunConfig& config,
                                                          gateway::LlmGateway* build_gateway) {
    std::unique_ptr<knowledge::KnowledgeBackend> backend;
    if (config.backend.rfind("remote:", 0) == 0) {
        const std::string url = config.backend.substr(std::string("remote:").size());
        backend = std::make_unique<knowledge::RemoteBackend>(url, "remote",
                                                             config.gateway.openai.timeout_seconds);
    } else if (!config.index_path.empty()) {
        backend = knowledge::load_backend(config.index_path);
        if (backend->kind() == "dense-embedding") {
            auto* dense = dynamic_cast<knowledge::DenseBackend*>(backend.get());
            dense->adopt_embedding_client(
                std::make_unique<gateway::HttpEmbeddingClient>(config.gateway.openai));
        }
    } else {
        knowledge::Corpus corpus = knowledge::ingest_corpus_file(config.corpus_path);
        auto chunks = knowledge::chunk_corpus(corpus, config.chunking);
        if (config.backend == "dense-lexical") {
            backend = knowledge::DenseBackend::build_lexical(std::move(chunks));
        } else if (config.backend == "dense-embedding") {
            auto client = std::make_unique<gateway::HttpEmbeddingClient>(config.gateway.openai);
            auto dense = knowledge::DenseBackend::build_embedding(std::move(chunks), *client);
            dense->adopt_embedding_client(std::move(client));
            backend = std::move(dense);
        } else if (config.backend == "entity-graph") {
            if (config.extractor == "llm") {
                if (!build_gateway) {
                    throw ConfigError("entity-graph with llm extractor needs a gateway");
                }
                knowledge::LlmExtractor extractor(*build_gateway);
                backend = knowledge::EntityGraphBackend::build(chunks, extractor,
                                                               config.graph_hops);
            } else {
                knowledge::RuleExtractor extractor;
                backend = knowledge::EntityGraphBackend::build(chunks, extractor,
                                                               config.graph_hops);
            }
        } else {
            throw ConfigError("unknown backend: " + config.backend);
        }
    }
    if (config.deterministic_timing) backend->set_timing_mode(knowledge::TimingMode::Fixed);
    return backend;
}

// --- build ------------------------------------------------------------------

BuildOutcome cmd_build(const RunConfig& config) {
    validate_for_build(config);
    BuildOutcome outcome;

    knowledge::Corpus corpus = knowledge::ingest_corpus_file(config.corpus_path);
    outcome.corpus_tokens = corpus.token_count;
    auto chunks = knowledge::chunk_corpus(corpus, config.chunking);

    std::unique_ptr<gateway::LlmGateway> build_gateway;
    if (config.extractor == "llm" && config.backend == "entity-graph") {
        if (config.gateway.mode == "mock") {
            MockScriptBook book = MockScriptBook::load(config.gateway.script_path);
            build_gateway = book.gateway_for("__build__");
        } else {
            build_gateway = std::make_unique<gateway::OpenAiGateway>(config.gateway.openai);
        }
    }

    auto start = std::chrono::steady_clock::now();
    std::unique_ptr<knowledge::KnowledgeBackend> backend;
    std::int64_t extractor_calls = 0;
    if (config.backend == "dense-lexical") {
        backend = knowledge::DenseBackend::build_lexical(chunks);
        outcome.summary["chunks"] = chunks.size();
    } else if (config.backend == "dense-embedding") {
        gateway::HttpEmbeddingClient client(config.gateway.openai);
        backend = knowledge::DenseBackend::build_embedding(chunks, client);
        extractor_calls = client.calls();
        outcome.summary["chunks"] = chunks.size();
    } else if (config.backend == "entity-graph") {
        std::unique_ptr<knowledge::TripleExtractor> extractor;
        if (config.extractor == "llm") {
            extractor = std::make_unique<knowledge::LlmExtractor>(*build_gateway);
        } else {
            extractor = std::make_unique<knowledge::RuleExtractor>();
        }
        auto graph_backend =
            knowledge::EntityGraphBackend::build(chunks, *extractor, config.graph_hops);
        extractor_calls = extractor->llm_calls();
        outcome.summary["chunks"] = chunks.size();
        outcome.summary["nodes"] = graph_backend->graph().nodes.size();
        outcome.summary["edges"] = graph_backend->graph().edges.size();
        outcome.summary["skipped_triples"] = graph_backend->skipped_triples();
        backend = std::move(graph_backend);
    } else {
        throw ConfigError("unknown backend: " + config.backend);
    }
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (config.deterministic_timing) seconds = 0.0;

    outcome.construction_seconds = seconds;
    outcome.cost.construction_seconds_per_1m_tokens =
        construction_seconds_per_1m(seconds, corpus.token_count);
    outcome.cost.llm_calls = extractor_calls;
    if (build_gateway) {
        outcome.cost.llm_tokens_in = build_gateway->tally().total_prompt_tokens();
        outcome.cost.llm_tokens_out = build_gateway->tally().total_completion_tokens();
    }

    fs::create_directories(config.output_dir);
    outcome.index_path =
        (fs::path(config.output_dir) / (config.backend + ".index.json")).string();
    knowledge::save_backend(*backend, outcome.index_path);
    return outcome;
}

// --- run ---------------------------------------------------------------------

namespace {

agent::EpisodeOptions episode_options(const RunConfig& config) {
    agent::EpisodeOptions opts;
    opts.budget = config.budget;
    opts.top_k = config.top_k;
    opts.decomposition = config.decomposition == "triple" ? agent::DecompositionMode::Triple
                                                          : agent::DecompositionMode::Text;
    return opts;
}

eval::QuestionRow row_from_trajectory(const DatasetItem& item, const agent::Trajectory& traj) {
    eval::QuestionRow row;
    row.qid = item.id;
    row.answer = traj.final_answer.value_or("");
    row.em = traj.final_answer ? eval::contain_em(*traj.final_answer, item.golden_answers) : 0;
    row.f1 = traj.final_answer ? eval::f1_multi(*traj.final_answer, item.golden_answers) : 0.0;
    row.search_turns = traj.retrieval_count();
    std::set<std::string> gold_docs(item.gold_doc_ids.begin(), item.gold_doc_ids.end());
    row.recall = eval::retrieval_recall(traj, gold_docs);
    row.termination = agent::termination_name(traj.termination);
    row.llm_calls = traj.cost.llm_calls;
    row.llm_tokens_in = traj.cost.llm_tokens_in;
    row.llm_tokens_out = traj.cost.llm_tokens_out;
    double ms = 0.0;
    for (const auto& step : traj.steps) {
        if (step.retrieval) ms += step.retrieval->elapsed_ms;
    }
    row.retrieval_seconds_total = ms / 1000.0;
    return row;
}

json row_to_cache_json(const eval::QuestionRow& row) {
    json j = {{"qid", row.qid},
              {"em", row.em},
              {"f1", row.f1},
              {"turns", row.search_turns},
              {"answer", row.answer},
              {"termination", row.termination},
              {"llm_calls", row.llm_calls},
              {"llm_tokens_in", row.llm_tokens_in},
              {"llm_tokens_out", row.llm_tokens_out},
              {"retrieval_seconds_total", row.retrieval_seconds_total}};
    j["recall"] = row.recall ? json(*row.recall) : json(nullptr);
    return j;
}

eval::QuestionRow row_from_cache_json(const json& j) {
    eval::QuestionRow row;
    row.qid = j.value("qid", std::string());
    row.em = j.value("em", 0);
    row.f1 = j.value("f1", 0.0);
    row.search_turns = j.value("turns", 0);
    if (j.contains("recall") && !j["recall"].is_null()) row.recall = j["recall"].get<double>();
    row.answer = j.value("answer", std::string());
    row.termination = j.value("termination", std::string());
    row.llm_calls = j.value("llm_calls", std::int64_t{0});
    row.llm_tokens_in = j.value("llm_tokens_in", std::int64_t{0});
    row.llm_tokens_out = j.value("llm_tokens_out", std::int64_t{0});
    row.retrieval_seconds_total = j.value("retrieval_seconds_total", 0.0);
    return row;
}

struct GatewayPool {
    const RunConfig* config;
    const MockScriptBook* book = nullptr;        // mock mode
    gateway::LlmGateway* shared = nullptr;       // openai mode

    std::unique_ptr<gateway::LlmGateway> for_question(const std::string& question) const {
        if (book) return book->gateway_for(question);
        return std::make_unique<gateway::TallyingGateway>(*shared);
    }
};

}  // namespace

agent::Trajectory run_episode(const RunConfig& config, const std::string& question,
                              const knowledge::KnowledgeBackend& backend,
                              gateway::LlmGateway& gw) {
    const agent::EpisodeOptions opts = episode_options(config);
    if (config.pipeline == "single-shot") {
        return agent::run_single_shot(question, backend, gw, opts);
    }
    if (config.pipeline == "on-demand") {
        return agent::run_on_demand(question, backend, gw, opts);
    }
    if (config.pipeline == "orchestrated") {
        return agent::run_orchestrated(question, backend, gw, opts);
    }
    if (config.pipeline == "rl-angle") {
        return agent::run_rl_dialect(question, backend, gw, opts, protocol::DialectKind::AngleTag);
    }
    if (config.pipeline == "rl-query") {
        return agent::run_rl_dialect(question, backend, gw, opts, protocol::DialectKind::QueryTag);
    }
    throw ConfigError("unknown pipeline: " + config.pipeline);
}

RunOutcome cmd_run(const RunConfig& config) {
    validate_for_run(config);
    auto dataset = load_dataset(config.dataset_path);
    if (dataset.empty()) throw ConfigError("dataset is empty: " + config.dataset_path);

    MockScriptBook book;
    std::unique_ptr<gateway::OpenAiGateway> openai;
    GatewayPool pool{&config};
    if (config.gateway.mode == "mock") {
        book = MockScriptBook::load(config.gateway.script_path);
        pool.book = &book;
    } else {
        openai = std::make_unique<gateway::OpenAiGateway>(config.gateway.openai);
        openai->preflight();  // fail fast before consuming budget
        pool.shared = openai.get();
    }

    std::unique_ptr<gateway::LlmGateway> build_gateway;
    const bool needs_build_gateway = config.index_path.empty() &&
                                     config.backend == "entity-graph" && config.extractor == "llm";
    if (pool.book && needs_build_gateway) build_gateway = pool.book->gateway_for("__build__");
    auto backend = make_backend(config, pool.shared ? pool.shared : build_gateway.get());

    const std::string hash = config_hash(config);
    const fs::path out_dir(config.output_dir);
    fs::create_directories(out_dir);

    RunOutcome outcome;
    std::atomic<int> cache_hits{0}, cache_misses{0};
    std::vector<eval::RunRows> all_runs;

    for (std::int64_t seed : config.seeds) {
        const fs::path cache_dir = out_dir / "cache" / hash / std::to_string(seed);
        std::vector<eval::QuestionRow> rows(dataset.size());

        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex error_mu;
        auto worker = [&]() {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= dataset.size()) return;
                const DatasetItem& item = dataset[i];
                const fs::path cache_file = cache_dir / (item.id + ".json");
                try {
                    if (fs::exists(cache_file)) {
                        rows[i] = row_from_cache_json(json::parse(read_file(cache_file.string())));
                        cache_hits.fetch_add(1);
                        continue;
                    }
                    auto gw = pool.for_question(item.question);
                    agent::Trajectory traj = run_episode(config, item.question, *backend, *gw);
                    rows[i] = row_from_trajectory(item, traj);
                    write_file_atomic(cache_file.string(), row_to_cache_json(rows[i]).dump(2));
                    cache_misses.fetch_add(1);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };

        const int n_workers = std::max(1, std::min<int>(config.parallel,
                                                        static_cast<int>(dataset.size())));
        std::vector<std::thread> threads;
        for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        if (first_error) std::rethrow_exception(first_error);

        eval::RunRows run;
        run.seed = seed;
        run.rows = std::move(rows);

        // per-run report
        eval::MetricsReport run_report = eval::aggregate(
            {run}, fs::path(config.dataset_path).stem().string(), config.pipeline, config.backend);
        write_file_atomic((out_dir / ("run-" + std::to_string(seed) + ".json")).string(),
                          eval::report_to_json(run_report).dump(2) + "\n");
        all_runs.push_back(std::move(run));
    }

    outcome.report = eval::aggregate(all_runs, fs::path(config.dataset_path).stem().string(),
                                     config.pipeline, config.backend);
    outcome.cache_hits = cache_hits.load();
    outcome.cache_misses = cache_misses.load();

    outcome.report_json_path = (out_dir / "report.json").string();
    outcome.report_table_path = (out_dir / "report.txt").string();
    outcome.csv_path = (out_dir / "per_question.csv").string();
    write_file_atomic(outcome.report_json_path, eval::report_to_json(outcome.report).dump(2) + "\n");
    write_file_atomic(outcome.report_table_path, eval::render_table(outcome.report));
    write_file_atomic(outcome.csv_path, eval::to_csv(outcome.report));
    return outcome;
}

// --- collect -------------------------------------------------------------------

CollectOutcome cmd_collect(const RunConfig& config) {
    validate_for_collect(config);
    auto dataset = load_dataset(config.dataset_path);
    if (dataset.empty()) throw ConfigError("dataset is empty: " + config.dataset_path);

    MockScriptBook book;
    std::unique_ptr<gateway::OpenAiGateway> openai;
    GatewayPool pool{&config};
    if (config.gateway.mode == "mock") {
        book = MockScriptBook::load(config.gateway.script_path);
        pool.book = &book;
    } else {
        openai = std::make_unique<gateway::OpenAiGateway>(config.gateway.openai);
        openai->preflight();
        pool.shared = openai.get();
    }
    std::unique_ptr<gateway::LlmGateway> build_gateway;
    const bool needs_build_gateway = config.index_path.empty() &&
                                     config.backend == "entity-graph" && config.extractor == "llm";
    if (pool.book && needs_build_gateway) build_gateway = pool.book->gateway_for("__build__");
    auto backend = make_backend(config, pool.shared ? pool.shared : build_gateway.get());

    const protocol::DialectKind dialect = config.pipeline == "rl-query"
                                              ? protocol::DialectKind::QueryTag
                                              : protocol::DialectKind::AngleTag;
    grpo::RewardSpec spec;
    spec.outcome_weight = config.outcome_weight;

    const fs::path batch_dir = fs::path(config.output_dir) / "batches";
    fs::create_directories(batch_dir);

    CollectOutcome outcome;
    for (const DatasetItem& item : dataset) {
        auto gw = pool.for_question(item.question);
        grpo::GroupBatch batch =
            grpo::collect_group(item.question, item.golden_answers, dialect, *backend, *gw,
                                config.group_size, spec, episode_options(config));
        const std::string path = (batch_dir / (item.id + ".jsonl")).string();
        outcome.records += grpo::export_batch(batch, path);
        outcome.batch_files.push_back(path);
    }
    return outcome;
}

// --- report grid ------------------------------------------------------------------

std::string cmd_report(const std::vector<std::string>& report_paths) {
    if (report_paths.empty()) throw ConfigError("report: no input files");

    std::vector<eval::MetricsReport> reports;
    std::vector<std::string> bad_versions;
    for (const auto& path : report_paths) {
        json doc = json::parse(read_file(path), nullptr, false);
        if (doc.is_discarded()) throw ParseError("report file is not JSON: " + path);
        if (doc.value("schema_version", -1) != eval::kReportSchemaVersion) {
            bad_versions.push_back(path);
            continue;
        }
        reports.push_back(eval::report_from_json(doc));
    }
    if (!bad_versions.empty()) {
        std::string all;
        for (const auto& p : bad_versions) all += (all.empty() ? "" : ", ") + p;
        throw ConfigError("report schema version mismatch in: " + all);
    }

    std::vector<std::string> datasets;
    std::vector<std::pair<std::string, std::string>> systems;  // (pipeline, backend)
    for (const auto& r : reports) {
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
            datasets.push_back(r.dataset);
        }
        auto key = std::make_pair(r.pipeline, r.backend);
        if (std::find(systems.begin(), systems.end(), key) == systems.end()) {
            systems.push_back(key);
        }
    }
    std::sort(datasets.begin(), datasets.end());
    std::sort(systems.begin(), systems.end());

    std::map<std::pair<std::string, std::string>, const eval::MetricsReport*> cells;
    for (const auto& r : reports) {
        cells[{r.pipeline + "\x1f" + r.backend, r.dataset}] = &r;
    }

    // best / second-best EM per dataset column
    std::map<std::string, std::pair<double, double>> best;
    for (const auto& d : datasets) {
        double first = -1.0, second = -1.0;
        for (const auto& [pipeline, backend] : systems) {
            auto it = cells.find({pipeline + "\x1f" + backend, d});
            if (it == cells.end()) continue;
            double em = it->second->contain_em_mean;
            if (em > first) {
                second = first;
                first = em;
            } else if (em > second) {
                second = em;
            }
        }
        best[d] = {first, second};
    }

    std::ostringstream out;
    const int sys_w = 36, cell_w = 16;
    out << std::string(sys_w, ' ');
    for (const auto& d : datasets) {
        std::string head = d;
        if (static_cast<int>(head.size()) > cell_w - 2) head.resize(cell_w - 2);
        out << head << std::string(cell_w - head.size(), ' ');
    }
    out << "\n";
    for (const auto& [pipeline, backend] : systems) {
        std::string label = pipeline + " / " + backend;
        if (static_cast<int>(label.size()) > sys_w - 2) label.resize(sys_w - 2);
        out << label << std::string(sys_w - label.size(), ' ');
        for (const auto& d : datasets) {
            auto it = cells.find({pipeline + "\x1f" + backend, d});
            std::string cell = "-";
            if (it != cells.end()) {
                const auto* r = it->second;
                cell = eval::mean_pm_std(r->contain_em_mean, r->em_std_over_runs);
                if (r->contain_em_mean == best[d].first) cell += "*";
                else if (r->contain_em_mean == best[d].second) cell += "^";
            }
            // the ± glyph is two bytes; pad by display width
            std::size_t display = cell.size() - (cell.find("±") != std::string::npos ? 1 : 0);
            out << cell;
            if (display < static_cast<std::size_t>(cell_w)) {
                out << std::string(cell_w - display, ' ');
            }
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace ragkit::engine
