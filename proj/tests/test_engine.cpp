#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ragkit/engine.hpp"
#include "ragkit/grpo.hpp"
#include "support.hpp"

using namespace ragkit;
using namespace ragkit::engine;
using testsupport::TempDir;

namespace fs = std::filesystem;

namespace {

std::string small_corpus() {
    return "{\"id\": \"laleli\", \"title\": \"Laleli Mosque\", \"contents\": \"The Laleli "
           "Mosque is located in Laleli, Fatih, Istanbul, Turkey.\"}\n"
           "{\"id\": \"esma\", \"title\": \"Esma Sultan Mansion\", \"contents\": \"The Esma "
           "Sultan Mansion is located at Ortakoy in Istanbul.\"}\n"
           "{\"id\": \"filler\", \"title\": \"Filler\", \"contents\": \"Unrelated filler text "
           "about rivers and mountains.\"}\n";
}

// Three questions, each with its own scripted single-shot episode.
std::string three_q_dataset() {
    return "{\"id\": \"q1\", \"question\": \"Where is the Laleli Mosque?\", "
           "\"golden_answers\": [\"Fatih\"], \"gold_doc_ids\": [\"laleli\"]}\n"
           "{\"id\": \"q2\", \"question\": \"Where is the Esma Sultan Mansion?\", "
           "\"golden_answers\": [\"Ortakoy\"], \"gold_doc_ids\": [\"esma\"]}\n"
           "{\"id\": \"q3\", \"question\": \"Are they in the same neighborhood?\", "
           "\"golden_answers\": [\"No\"]}\n";
}

std::string scripted_answers() {
    nlohmann::json script = {
        {"scenarios",
         {{{"match", "Laleli Mosque?"}, {"replies", {"<answer> Fatih </answer>"}}},
          {{"match", "Esma Sultan Mansion?"}, {"replies", {"<answer> Ortakoy </answer>"}}},
          {{"match", "same neighborhood"}, {"replies", {"<answer> Maybe </answer>"}}}}},
        {"default_replies", {"<answer> unknown </answer>"}}};
    return script.dump();
}

RunConfig base_config(const TempDir& tmp) {
    RunConfig c;
    c.dataset_path = tmp.str("dataset.jsonl");
    c.corpus_path = tmp.str("corpus.jsonl");
    c.gateway.script_path = tmp.str("script.json");
    c.output_dir = tmp.str("out");
    c.pipeline = "single-shot";
    c.backend = "dense-lexical";
    c.deterministic_timing = true;
    c.parallel = 2;
    return c;
}

void write_inputs(const TempDir& tmp) {
    tmp.write("dataset.jsonl", three_q_dataset());
    tmp.write("corpus.jsonl", small_corpus());
    tmp.write("script.json", scripted_answers());
}

}  // namespace

TEST_CASE("load_dataset parses the documented schema") {
    TempDir tmp("dataset");
    tmp.write("dataset.jsonl", three_q_dataset());
    auto items = load_dataset(tmp.str("dataset.jsonl"));
    REQUIRE(items.size() == 3);
    CHECK(items[0].id == "q1");
    CHECK(items[0].golden_answers == std::vector<std::string>{"Fatih"});
    CHECK(items[0].gold_doc_ids == std::vector<std::string>{"laleli"});
}

TEST_CASE("load_dataset rejects duplicate question ids") {
    TempDir tmp("dataset_dup");
    tmp.write("dup.jsonl",
              "{\"id\": \"q1\", \"question\": \"a?\"}\n{\"id\": \"q1\", \"question\": \"b?\"}\n");
    CHECK_THROWS_WITH_AS(load_dataset(tmp.str("dup.jsonl")), doctest::Contains("q1"), ParseError);
}

TEST_CASE("cmd_build: dense lexical persists an index with zero llm calls") {
    TempDir tmp("build_dense");
    write_inputs(tmp);
    RunConfig c = base_config(tmp);
    auto outcome = cmd_build(c);
    CHECK(fs::exists(outcome.index_path));
    CHECK(outcome.cost.llm_calls == 0);
    CHECK(outcome.summary["chunks"] == 3);
    CHECK(outcome.corpus_tokens > 0);
    // deterministic timing zeroes the construction clock
    CHECK(outcome.cost.construction_seconds_per_1m_tokens == 0.0);

    auto backend = knowledge::load_backend(outcome.index_path);
    CHECK(backend->retrieve("laleli", 2).units.size() == 2);
}

TEST_CASE("cmd_build: entity graph reports node and edge counts") {
    TempDir tmp("build_graph");
    write_inputs(tmp);
    RunConfig c = base_config(tmp);
    c.backend = "entity-graph";
    auto outcome = cmd_build(c);
    CHECK(outcome.summary["nodes"].get<int>() > 0);
    CHECK(outcome.summary["edges"].get<int>() > 0);
    CHECK(fs::exists(outcome.index_path));
}

TEST_CASE("cmd_build: llm extraction counts one prompt per chunk") {
    TempDir tmp("build_graph_llm");
    write_inputs(tmp);
    nlohmann::json script = {
        {"scenarios",
         {{{"match", "__build__"},
           {"replies",
            {"(Laleli Mosque, located in, Fatih)", "(Esma Sultan Mansion, located in, Ortakoy)",
             "(rivers, near, mountains)"}}}}}};
    tmp.write("script.json", script.dump());
    RunConfig c = base_config(tmp);
    c.backend = "entity-graph";
    c.extractor = "llm";
    auto outcome = cmd_build(c);
    CHECK(outcome.cost.llm_calls == 3);  // one extraction prompt per chunk
    CHECK(outcome.cost.llm_tokens_in > 0);
    CHECK(outcome.summary["edges"].get<int>() == 3);
}

TEST_CASE("cmd_build: missing corpus is a config error naming the path") {
    TempDir tmp("build_missing");
    write_inputs(tmp);
    RunConfig c = base_config(tmp);
    c.corpus_path = tmp.str("absent.jsonl");
    CHECK_THROWS_WITH_AS(cmd_build(c), doctest::Contains("absent.jsonl"), ConfigError);
}

TEST_CASE("cmd_run produces a report with hand-computed metrics") {
    TempDir tmp("run_basic");
    write_inputs(tmp);
    RunConfig c = base_config(tmp);
    auto outcome = cmd_run(c);
    CHECK(outcome.report.n == 3);
    // q1 and q2 answered correctly, q3 answered "Maybe" vs gold "No"
    CHECK(outcome.report.contain_em_mean == doctest::Approx(2.0 / 3.0));
    CHECK(outcome.report.mean_search_turns == doctest::Approx(1.0));
    CHECK(outcome.cache_misses == 3);
    CHECK(outcome.cache_hits == 0);
    CHECK(fs::exists(outcome.report_json_path));
    CHECK(fs::exists(outcome.report_table_path));
    CHECK(fs::exists(outcome.csv_path));
    // recall: q1 retrieved its gold doc (top-5 covers all three chunks)
    REQUIRE(outcome.report.per_question[0].recall.has_value());
    CHECK(*outcome.report.per_question[0].recall == doctest::Approx(1.0));
}

TEST_CASE("cmd_run serves cached rows after an interrupted pass") {
    TempDir tmp("run_cache");
    write_inputs(tmp);
    RunConfig c = base_config(tmp);
    auto first = cmd_run(c);
    CHECK(first.cache_misses == 3);

    // drop one cached row to simulate an interrupt after question 2
    const std::string hash = config_hash(c);
    fs::remove(fs::path(c.output_dir) / "cache" / hash / "0" / "q3.json");
    auto second = cmd_run(c);
    CHECK(second.cache_hits == 2);
    CHECK(second.cache_misses == 1);
    CHECK(eval::report_to_json(second.report) == eval::report_to_json(first.report));
}

TEST_CASE("cmd_run with two seeds aggregates variance across runs") {
    TempDir tmp("run_seeds");
    write_inputs(tmp);
    RunConfig c = base_config(tmp);
    c.seeds = {0, 1};
    auto outcome = cmd_run(c);
    CHECK(outcome.report.runs == 2);
    CHECK(outcome.report.per_run_em_means.size() == 2);
    CHECK(outcome.report.em_std_over_runs == 0.0);  // scripted mock is deterministic
    CHECK(fs::exists(fs::path(c.output_dir) / "run-0.json"));
    CHECK(fs::exists(fs::path(c.output_dir) / "run-1.json"));
}

TEST_CASE("cmd_run against a remote backend uses the wire protocol") {
    TempDir tmp("run_remote");
    write_inputs(tmp);
    testsupport::StubServer server;
    server.on_post([](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"results\": [{\"id\": \"laleli\", \"title\": \"Laleli Mosque\", "
                        "\"text\": \"In Fatih.\", \"score\": 1.0}]}",
                        "application/json");
    });
    RunConfig c = base_config(tmp);
    c.backend = "remote:" + server.base_url();
    auto outcome = cmd_run(c);
    CHECK(outcome.report.n == 3);
    CHECK(server.requests() == 3);
}

TEST_CASE("cmd_run with a dense-embedding backend embeds chunks and queries") {
    TempDir tmp("run_embedding");
    write_inputs(tmp);
    testsupport::StubServer server;
    server.on_post([](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json data = nlohmann::json::array();
        for (std::size_t i = 0; i < body.at("input").size(); ++i) {
            const std::string text = body["input"][i].get<std::string>();
            double laleli = text.find("Laleli") != std::string::npos ? 1.0 : 0.0;
            double esma = text.find("Esma") != std::string::npos ? 1.0 : 0.0;
            data.push_back({{"index", i}, {"embedding", {laleli, esma, 0.1}}});
        }
        res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    RunConfig c = base_config(tmp);
    c.backend = "dense-embedding";
    c.gateway.openai.base_url = server.base_url();
    auto outcome = cmd_run(c);
    CHECK(outcome.report.n == 3);
    // chunk batch + one query embedding per question
    CHECK(server.requests() >= 4);
    // q1 mentions Laleli, so its gold doc tops the embedding ranking
    REQUIRE(outcome.report.per_question[0].recall.has_value());
    CHECK(*outcome.report.per_question[0].recall == doctest::Approx(1.0));
}

TEST_CASE("cmd_run fails fast when the openai gateway is unreachable") {
    TempDir tmp("run_unreachable");
    write_inputs(tmp);
    RunConfig c = base_config(tmp);
    c.gateway.mode = "openai";
    c.gateway.openai.base_url = "http://127.0.0.1:1";
    c.gateway.openai.timeout_seconds = 0.2;
    CHECK_THROWS_WITH_AS(cmd_run(c), doctest::Contains("unreachable"), GatewayError);
}

TEST_CASE("cmd_collect exports one batch file per question") {
    TempDir tmp("collect");
    tmp.write("dataset.jsonl",
              "{\"id\": \"t1\", \"question\": \"first question\", \"golden_answers\": "
              "[\"No\"]}\n"
              "{\"id\": \"t2\", \"question\": \"second question\", \"golden_answers\": "
              "[\"Yes\"]}\n");
    tmp.write("corpus.jsonl", small_corpus());
    nlohmann::json script = {
        {"default_replies",
         {"<think>a</think>\n<answer> No </answer>", "<think>b</think>\n<answer> Yes </answer>",
          "<think>c</think>\n<answer> No </answer>",
          "<think>d</think>\n<answer> Yes </answer>"}}};
    tmp.write("script.json", script.dump());

    RunConfig c = base_config(tmp);
    c.pipeline = "rl-angle";
    c.group_size = 4;
    auto outcome = cmd_collect(c);
    CHECK(outcome.batch_files.size() == 2);
    CHECK(outcome.records == 8);
    for (const auto& f : outcome.batch_files) {
        auto batch = grpo::import_batch(f);
        CHECK(batch.trajectories.size() == 4);
    }
}

TEST_CASE("cmd_collect rejects K=1 before any rollout") {
    TempDir tmp("collect_k1");
    write_inputs(tmp);
    RunConfig c = base_config(tmp);
    c.pipeline = "rl-angle";
    c.group_size = 1;
    CHECK_THROWS_AS(cmd_collect(c), ConfigError);
}

TEST_CASE("cmd_report merges reports into a marked grid") {
    TempDir tmp("report_grid");
    eval::RunRows strong, weak;
    strong.seed = 0;
    weak.seed = 0;
    for (int i = 0; i < 4; ++i) {
        eval::QuestionRow row;
        row.qid = "q" + std::to_string(i);
        row.em = i < 3 ? 1 : 0;
        strong.rows.push_back(row);
        row.em = i < 1 ? 1 : 0;
        weak.rows.push_back(row);
    }
    auto strong_report = eval::aggregate({strong}, "hotpotqa", "rl-angle", "entity-graph");
    auto weak_report = eval::aggregate({weak}, "hotpotqa", "rl-angle", "dense-lexical");
    auto p1 = tmp.write("a.json", eval::report_to_json(strong_report).dump());
    auto p2 = tmp.write("b.json", eval::report_to_json(weak_report).dump());

    std::string grid = cmd_report({p1, p2});
    CHECK(grid.find("hotpotqa") != std::string::npos);
    CHECK(grid.find("75.00±0.00*") != std::string::npos);  // best marker
    CHECK(grid.find("25.00±0.00^") != std::string::npos);  // second-best marker

    // mixed schema versions name the offending file
    auto bad = tmp.write("c.json", "{\"schema_version\": 99}");
    CHECK_THROWS_WITH_AS(cmd_report({p1, bad}), doctest::Contains("c.json"), ConfigError);
}

TEST_CASE("mock script book selects scenarios by substring") {
    TempDir tmp("scriptbook");
    tmp.write("script.json", scripted_answers());
    auto book = MockScriptBook::load(tmp.str("script.json"));
    auto gw = book.gateway_for("Where is the Laleli Mosque?");
    gateway::CompletionRequest req;
    req.messages.push_back(gateway::Message{"user", "x"});
    CHECK(gw->complete(req).text == "<answer> Fatih </answer>");

    auto fallback = book.gateway_for("unmatched question");
    CHECK(fallback->complete(req).text == "<answer> unknown </answer>");
}
