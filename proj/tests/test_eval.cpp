#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cctype>
#include <map>
#include <random>

#include "ragkit/eval.hpp"

using namespace ragkit;
using namespace ragkit::eval;

TEST_CASE("normalize_answer applies the full rule chain") {
    CHECK(normalize_answer("The Laleli Mosque.") == "laleli mosque");
    CHECK(normalize_answer("") == "");
    CHECK(normalize_answer("Beijing") == "beijing");
    CHECK(normalize_answer("  An  apple,  a day! ") == "apple day");
    CHECK(normalize_answer("A") == "");  // the bare article vanishes
}

TEST_CASE("contain_em semantics") {
    CHECK(contain_em("the answer is no", {"No"}) == 1);
    CHECK(contain_em("north", {"no"}) == 1);  // documented substring sharp edge
    CHECK(contain_em("I have no idea about coffee", {"tea"}) == 0);
    CHECK(contain_em("anything", {""}) == 0);  // empty gold never matches
    CHECK(contain_em("", {"x"}) == 0);
    CHECK(contain_em("multi gold", {"zzz", "gold"}) == 1);
}

TEST_CASE("contain_em truth table") {
    struct Case {
        const char* pred;
        std::vector<std::string> golds;
        int want;
    };
    const std::vector<Case> table = {
        {"Paris", {"Paris"}, 1},
        {"  PARIS!  ", {"paris"}, 1},
        {"the city of Paris, France", {"Paris"}, 1},
        {"pariah states", {"Paris"}, 0},
        {"north", {"no"}, 1},
        {"no", {"north"}, 0},
        {"A The An", {"a"}, 0},          // normalization empties both sides
        {"answer: 42", {"42"}, 1},
        {"42", {"421"}, 0},
        {"the one", {"one", "two"}, 1},
        {"the two", {"one", "two"}, 1},
        {"neither", {"one", "two"}, 0},
    };
    for (const auto& c : table) {
        CAPTURE(c.pred);
        CHECK(contain_em(c.pred, c.golds) == c.want);
    }
}

TEST_CASE("f1 arithmetic") {
    CHECK(f1("a b", "b c") == doctest::Approx(0.5));
    CHECK(f1("same words", "same words") == 1.0);
    CHECK(f1("x y y", "y") == doctest::Approx(0.5));  // min multiplicity in the overlap
    CHECK(f1("", "") == 1.0);
    CHECK(f1("word", "") == 0.0);
    CHECK(f1("", "word") == 0.0);
    CHECK(f1_multi("b", {"a", "b"}) == 1.0);
}

TEST_CASE("f1 is symmetric") {
    std::mt19937 rng(3);
    const std::vector<std::string> vocab = {"a", "b", "c", "dd", "e"};
    std::uniform_int_distribution<int> len(0, 6);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    auto sample = [&]() {
        std::string s;
        int n = len(rng);
        for (int i = 0; i < n; ++i) {
            if (i) s += " ";
            s += vocab[pick(rng)];
        }
        return s;
    };
    for (int i = 0; i < 300; ++i) {
        std::string x = sample(), y = sample();
        CHECK(f1(x, y) == doctest::Approx(f1(y, x)));
    }
}

TEST_CASE("contain_em with a single-token gold implies positive f1") {
    const std::vector<std::string> golds = {"paris"};
    const std::vector<std::string> preds = {"paris", "in paris today", "PARIS."};
    for (const auto& p : preds) {
        REQUIRE(contain_em(p, golds) == 1);
        CHECK(f1_multi(p, golds) > 0.0);
    }
}

TEST_CASE("f1 equals an independent brute-force multiset computation") {
    std::mt19937 rng(17);
    const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "x", "y9", "z"};
    std::uniform_int_distribution<int> len(0, 8);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    auto sample = [&]() {
        std::string s;
        int n = len(rng);
        for (int i = 0; i < n; ++i) {
            if (i) s += " ";
            s += vocab[pick(rng)];
        }
        return s;
    };
    auto brute = [](const std::string& a, const std::string& b) {
        // independent re-implementation of the documented token rule:
        // lowercase, drop ASCII punctuation, split on whitespace
        auto tok = [](const std::string& s) {
            std::vector<std::string> out;
            std::string cur;
            for (char raw : s) {
                char c = raw;
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
                unsigned char u = static_cast<unsigned char>(c);
                if (u < 0x80 && std::ispunct(u)) continue;
                if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
                    if (!cur.empty()) out.push_back(cur);
                    cur.clear();
                } else {
                    cur.push_back(c);
                }
            }
            if (!cur.empty()) out.push_back(cur);
            return out;
        };
        auto ta = tok(a), tb = tok(b);
        if (ta.empty() && tb.empty()) return 1.0;
        if (ta.empty() || tb.empty()) return 0.0;
        // multiset intersection by exhaustive pairing
        std::vector<bool> used(tb.size(), false);
        int overlap = 0;
        for (const auto& w : ta) {
            for (std::size_t j = 0; j < tb.size(); ++j) {
                if (!used[j] && tb[j] == w) {
                    used[j] = true;
                    ++overlap;
                    break;
                }
            }
        }
        return 2.0 * overlap / static_cast<double>(ta.size() + tb.size());
    };
    for (int i = 0; i < 200; ++i) {
        std::string a = sample(), b = sample();
        CAPTURE(a);
        CAPTURE(b);
        CHECK(f1(a, b) == brute(a, b));
    }
}

TEST_CASE("metric bounds under fuzzed unicode") {
    std::mt19937 rng(29);
    std::uniform_int_distribution<int> len(0, 24);
    std::uniform_int_distribution<int> byte(0, 255);
    auto noise = [&]() {
        std::string s;
        int n = len(rng);
        for (int i = 0; i < n; ++i) s.push_back(static_cast<char>(byte(rng)));
        return s;
    };
    for (int i = 0; i < 500; ++i) {
        std::string p = noise(), g = noise();
        int em = contain_em(p, {g});
        CHECK((em == 0 || em == 1));
        double score = f1(p, g);
        CHECK(score >= 0.0);
        CHECK(score <= 1.0);
    }
}

// --- retrieval recall ----------------------------------------------------------

namespace {

agent::Trajectory trajectory_with_units(const std::vector<std::string>& unit_ids_per_step) {
    agent::Trajectory traj;
    for (const auto& id : unit_ids_per_step) {
        agent::Step step;
        knowledge::RetrievalResult r;
        r.units.push_back(knowledge::EvidenceUnit{id, "", "", 1.0,
                                                  knowledge::EvidenceKind::Chunk, ""});
        step.retrieval = r;
        traj.steps.push_back(step);
    }
    return traj;
}

}  // namespace

TEST_CASE("retrieval recall is cumulative and set-based") {
    auto traj = trajectory_with_units({"d1#0"});
    CHECK(retrieval_recall(traj, {"d1", "d2"}) == doctest::Approx(0.5));
    CHECK(!retrieval_recall(traj, {}).has_value());
    auto twice = trajectory_with_units({"d1#0", "d1#1"});
    CHECK(retrieval_recall(twice, {"d1", "d2"}) == doctest::Approx(0.5));
}

// --- aggregation -----------------------------------------------------------------

namespace {

RunRows run_with_ems(std::int64_t seed, const std::vector<int>& ems) {
    RunRows run;
    run.seed = seed;
    for (std::size_t i = 0; i < ems.size(); ++i) {
        QuestionRow row;
        row.qid = "q" + std::to_string(i);
        row.em = ems[i];
        row.f1 = ems[i];
        row.search_turns = 2;
        run.rows.push_back(row);
    }
    return run;
}

}  // namespace

TEST_CASE("aggregate: population std over per-run EM means") {
    // per-run EM means 33%, 34%, 35% -> mean 34%, std sqrt(2/3) percentage points
    std::vector<RunRows> runs;
    for (int target : {33, 34, 35}) {
        RunRows run;
        run.seed = target;
        for (int i = 0; i < 100; ++i) {
            QuestionRow row;
            row.qid = "q" + std::to_string(i);
            row.em = i < target ? 1 : 0;
            run.rows.push_back(row);
        }
        runs.push_back(run);
    }
    auto report = aggregate(runs, "synthetic", "single-shot", "dense-lexical");
    CHECK(report.contain_em_mean == doctest::Approx(0.34));
    CHECK(report.em_std_over_runs * 100.0 == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(mean_pm_std(report.contain_em_mean, report.em_std_over_runs) == "34.00±0.82");
}

TEST_CASE("aggregate: single run has zero variance") {
    auto report = aggregate({run_with_ems(0, {1, 0, 1})}, "d", "p", "b");
    CHECK(report.em_std_over_runs == 0.0);
    CHECK(report.n == 3);
    CHECK(report.runs == 1);
    CHECK(report.mean_search_turns == doctest::Approx(2.0));
}

TEST_CASE("aggregate rejects empty inputs") {
    CHECK_THROWS_AS(aggregate({}, "d", "p", "b"), ContractError);
    RunRows empty;
    CHECK_THROWS_AS(aggregate({empty}, "d", "p", "b"), ContractError);
}

TEST_CASE("report renders the mean±std shape") {
    CHECK(mean_pm_std(0.4236, 0.0022) == "42.36±0.22");
    auto report = aggregate({run_with_ems(0, {1, 1, 0, 0})}, "d", "p", "b");
    auto j = report_to_json(report);
    CHECK(j["em_mean_pm_std"] == "50.00±0.00");
    CHECK(j["schema_version"] == kReportSchemaVersion);
}

TEST_CASE("report json round-trips") {
    auto report = aggregate({run_with_ems(0, {1, 0})}, "ds", "pipe", "bk");
    auto j = report_to_json(report);
    auto back = report_from_json(j);
    CHECK(report_to_json(back) == j);
    // wrong version refuses to load
    j["schema_version"] = 999;
    CHECK_THROWS_AS(report_from_json(j), ConfigError);
}

TEST_CASE("csv export carries the documented columns") {
    auto report = aggregate({run_with_ems(0, {1})}, "d", "p", "b");
    auto csv = to_csv(report);
    CHECK(csv.rfind("qid,em,f1,turns,recall,answer\n", 0) == 0);
    CHECK(csv.find("q0,1,") != std::string::npos);
}
