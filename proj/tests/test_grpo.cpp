#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ragkit/dense_backend.hpp"
#include "ragkit/grpo.hpp"
#include "support.hpp"

using namespace ragkit;
using namespace ragkit::grpo;
using agent::Trajectory;
using protocol::DialectKind;
using testsupport::make_chunks;

namespace {

std::unique_ptr<knowledge::DenseBackend> tiny_backend() {
    auto backend = knowledge::DenseBackend::build_lexical(
        make_chunks({{"c1", "laleli mosque fatih"}, {"c2", "esma sultan mansion ortakoy"}}));
    backend->set_timing_mode(knowledge::TimingMode::Fixed);
    return backend;
}

Trajectory answered_trajectory(const std::string& answer) {
    auto backend = tiny_backend();
    auto gw = testsupport::steps({"<think>sure</think>\n<answer> " + answer + " </answer>"});
    return agent::run_rl_dialect("q", *backend, *gw, agent::EpisodeOptions{},
                                 DialectKind::AngleTag);
}

Trajectory forced_answer_trajectory(const std::string& answer) {
    auto backend = tiny_backend();
    agent::EpisodeOptions opts;
    opts.budget.max_search_turns = 1;
    auto gw = testsupport::steps({"<think>a</think>\n<search> laleli </search>",
                                  "<think>b</think>\n<search> again </search>",
                                  "<answer> " + answer + " </answer>"});
    return agent::run_rl_dialect("q", *backend, *gw, opts, DialectKind::AngleTag);
}

}  // namespace

// --- rewards -----------------------------------------------------------------

TEST_CASE("trajectory reward composes outcome and format components") {
    RewardSpec spec;  // alpha 0.9
    Trajectory good = answered_trajectory("No");
    CHECK(trajectory_reward(good, {"No"}, spec) == doctest::Approx(1.0));

    Trajectory forced = forced_answer_trajectory("No");
    REQUIRE(forced.termination == agent::Termination::BudgetExhausted);
    REQUIRE(forced.final_answer == "No");
    CHECK(trajectory_reward(forced, {"No"}, spec) == doctest::Approx(0.9));

    Trajectory wrong = answered_trajectory("Yes");
    CHECK(trajectory_reward(wrong, {"No"}, spec) == doctest::Approx(0.1));
}

TEST_CASE("format rule rejects degraded action tags") {
    Trajectory traj = answered_trajectory("No");
    CHECK(default_format_rule(traj));
    // splice in a step whose action tag degraded to plain
    agent::Step bad;
    bad.text = "<search> unclosed forever\n";
    bad.segments = protocol::parse_segments(bad.text, protocol::angle_tag());
    traj.steps.insert(traj.steps.begin(), bad);
    CHECK(!default_format_rule(traj));
}

// --- advantages ----------------------------------------------------------------

TEST_CASE("group advantages normalize inside the group") {
    auto adv = group_advantages({1, 0, 0, 1}, AdvantageNorm::Std);
    CHECK(adv[0] == doctest::Approx(1.0));
    CHECK(adv[1] == doctest::Approx(-1.0));
    CHECK(adv[2] == doctest::Approx(-1.0));
    CHECK(adv[3] == doctest::Approx(1.0));

    auto flat = group_advantages({0.3, 0.3, 0.3, 0.3}, AdvantageNorm::Std);
    for (double a : flat) CHECK(a == 0.0);

    auto mean_only = group_advantages({1, 0}, AdvantageNorm::MeanOnly);
    CHECK(mean_only[0] == doctest::Approx(0.5));
    CHECK(mean_only[1] == doctest::Approx(-0.5));

    CHECK_THROWS_AS(group_advantages({1.0}, AdvantageNorm::Std), ContractError);
}

TEST_CASE("advantage centering and invariances") {
    std::mt19937 rng(31);
    std::uniform_int_distribution<int> k_dist(2, 12);
    std::uniform_real_distribution<double> r_dist(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        int k = k_dist(rng);
        std::vector<double> rewards;
        for (int i = 0; i < k; ++i) rewards.push_back(r_dist(rng));

        for (auto norm : {AdvantageNorm::Std, AdvantageNorm::MeanOnly}) {
            auto adv = group_advantages(rewards, norm);
            double sum = 0.0;
            for (double a : adv) sum += a;
            CHECK(std::abs(sum) <= 1e-9);
        }

        // scaling all rewards by c > 0 leaves Std advantages unchanged
        auto base = group_advantages(rewards, AdvantageNorm::Std);
        std::vector<double> scaled;
        for (double r : rewards) scaled.push_back(r * 3.7);
        auto scaled_adv = group_advantages(scaled, AdvantageNorm::Std);
        for (int i = 0; i < k; ++i) CHECK(scaled_adv[i] == doctest::Approx(base[i]).epsilon(1e-9));

        // shifting preserves Std values and the ordering in both modes
        std::vector<double> shifted;
        for (double r : rewards) shifted.push_back(r + 0.25);
        auto shifted_adv = group_advantages(shifted, AdvantageNorm::Std);
        for (int i = 0; i < k; ++i) {
            CHECK(shifted_adv[i] == doctest::Approx(base[i]).epsilon(1e-9));
        }
        auto mean_base = group_advantages(rewards, AdvantageNorm::MeanOnly);
        auto mean_shift = group_advantages(shifted, AdvantageNorm::MeanOnly);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                CHECK((mean_base[i] < mean_base[j]) == (mean_shift[i] < mean_shift[j]));
            }
        }
    }
}

// --- token masks ------------------------------------------------------------------

TEST_CASE("token mask: no retrieval means all generated tokens are live") {
    Trajectory traj = answered_trajectory("No");
    TokenMask mask = token_mask(traj);
    auto prompt_tokens = count_tokens(traj.prompt_text);
    CHECK(mask.prompt_tokens == prompt_tokens);
    std::size_t total = count_tokens(traj.full_text());
    REQUIRE(mask.bits.size() == total);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        CHECK(mask.bits[i] == (i < prompt_tokens ? 0 : 1));
    }
}

TEST_CASE("token mask zeroes exactly the information-block tokens") {
    Trajectory traj;
    traj.question = "q";
    traj.dialect = DialectKind::AngleTag;
    traj.prompt_text = "prompt has three\n";
    agent::Step step;
    step.text = "<think>go</think>\n<information>i1 i2 i3 i4 i5 i6 i7</information>\n"
                "<answer> x </answer>\n";
    step.segments = protocol::parse_segments(step.text, protocol::angle_tag());
    traj.steps.push_back(step);

    TokenMask mask = token_mask(traj);
    CHECK(mask.prompt_tokens == 3);
    std::size_t zeros_in_generated = 0;
    for (std::size_t i = mask.prompt_tokens; i < mask.bits.size(); ++i) {
        if (!mask.bits[i]) ++zeros_in_generated;
    }
    CHECK(zeros_in_generated == 7);  // the information block spans 7 tokens

    // with retrieved-token masking off, only the prompt stays masked
    TokenMask unmasked = token_mask(traj, false);
    for (std::size_t i = unmasked.prompt_tokens; i < unmasked.bits.size(); ++i) {
        CHECK(unmasked.bits[i] == 1);
    }
}

// --- objective ----------------------------------------------------------------------

namespace {

GroupBatch manual_batch(const std::vector<std::vector<std::uint8_t>>& bit_rows,
                        const std::vector<double>& advantages) {
    GroupBatch batch;
    batch.question = "q";
    for (std::size_t i = 0; i < bit_rows.size(); ++i) {
        batch.trajectories.push_back(Trajectory{});
        TokenMask mask;
        mask.bits = bit_rows[i];
        batch.masks.push_back(mask);
        batch.rewards.push_back(0.0);
    }
    batch.advantages = advantages;
    return batch;
}

PolicySurface surface_of(const std::vector<double>& lnew, const std::vector<double>& lold,
                         const std::vector<double>& lref) {
    return PolicySurface{lnew, lold, lref};
}

std::vector<double> log_softmax_at(const std::vector<double>& logits,
                                   const std::vector<int>& tokens) {
    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    double lse = 0.0;
    for (double z : logits) lse += std::exp(z - mx);
    lse = mx + std::log(lse);
    std::vector<double> out;
    for (int t : tokens) out.push_back(logits[static_cast<std::size_t>(t)] - lse);
    return out;
}

struct ToyProblem {
    std::vector<double> logits_new, logits_old, logits_ref;
    std::vector<std::vector<int>> tokens;  // per trajectory
    GroupBatch batch;
    GrpoConfig cfg;

    std::vector<PolicySurface> surfaces(const std::vector<double>& znew) const {
        std::vector<PolicySurface> out;
        for (const auto& toks : tokens) {
            out.push_back(surface_of(log_softmax_at(znew, toks),
                                     log_softmax_at(logits_old, toks),
                                     log_softmax_at(logits_ref, toks)));
        }
        return out;
    }
    double loss_at(const std::vector<double>& znew) const {
        return grpo_objective(batch, surfaces(znew), cfg).loss;
    }
};

// Random toy policy with every ratio kept away from the clip boundaries so
// central differences stay on one branch.
ToyProblem make_toy(unsigned seed) {
    for (unsigned attempt = 0;; ++attempt) {
        std::mt19937 rng(seed * 977 + attempt);
        std::uniform_int_distribution<int> vocab_dist(2, 10);
        std::uniform_int_distribution<int> len_dist(1, 20);
        std::uniform_int_distribution<int> k_dist(2, 4);
        std::uniform_real_distribution<double> logit_dist(-1.5, 1.5);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        ToyProblem toy;
        int vocab = vocab_dist(rng);
        int k = k_dist(rng);
        auto draw_logits = [&]() {
            std::vector<double> z;
            for (int v = 0; v < vocab; ++v) z.push_back(logit_dist(rng));
            return z;
        };
        toy.logits_new = draw_logits();
        toy.logits_old = draw_logits();
        toy.logits_ref = draw_logits();
        toy.cfg.epsilon = 0.2;
        toy.cfg.beta = 0.01;

        std::vector<std::vector<std::uint8_t>> bits;
        std::vector<double> rewards;
        std::uniform_int_distribution<int> tok_dist(0, vocab - 1);
        for (int i = 0; i < k; ++i) {
            int len = len_dist(rng);
            std::vector<int> toks;
            std::vector<std::uint8_t> row;
            for (int t = 0; t < len; ++t) {
                toks.push_back(tok_dist(rng));
                row.push_back(unit(rng) < 0.25 ? 0 : 1);
            }
            toy.tokens.push_back(toks);
            bits.push_back(row);
            rewards.push_back(unit(rng));
        }
        toy.batch = manual_batch(bits, group_advantages(rewards, AdvantageNorm::Std));

        // reject ratios within 5e-3 of a clip boundary
        bool ok = true;
        auto surfaces = toy.surfaces(toy.logits_new);
        for (const auto& s : surfaces) {
            for (std::size_t t = 0; t < s.logp_new.size(); ++t) {
                double rho = std::exp(s.logp_new[t] - s.logp_old[t]);
                if (std::abs(rho - (1.0 - toy.cfg.epsilon)) < 5e-3 ||
                    std::abs(rho - (1.0 + toy.cfg.epsilon)) < 5e-3) {
                    ok = false;
                }
            }
        }
        if (ok) return toy;
    }
}

}  // namespace

TEST_CASE("objective vanishes when ratios are 1 and beta is 0") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> lp(-3.0, -0.1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GroupBatch batch = manual_batch({{1, 1, 1}, {1, 0, 1}, {1, 1, 0}},
                                    group_advantages({1.0, 0.0, 0.5}, AdvantageNorm::Std));
    std::vector<PolicySurface> surfaces;
    for (int i = 0; i < 3; ++i) {
        std::vector<double> l;
        for (int t = 0; t < 3; ++t) l.push_back(lp(rng));
        surfaces.push_back(surface_of(l, l, l));  // rho = 1 everywhere
    }
    GrpoConfig cfg;
    cfg.beta = 0.0;
    auto result = grpo_objective(batch, surfaces, cfg);
    CHECK(std::abs(result.objective) <= 1e-9);
}

TEST_CASE("clip arithmetic on a single token") {
    GroupBatch batch = manual_batch({{1}, {1}}, {1.0, -1.0});
    // rho = 1.5 for the first trajectory
    std::vector<PolicySurface> surfaces = {
        surface_of({std::log(1.5) - 1.0}, {-1.0}, {-1.0}),
        surface_of({-1.0}, {-1.0}, {-1.0}),
    };
    GrpoConfig cfg;
    cfg.beta = 0.0;
    auto result = grpo_objective(batch, surfaces, cfg);
    CHECK(result.per_token_terms[0][0] == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("clip inactivity: small ratios match the unclipped objective to 1e-12") {
    ToyProblem toy = make_toy(77);
    // shrink the new policy toward the old one so every rho is inside the band
    for (std::size_t v = 0; v < toy.logits_new.size(); ++v) {
        toy.logits_new[v] = toy.logits_old[v] + 0.01 * (toy.logits_new[v] - toy.logits_old[v]);
    }
    auto surfaces = toy.surfaces(toy.logits_new);
    auto result = grpo_objective(toy.batch, surfaces, toy.cfg);

    // manual unclipped objective
    double clip_sum = 0.0, kl_sum = 0.0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < surfaces.size(); ++i) {
        double traj_sum = 0.0;
        std::size_t unmasked = 0;
        for (std::size_t t = 0; t < surfaces[i].logp_new.size(); ++t) {
            if (!toy.batch.masks[i].bits[t]) continue;
            ++unmasked;
            double rho = std::exp(surfaces[i].logp_new[t] - surfaces[i].logp_old[t]);
            CHECK(rho > 1.0 - toy.cfg.epsilon);
            CHECK(rho < 1.0 + toy.cfg.epsilon);
            traj_sum += rho * toy.batch.advantages[i];
            kl_sum += kl_estimate(surfaces[i].logp_new[t], surfaces[i].logp_ref[t]);
        }
        total += unmasked;
        if (unmasked > 0) clip_sum += traj_sum / static_cast<double>(unmasked);
    }
    double unclipped = clip_sum / static_cast<double>(surfaces.size()) -
                       toy.cfg.beta * (total ? kl_sum / static_cast<double>(total) : 0.0);
    CHECK(std::abs(result.objective - unclipped) <= 1e-12);
}

TEST_CASE("masked tokens have exactly zero effect on the loss") {
    ToyProblem toy = make_toy(123);
    auto surfaces = toy.surfaces(toy.logits_new);
    double base = grpo_objective(toy.batch, surfaces, toy.cfg).loss;
    bool flipped_any = false;
    for (std::size_t i = 0; i < surfaces.size(); ++i) {
        for (std::size_t t = 0; t < surfaces[i].logp_new.size(); ++t) {
            if (toy.batch.masks[i].bits[t]) continue;
            auto mutated = surfaces;
            mutated[i].logp_new[t] -= 1.2345;
            double loss = grpo_objective(toy.batch, mutated, toy.cfg).loss;
            CHECK(loss == base);  // bitwise identical
            flipped_any = true;
        }
    }
    CHECK(flipped_any);
}

TEST_CASE("analytic gradient matches central finite differences") {
    double worst = 0.0;
    for (unsigned seed = 0; seed < 100; ++seed) {
        ToyProblem toy = make_toy(seed);
        auto surfaces = toy.surfaces(toy.logits_new);
        auto result = grpo_objective(toy.batch, surfaces, toy.cfg);

        // chain rule through log-softmax: dL/dz_v = sum_t g_t (1[tok=v] - p_v)
        std::vector<double> p;
        {
            double mx = toy.logits_new[0];
            for (double z : toy.logits_new) mx = std::max(mx, z);
            double lse = 0.0;
            for (double z : toy.logits_new) lse += std::exp(z - mx);
            for (double z : toy.logits_new) p.push_back(std::exp(z - mx) / lse);
        }
        std::vector<double> analytic(toy.logits_new.size(), 0.0);
        for (std::size_t i = 0; i < toy.tokens.size(); ++i) {
            for (std::size_t t = 0; t < toy.tokens[i].size(); ++t) {
                double g = result.grad_logp_new[i][t];
                if (g == 0.0) continue;
                for (std::size_t v = 0; v < analytic.size(); ++v) {
                    double ind = toy.tokens[i][t] == static_cast<int>(v) ? 1.0 : 0.0;
                    analytic[v] += g * (ind - p[v]);
                }
            }
        }

        const double h = 1e-4;
        for (std::size_t v = 0; v < toy.logits_new.size(); ++v) {
            auto zp = toy.logits_new, zm = toy.logits_new;
            zp[v] += h;
            zm[v] -= h;
            double fd = (toy.loss_at(zp) - toy.loss_at(zm)) / (2.0 * h);
            double denom = std::max({std::abs(fd), std::abs(analytic[v]), 1e-8});
            double rel = std::abs(fd - analytic[v]) / denom;
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("KL estimator is non-negative everywhere") {
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> lp(-12.0, 0.0);
    for (int i = 0; i < 10000; ++i) {
        CHECK(kl_estimate(lp(rng), lp(rng)) >= 0.0);
    }
}

TEST_CASE("misaligned surfaces are a contract error") {
    GroupBatch batch = manual_batch({{1, 1}}, {0.0});
    std::vector<PolicySurface> surfaces = {surface_of({-1.0}, {-1.0}, {-1.0})};
    CHECK_THROWS_AS(grpo_objective(batch, surfaces, GrpoConfig{}), ContractError);
    CHECK_THROWS_AS(grpo_objective(batch, {}, GrpoConfig{}), ContractError);
}

TEST_CASE("positive log-probabilities are rejected") {
    GroupBatch batch = manual_batch({{1}}, {0.0});
    std::vector<PolicySurface> surfaces = {surface_of({0.5}, {-1.0}, {-1.0})};
    CHECK_THROWS_AS(grpo_objective(batch, surfaces, GrpoConfig{}), ContractError);
}

// --- group collection -------------------------------------------------------------------

TEST_CASE("collect_group: rewards and symmetric advantages for 2-of-4 correct") {
    auto backend = tiny_backend();
    auto gw = testsupport::steps({
        "<think>a</think>\n<answer> No </answer>",
        "<think>b</think>\n<answer> No </answer>",
        "<think>c</think>\n<answer> Yes </answer>",
        "<think>d</think>\n<answer> Yes </answer>",
    });
    GroupBatch batch = collect_group("q", {"No"}, DialectKind::AngleTag, *backend, *gw, 4);
    REQUIRE(batch.trajectories.size() == 4);
    CHECK(batch.rewards[0] == doctest::Approx(1.0));
    CHECK(batch.rewards[1] == doctest::Approx(1.0));
    CHECK(batch.rewards[2] == doctest::Approx(0.1));
    CHECK(batch.rewards[3] == doctest::Approx(0.1));
    CHECK(batch.advantages[0] == doctest::Approx(1.0));
    CHECK(batch.advantages[3] == doctest::Approx(-1.0));
    CHECK(batch.masks.size() == 4);
}

TEST_CASE("collect_group with K=1 fails before any rollout") {
    auto backend = tiny_backend();
    auto gw = testsupport::steps({"never consumed"});
    CHECK_THROWS_AS(collect_group("q", {"No"}, DialectKind::AngleTag, *backend, *gw, 1),
                    ContractError);
    CHECK(gw->calls() == 0);
}

TEST_CASE("collect_group: identical rollouts have zero advantages") {
    auto backend = tiny_backend();
    auto gw = testsupport::steps({
        "<answer> same </answer>",
        "<answer> same </answer>",
        "<answer> same </answer>",
    });
    GroupBatch batch = collect_group("q", {"No"}, DialectKind::AngleTag, *backend, *gw, 3);
    for (double a : batch.advantages) CHECK(a == 0.0);
}

TEST_CASE("failed episodes still produce rewarded trajectories") {
    auto backend = tiny_backend();
    // second rollout has no reply -> gateway error -> ProtocolFailure
    gateway::ScriptedGateway gw({gateway::step_rule(0, "<answer> No </answer>"),
                        gateway::step_rule(1, "<answer> No </answer>")});
    GroupBatch batch = collect_group("q", {"No"}, DialectKind::AngleTag, *backend, gw, 3);
    REQUIRE(batch.trajectories.size() == 3);
    CHECK(batch.trajectories[2].termination == agent::Termination::ProtocolFailure);
    CHECK(batch.rewards[2] == doctest::Approx(0.0));  // no answer, no format credit
}

// --- export / import -----------------------------------------------------------------------

TEST_CASE("export_batch writes one record per trajectory and round-trips") {
    testsupport::TempDir tmp("grpo_export");
    auto backend = tiny_backend();
    auto gw = testsupport::steps({
        "<think>a</think>\n<search> laleli </search>",
        "<think>a2</think>\n<answer> No </answer>",
        "<answer> Yes </answer>",
        "<answer> No </answer>",
        "<answer> maybe </answer>",
    });
    GroupBatch batch = collect_group("q", {"No"}, DialectKind::AngleTag, *backend, *gw, 4);
    const std::string path = tmp.str("batch.jsonl");
    CHECK(export_batch(batch, path) == 4);

    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        if (!line.empty()) ++lines;
    }
    CHECK(lines == 4);

    GroupBatch back = import_batch(path);
    CHECK(back.question == batch.question);
    REQUIRE(back.trajectories.size() == batch.trajectories.size());
    for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
        CHECK(back.trajectories[i] == batch.trajectories[i]);
        CHECK(back.rewards[i] == batch.rewards[i]);
        CHECK(back.advantages[i] == batch.advantages[i]);
        CHECK(back.masks[i].bits == batch.masks[i].bits);
        CHECK(back.masks[i].prompt_tokens == batch.masks[i].prompt_tokens);
    }

    CHECK_THROWS_AS(export_batch(batch, ""), IoError);
}
