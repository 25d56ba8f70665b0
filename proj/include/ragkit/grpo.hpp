#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ragkit/agent.hpp"

namespace ragkit::grpo {

// r = alpha * ContainEM(final_answer, golds) + (1 - alpha) * format_valid.
// The default format rule accepts a trajectory iff it terminated Answered
// and no step left a Plain segment containing an action or answer delimiter
// (i.e. zero degraded action tags).
struct RewardSpec {
    double outcome_weight = 0.9;
    std::function<bool(const agent::Trajectory&)> format_rule;  // empty -> default rule
};

bool default_format_rule(const agent::Trajectory& traj);

double trajectory_reward(const agent::Trajectory& traj, const std::vector<std::string>& golds,
                         const RewardSpec& spec = {});

enum class AdvantageNorm { Std, MeanOnly };

// A_i = (r_i - mean) / F_norm. Std divides by max(population std, floor);
// MeanOnly divides by 1. Groups of size < 2 are an error.
std::vector<double> group_advantages(const std::vector<double>& rewards, AdvantageNorm norm,
                                     double std_floor = 1e-6);

// Mask bit per whitespace token of a trajectory's full text: 0 for prompt
// tokens and any token overlapping an Information segment's byte span,
// 1 for model-generated tokens.
struct TokenMask {
    std::vector<std::uint8_t> bits;
    std::size_t prompt_tokens = 0;

    std::size_t unmasked() const {
        std::size_t n = 0;
        for (auto b : bits) n += b;
        return n;
    }
};

// Retrieved-token masking applies under every dialect by default;
// mask_retrieved=false keeps only the prompt masked.
TokenMask token_mask(const agent::Trajectory& traj, bool mask_retrieved = true);

struct GrpoConfig {
    double epsilon = 0.2;
    double beta = 1e-3;
    AdvantageNorm norm = AdvantageNorm::Std;
    double std_floor = 1e-6;
};

// Per-token log-probabilities under the current, old, and reference policies
// for one trajectory, aligned 1:1 with its TokenMask bits. All values <= 0.
struct PolicySurface {
    std::vector<double> logp_new;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
};

struct GroupBatch {
    std::string question;
    std::vector<agent::Trajectory> trajectories;
    std::vector<double> rewards;
    std::vector<double> advantages;
    std::vector<TokenMask> masks;
};

// Clipped GRPO surrogate with KL regularization toward the reference policy:
//
//   objective = (1/K) sum_i (1/|tau_i|) sum_t min(rho_t A_i, clip(rho_t, 1+-eps) A_i)
//               - beta * mean_t[ exp(lref - lnew) - (lref - lnew) - 1 ]
//
// rho_t = exp(logp_new - logp_old). Masked tokens contribute zero to both
// sums and are excluded from |tau_i| and the KL mean. loss = -objective.
// per_token_terms holds the per-token clipped surrogate (0 where masked),
// grad_logp_new the analytic d(loss)/d(logp_new).
struct GrpoResult {
    double loss = 0.0;
    double objective = 0.0;
    std::vector<std::vector<double>> per_token_terms;
    std::vector<std::vector<double>> grad_logp_new;
};

GrpoResult grpo_objective(const GroupBatch& batch, const std::vector<PolicySurface>& surfaces,
                          const GrpoConfig& cfg = {});

// Per-token KL estimator, exp(x) - x - 1 with x = logp_ref - logp_new; >= 0.
double kl_estimate(double logp_new, double logp_ref);

// K rollouts via the ReAct loop (sampling temperature 1.0), rewards,
// group-relative advantages, masks. Failed episodes still produce rewarded
// trajectories; K < 2 fails in group_advantages before any rollout.
GroupBatch collect_group(const std::string& question, const std::vector<std::string>& golds,
                         protocol::DialectKind dialect, const knowledge::KnowledgeBackend& backend,
                         gateway::LlmGateway& gw, int k, const RewardSpec& spec = {},
                         const agent::EpisodeOptions& opts = {},
                         AdvantageNorm norm = AdvantageNorm::Std);

// One JSON object per trajectory (question, full text, absolute segment
// spans, mask bits, reward, advantage, and the trajectory record itself);
// round-trips losslessly through import_batch. Returns the record count.
std::size_t export_batch(const GroupBatch& batch, const std::string& path);
GroupBatch import_batch(const std::string& path);

}  // namespace ragkit::grpo
