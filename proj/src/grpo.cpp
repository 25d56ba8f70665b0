#include "ragkit/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ragkit/eval.hpp"
#include "ragkit/util.hpp"

namespace ragkit::grpo {

using agent::Trajectory;

bool default_format_rule(const Trajectory& traj) {
    if (traj.termination != agent::Termination::Answered) return false;
    const auto& d = protocol::dialect_by_kind(traj.dialect);
    const std::string delims[] = {d.action_open, d.action_close, d.answer_open, d.answer_close};
    for (const auto& step : traj.steps) {
        for (const auto& seg : step.segments) {
            if (seg.kind != protocol::SegmentKind::Plain) continue;
            for (const auto& delim : delims) {
                if (seg.text.find(delim) != std::string::npos) return false;
            }
        }
    }
    return true;
}

double trajectory_reward(const Trajectory& traj, const std::vector<std::string>& golds,
                         const RewardSpec& spec) {
    if (spec.outcome_weight < 0.0 || spec.outcome_weight > 1.0) {
        throw ConfigError("reward outcome weight must be in [0, 1]");
    }
    double outcome = 0.0;
    if (traj.final_answer) {
        outcome = static_cast<double>(eval::contain_em(*traj.final_answer, golds));
    }
    const auto& rule = spec.format_rule ? spec.format_rule : default_format_rule;
    double format = rule(traj) ? 1.0 : 0.0;
    return spec.outcome_weight * outcome + (1.0 - spec.outcome_weight) * format;
}

std::vector<double> group_advantages(const std::vector<double>& rewards, AdvantageNorm norm,
                                     double std_floor) {
    const std::size_t k = rewards.size();
    if (k < 2) throw ContractError("group advantages require K >= 2 rewards");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(k);

    double denom = 1.0;
    if (norm == AdvantageNorm::Std) {
        double var = 0.0;
        for (double r : rewards) var += (r - mean) * (r - mean);
        var /= static_cast<double>(k);  // population variance
        denom = std::max(std::sqrt(var), std_floor);
    }
    std::vector<double> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = (rewards[i] - mean) / denom;
    return out;
}

TokenMask token_mask(const Trajectory& traj, bool mask_retrieved) {
    TokenMask mask;
    const std::string full = traj.full_text();
    const std::size_t prompt_len = traj.prompt_text.size();
    auto tokens = tokenize_ws(full);

    // Information segment spans, in absolute offsets into full_text.
    std::vector<std::pair<std::size_t, std::size_t>> info_spans;
    std::size_t base = prompt_len;
    for (const auto& step : traj.steps) {
        if (mask_retrieved) {
            for (const auto& seg : step.segments) {
                if (seg.kind == protocol::SegmentKind::Information) {
                    info_spans.push_back({base + seg.begin, base + seg.end});
                }
            }
        }
        base += step.text.size();
    }

    mask.bits.reserve(tokens.size());
    for (const auto& tok : tokens) {
        if (tok.begin < prompt_len) {
            mask.bits.push_back(0);
            mask.prompt_tokens += 1;
            continue;
        }
        bool in_info = false;
        for (const auto& [b, e] : info_spans) {
            if (tok.begin < e && tok.end > b) {
                in_info = true;
                break;
            }
        }
        mask.bits.push_back(in_info ? 0 : 1);
    }
    return mask;
}

double kl_estimate(double logp_new, double logp_ref) {
    const double x = logp_ref - logp_new;
    return std::exp(x) - x - 1.0;
}

GrpoResult grpo_objective(const GroupBatch& batch, const std::vector<PolicySurface>& surfaces,
                          const GrpoConfig& cfg) {
    const std::size_t k = batch.trajectories.size();
    if (surfaces.size() != k || batch.advantages.size() != k || batch.masks.size() != k) {
        throw ContractError("grpo_objective: batch, surfaces, advantages, masks must align");
    }
    if (cfg.epsilon <= 0.0 || cfg.epsilon >= 1.0) {
        throw ConfigError("grpo epsilon must lie in (0, 1)");
    }
    if (cfg.beta < 0.0) throw ConfigError("grpo beta must be >= 0");

    GrpoResult result;
    result.per_token_terms.resize(k);
    result.grad_logp_new.resize(k);

    std::size_t total_unmasked = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& s = surfaces[i];
        const auto& bits = batch.masks[i].bits;
        if (s.logp_new.size() != bits.size() || s.logp_old.size() != bits.size() ||
            s.logp_ref.size() != bits.size()) {
            throw ContractError("grpo_objective: surface " + std::to_string(i) +
                                " length does not match its token mask");
        }
        for (std::size_t t = 0; t < bits.size(); ++t) {
            if (s.logp_new[t] > 0.0 || s.logp_old[t] > 0.0 || s.logp_ref[t] > 0.0) {
                throw ContractError("grpo_objective: log-probabilities must be <= 0");
            }
        }
        total_unmasked += batch.masks[i].unmasked();
    }

    double clip_sum = 0.0;
    double kl_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& s = surfaces[i];
        const auto& bits = batch.masks[i].bits;
        const double adv = batch.advantages[i];
        const std::size_t len = std::max<std::size_t>(batch.masks[i].unmasked(), 1);
        result.per_token_terms[i].assign(bits.size(), 0.0);
        result.grad_logp_new[i].assign(bits.size(), 0.0);

        double traj_sum = 0.0;
        for (std::size_t t = 0; t < bits.size(); ++t) {
            if (!bits[t]) continue;
            const double rho = std::exp(s.logp_new[t] - s.logp_old[t]);
            const double clipped = std::clamp(rho, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
            const double a = rho * adv;
            const double b = clipped * adv;
            const double term = std::min(a, b);
            result.per_token_terms[i][t] = term;
            traj_sum += term;

            // d(objective)/d(logp_new[t]); the clipped branch has zero slope.
            double dterm = a <= b ? a : 0.0;
            double dkl = 1.0 - std::exp(s.logp_ref[t] - s.logp_new[t]);
            double dobj = dterm / (static_cast<double>(k) * static_cast<double>(len));
            if (total_unmasked > 0) {
                dobj -= cfg.beta * dkl / static_cast<double>(total_unmasked);
            }
            result.grad_logp_new[i][t] = -dobj;  // gradient of the loss

            kl_sum += kl_estimate(s.logp_new[t], s.logp_ref[t]);
        }
        clip_sum += traj_sum / static_cast<double>(len);
    }

    const double kl_mean = total_unmasked > 0 ? kl_sum / static_cast<double>(total_unmasked) : 0.0;
    result.objective = clip_sum / static_cast<double>(k) - cfg.beta * kl_mean;
    result.loss = -result.objective;
    return result;
}

GroupBatch collect_group(const std::string& question, const std::vector<std::string>& golds,
                         protocol::DialectKind dialect, const knowledge::KnowledgeBackend& backend,
                         gateway::LlmGateway& gw, int k, const RewardSpec& spec,
                         const agent::EpisodeOptions& opts, AdvantageNorm norm) {
    if (k < 2) throw ContractError("group advantages require K >= 2 rewards");
    GroupBatch batch;
    batch.question = question;
    agent::EpisodeOptions rollout_opts = opts;
    rollout_opts.temperature = 1.0;  // diverse rollouts; identical groups carry no signal
    for (int i = 0; i < k; ++i) {
        Trajectory traj = agent::run_rl_dialect(question, backend, gw, rollout_opts, dialect);
        batch.rewards.push_back(trajectory_reward(traj, golds, spec));
        batch.masks.push_back(token_mask(traj));
        batch.trajectories.push_back(std::move(traj));
    }
    batch.advantages = group_advantages(batch.rewards, norm);
    return batch;
}

namespace {

nlohmann::json flattened_segments(const Trajectory& traj) {
    nlohmann::json out = nlohmann::json::array();
    std::size_t base = traj.prompt_text.size();
    for (const auto& step : traj.steps) {
        for (const auto& seg : step.segments) {
            out.push_back({{"kind", protocol::segment_kind_name(seg.kind)},
                           {"text", seg.text},
                           {"begin", base + seg.begin},
                           {"end", base + seg.end}});
        }
        base += step.text.size();
    }
    return out;
}

}  // namespace

std::size_t export_batch(const GroupBatch& batch, const std::string& path) {
    if (path.empty()) throw IoError("export_batch: empty output path");
    std::ostringstream out;
    for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
        const Trajectory& traj = batch.trajectories[i];
        nlohmann::json record;
        record["question"] = batch.question;
        record["reward"] = batch.rewards[i];
        record["advantage"] = batch.advantages[i];
        record["full_text"] = traj.full_text();
        record["segments"] = flattened_segments(traj);
        record["mask"] = batch.masks[i].bits;
        record["prompt_tokens"] = batch.masks[i].prompt_tokens;
        nlohmann::json tj;
        to_json(tj, traj);
        record["trajectory"] = std::move(tj);
        out << record.dump() << "\n";
    }
    write_file_atomic(path, out.str());
    return batch.trajectories.size();
}

GroupBatch import_batch(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open batch file: " + path);
    GroupBatch batch;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_view(line).empty()) continue;
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object()) {
            throw ParseError("batch file " + path + ": line " + std::to_string(line_no) +
                             " is not a JSON object");
        }
        if (batch.trajectories.empty()) batch.question = record.value("question", std::string());
        Trajectory traj;
        from_json(record.at("trajectory"), traj);
        batch.trajectories.push_back(std::move(traj));
        batch.rewards.push_back(record.value("reward", 0.0));
        batch.advantages.push_back(record.value("advantage", 0.0));
        TokenMask mask;
        mask.bits = record.value("mask", std::vector<std::uint8_t>{});
        mask.prompt_tokens = record.value("prompt_tokens", std::size_t{0});
        batch.masks.push_back(std::move(mask));
    }
    return batch;
}

}  // namespace ragkit::grpo
