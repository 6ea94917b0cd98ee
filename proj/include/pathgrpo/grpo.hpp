#pragma once

// Group-relative advantages and the clipped, KL-regularized GRPO objective
// with its analytic gradient.
//
// The objective for one group of G responses sampled from the old policy is
//
//   J = 1/G * sum_i [ min(r_i A_i, clip(r_i, 1-eps, 1+eps) A_i) - beta * KL_i ]
//
// with r_i = exp(lp_cur_i - lp_old_i), A_i the group-normalized reward and
// KL_i = t - log t - 1, t = exp(lp_ref_i - lp_cur_i). Only lp_cur depends on
// the trainable parameters; A, lp_old and lp_ref are constants.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgrpo/error.hpp"
#include "pathgrpo/reward.hpp"

namespace pathgrpo {

struct GrpoConfig {
  std::size_t group_size = 4;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double std_floor = 1e-8;

  void validate() const {
    if (group_size < 2) throw ConfigError("grpo.group_size must be >= 2");
    if (!(clip_epsilon > 0)) throw ConfigError("grpo.clip_epsilon must be > 0");
    if (!(kl_beta >= 0)) throw ConfigError("grpo.kl_beta must be >= 0");
    if (!(std_floor > 0)) throw ConfigError("grpo.std_floor must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const GrpoConfig& c) {
  j = {{"group_size", c.group_size},
       {"clip_epsilon", c.clip_epsilon},
       {"kl_beta", c.kl_beta},
       {"std_floor", c.std_floor}};
}

inline void from_json(const nlohmann::json& j, GrpoConfig& c) {
  c = GrpoConfig{};
  c.group_size = j.value("group_size", c.group_size);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.kl_beta = j.value("kl_beta", c.kl_beta);
  c.std_floor = j.value("std_floor", c.std_floor);
  c.validate();
}

struct AdvantageGroup {
  std::vector<double> advantages;
  bool degenerate = false;
};

/// (r_i - mean) / std with the population standard deviation. Groups whose
/// std falls below cfg.std_floor get all-zero advantages.
inline AdvantageGroup group_advantages(std::span<const double> rewards, const GrpoConfig& cfg) {
  if (rewards.size() != cfg.group_size) {
    throw ConfigError("expected " + std::to_string(cfg.group_size) + " rewards, got " +
                      std::to_string(rewards.size()));
  }
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);

  AdvantageGroup g;
  g.advantages.assign(rewards.size(), 0.0);
  if (!(sd >= cfg.std_floor)) {
    g.degenerate = true;
    return g;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) g.advantages[i] = (rewards[i] - mean) / sd;
  return g;
}

inline double policy_ratio(double logprob_current, double logprob_old) {
  return std::exp(logprob_current - logprob_old);
}

inline double clipped_term(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

/// Non-negative per-sample estimate of KL(current || reference).
inline double kl_term(double logprob_current, double logprob_ref) {
  const double log_t = logprob_ref - logprob_current;
  // t - log t - 1 == expm1(log_t) - log_t; expm1 keeps precision near zero
  return std::max(0.0, std::expm1(log_t) - log_t);
}

struct GroupResponse {
  std::size_t template_id = 0;
  std::string raw_text;
  double logprob_current = 0.0;
  double logprob_old = 0.0;
  double logprob_ref = 0.0;
  RewardBreakdown reward;
};

struct ResponseGroup {
  std::string problem_id;
  std::vector<GroupResponse> responses;
  std::uint64_t old_snapshot_id = 0;  // old-policy snapshot the group was sampled from

  std::vector<double> rewards() const {
    std::vector<double> r;
    r.reserve(responses.size());
    for (const auto& resp : responses) r.push_back(resp.reward.total);
    return r;
  }
};

inline void check_group(const ResponseGroup& group, const GrpoConfig& cfg) {
  if (group.responses.size() != cfg.group_size) {
    throw ConfigError("group '" + group.problem_id + "' has " +
                      std::to_string(group.responses.size()) + " responses, expected " +
                      std::to_string(cfg.group_size));
  }
  for (std::size_t i = 0; i < group.responses.size(); ++i) {
    const auto& r = group.responses[i];
    if (!std::isfinite(r.logprob_current) || !std::isfinite(r.logprob_old) ||
        !std::isfinite(r.logprob_ref)) {
      throw NumericError("group '" + group.problem_id + "' response " + std::to_string(i) +
                         " has a non-finite log-probability");
    }
  }
}

struct ObjectiveParts {
  double objective = 0.0;
  double mean_clipped = 0.0;
  double mean_kl = 0.0;
  AdvantageGroup advantages;
};

inline ObjectiveParts grpo_objective_parts(const ResponseGroup& group, const GrpoConfig& cfg) {
  check_group(group, cfg);
  ObjectiveParts p;
  const auto rewards = group.rewards();
  p.advantages = group_advantages(rewards, cfg);
  const double g = static_cast<double>(cfg.group_size);
  for (std::size_t i = 0; i < group.responses.size(); ++i) {
    const auto& r = group.responses[i];
    p.mean_clipped += clipped_term(policy_ratio(r.logprob_current, r.logprob_old),
                                   p.advantages.advantages[i], cfg.clip_epsilon) / g;
    p.mean_kl += kl_term(r.logprob_current, r.logprob_ref) / g;
  }
  p.objective = p.mean_clipped - cfg.kl_beta * p.mean_kl;
  return p;
}

/// Value to be maximized.
inline double grpo_objective(const ResponseGroup& group, const GrpoConfig& cfg) {
  return grpo_objective_parts(group, cfg).objective;
}

/// dJ / d logprob_current_i for every response. The clip is handled
/// piecewise: when the clipped branch is the binding minimum, the response
/// contributes no surrogate gradient.
inline std::vector<double> grpo_logprob_coefficients(const ResponseGroup& group,
                                                     const GrpoConfig& cfg) {
  check_group(group, cfg);
  const auto adv = group_advantages(group.rewards(), cfg);
  const double g = static_cast<double>(cfg.group_size);
  std::vector<double> coeff(group.responses.size());
  for (std::size_t i = 0; i < group.responses.size(); ++i) {
    const auto& r = group.responses[i];
    const double ratio = policy_ratio(r.logprob_current, r.logprob_old);
    const double a = adv.advantages[i];
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    const double d_surrogate = (ratio * a <= clipped * a) ? ratio * a : 0.0;
    const double t = std::exp(r.logprob_ref - r.logprob_current);
    const double d_kl = 1.0 - t;
    coeff[i] = (d_surrogate - cfg.kl_beta * d_kl) / g;
    if (!std::isfinite(coeff[i])) {
      throw NumericError("non-finite gradient coefficient at response " + std::to_string(i));
    }
  }
  return coeff;
}

/// What grpo_gradient needs from a policy: the gradient of response i's
/// log-probability under the current parameters, a zero gradient, and a
/// finiteness check.
template <class H>
concept PolicyHandle = requires(const H& h, std::size_t i, typename H::gradient_type& g) {
  { h.zero_gradient() } -> std::convertible_to<typename H::gradient_type>;
  { h.logprob_grad(i) } -> std::convertible_to<typename H::gradient_type>;
  { h.is_finite(g) } -> std::convertible_to<bool>;
  g += 1.0 * h.logprob_grad(i);
};

/// Gradient of grpo_objective with respect to the policy parameters (ascent
/// direction). Throws NumericError naming the response whose contribution is
/// non-finite.
template <PolicyHandle H>
typename H::gradient_type grpo_gradient(const ResponseGroup& group, const H& policy,
                                        const GrpoConfig& cfg) {
  const auto coeff = grpo_logprob_coefficients(group, cfg);
  typename H::gradient_type grad = policy.zero_gradient();
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    if (coeff[i] == 0.0) continue;
    typename H::gradient_type gi = policy.logprob_grad(i);
    if (!policy.is_finite(gi)) {
      throw NumericError("non-finite log-probability gradient at response " + std::to_string(i));
    }
    grad += coeff[i] * gi;
  }
  if (!policy.is_finite(grad)) throw NumericError("non-finite accumulated GRPO gradient");
  return grad;
}

}  // namespace pathgrpo
