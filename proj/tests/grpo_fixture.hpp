#pragma once

// Randomized GRPO groups over the toy policy, used by the gradient checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "pathgrpo/grpo.hpp"
#include "pathgrpo/synthetic.hpp"
#include "pathgrpo/toy_policy.hpp"

namespace testsupport {

struct GradFixture {
  pathgrpo::Problem problem;
  pathgrpo::PolicyTriple policy;
  pathgrpo::ResponseGroup group;
  pathgrpo::GrpoConfig cfg;
};

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, double scale,
                                     std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Refreshes logprob_current of every response from `theta`.
inline void recompute_current(GradFixture& f, const pathgrpo::PolicyParams& theta) {
  const auto lp = pathgrpo::template_logprobs(theta, f.problem);
  for (auto& r : f.group.responses) r.logprob_current = lp[static_cast<Eigen::Index>(r.template_id)];
}

inline GradFixture make_grad_fixture(std::uint64_t seed, double beta, std::size_t group_size,
                                     std::size_t feature_dim = 8) {
  using namespace pathgrpo;
  std::mt19937_64 rng(seed);
  GradFixture f;
  f.problem = make_synthetic_problems(1, seed)[0];
  f.cfg.group_size = group_size;
  f.cfg.kl_beta = beta;
  const auto dim = static_cast<Eigen::Index>(feature_dim);
  const auto cols = static_cast<Eigen::Index>(template_count_for(kDefaultLetterSlots));
  f.policy.current.theta = random_matrix(dim, cols, 0.5, rng);
  f.policy.old.theta = f.policy.current.theta + random_matrix(dim, cols, 0.15, rng);
  f.policy.reference.theta = f.policy.current.theta + random_matrix(dim, cols, 0.15, rng);

  const auto sampled = sample_group(f.policy.old, f.problem, group_size, rng());
  const auto lp_ref = template_logprobs(f.policy.reference, f.problem);
  std::uniform_real_distribution<double> reward(0.0, 3.0);
  f.group.problem_id = f.problem.id;
  for (const auto& s : sampled) {
    GroupResponse r;
    r.template_id = s.template_id;
    r.logprob_old = s.logprob;
    r.logprob_ref = lp_ref[static_cast<Eigen::Index>(s.template_id)];
    r.reward.total = reward(rng);
    f.group.responses.push_back(r);
  }
  recompute_current(f, f.policy.current);
  return f;
}

/// Smallest distance of any ratio to a clip boundary.
inline double kink_distance(const GradFixture& f) {
  double d = 1e300;
  for (const auto& r : f.group.responses) {
    const double ratio = pathgrpo::policy_ratio(r.logprob_current, r.logprob_old);
    d = std::min({d, std::abs(ratio - (1 - f.cfg.clip_epsilon)),
                  std::abs(ratio - (1 + f.cfg.clip_epsilon))});
  }
  return d;
}

inline bool clipping_active(const GradFixture& f) {
  for (const auto& r : f.group.responses) {
    const double ratio = pathgrpo::policy_ratio(r.logprob_current, r.logprob_old);
    if (ratio < 1 - f.cfg.clip_epsilon || ratio > 1 + f.cfg.clip_epsilon) return true;
  }
  return false;
}

inline Eigen::MatrixXd analytic_gradient(const GradFixture& f) {
  pathgrpo::ToyPolicyHandle h(f.policy.current, f.problem, f.group);
  return pathgrpo::grpo_gradient(f.group, h, f.cfg);
}

/// Central finite differences of the objective over every parameter.
inline Eigen::MatrixXd numeric_gradient(GradFixture f, double step = 1e-6) {
  const pathgrpo::PolicyParams base = f.policy.current;
  Eigen::MatrixXd g(base.theta.rows(), base.theta.cols());
  pathgrpo::PolicyParams probe = base;
  for (Eigen::Index i = 0; i < base.theta.size(); ++i) {
    probe.theta.data()[i] = base.theta.data()[i] + step;
    recompute_current(f, probe);
    const double up = pathgrpo::grpo_objective(f.group, f.cfg);
    probe.theta.data()[i] = base.theta.data()[i] - step;
    recompute_current(f, probe);
    const double down = pathgrpo::grpo_objective(f.group, f.cfg);
    probe.theta.data()[i] = base.theta.data()[i];
    g.data()[i] = (up - down) / (2 * step);
  }
  return g;
}

inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-8);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace testsupport
