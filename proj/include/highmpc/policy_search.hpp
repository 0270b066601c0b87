// Copyright 2026 The highmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Episode-based policy search over MPC decision variables: reward-weighted
// (MC-EM) updates for constant-mean and contextual linear Gaussian policies.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "highmpc/parallel.hpp"
#include "highmpc/trajopt.hpp"

namespace highmpc {

class NoViableSamples : public DomainError {
 public:
  using DomainError::DomainError;
};

class SearchAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Policies

struct GaussianPolicy {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // diagonal of the covariance

  void validate() const {
    if (mean.size() != variance.size()) throw DomainError("GaussianPolicy: dimension mismatch");
    if (!(variance.array() > 0.0).all())
      throw DomainError("GaussianPolicy: variances must be positive");
  }

  Eigen::VectorXd sample(Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z(i) = mean(i) + std::sqrt(variance(i)) * normal(rng);
    return z;
  }
};

struct RffSpec {
  Eigen::MatrixXd projection;  // features x context_dim, entries ~ N(0, 1)
  Eigen::VectorXd phase;       // features, ~ U[-pi, pi)
  double bandwidth = 0.1;
  std::uint64_t seed = 0;

  int features() const { return static_cast<int>(projection.rows()); }
  int context_dim() const { return static_cast<int>(projection.cols()); }

  static RffSpec random(int context_dim, int features, double bandwidth, std::uint64_t seed) {
    if (context_dim < 1 || features < 1 || !(bandwidth > 0.0))
      throw DomainError("RffSpec: invalid dimensions or bandwidth");
    RffSpec spec;
    spec.bandwidth = bandwidth;
    spec.seed = seed;
    Rng rng = stream(seed, 0x5ff);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(-std::numbers::pi, std::numbers::pi);
    spec.projection.resize(features, context_dim);
    for (int i = 0; i < features; ++i)
      for (int j = 0; j < context_dim; ++j) spec.projection(i, j) = normal(rng);
    spec.phase.resize(features);
    for (int i = 0; i < features; ++i) spec.phase(i) = uniform(rng);
    return spec;
  }
};

/// phi_i(s) = sin(sum_j P_ij s_j / v + p_i)
inline Eigen::VectorXd rff_features(const Eigen::VectorXd& s, const RffSpec& spec) {
  if (s.size() != spec.context_dim()) throw DomainError("rff_features: context dimension");
  return ((spec.projection * s) / spec.bandwidth + spec.phase).array().sin().matrix();
}

struct LinearGaussianPolicy {
  Eigen::MatrixXd weights;     // features x z_dim; mean = weights^T phi(s)
  Eigen::MatrixXd covariance;  // z_dim x z_dim
  RffSpec rff;

  void validate() const {
    if (weights.rows() != rff.features() || covariance.rows() != weights.cols() ||
        covariance.cols() != weights.cols())
      throw DomainError("LinearGaussianPolicy: dimension mismatch");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10)
      throw DomainError("LinearGaussianPolicy: covariance not symmetric");
    if (Eigen::LLT<Eigen::MatrixXd>(covariance).info() != Eigen::Success)
      throw DomainError("LinearGaussianPolicy: covariance not positive definite");
  }

  Eigen::VectorXd mean(const Eigen::VectorXd& context) const {
    return weights.transpose() * rff_features(context, rff);
  }

  Eigen::VectorXd sample(const Eigen::VectorXd& context, Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd e(weights.cols());
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(covariance).matrixL();
    return mean(context) + L * e;
  }
};

struct EpisodeBatch {
  std::vector<Eigen::VectorXd> samples;
  std::vector<Eigen::VectorXd> contexts;  // empty for context-free policies
  std::vector<double> rewards;
  Eigen::VectorXd weights;

  std::size_t size() const { return samples.size(); }
};

// ---------------------------------------------------------------------------
// Reward

struct TraversalReward {
  double reward = 0.0;
  std::vector<double> errors;  // per-gate distance at the traversal node, m
  bool out_of_range = false;
};

/// R = -sum_i |p^q_{h_i} - p^g_{h_i}| - lambda * sum_i t_i, h_i = floor(t_i / dt).
inline TraversalReward traversal_reward(const Trajectory& traj, const DecisionVars& z,
                                        const std::vector<std::vector<GateState>>& gate_trajs,
                                        double dt, double lambda) {
  if (gate_trajs.size() != z.size())
    throw DomainError("traversal_reward: one gate trajectory per decision entry required");
  TraversalReward r;
  double time_sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const int h = traversal_node(z[i].time, dt);
    time_sum += z[i].time;
    if (h < 0 || h >= static_cast<int>(traj.states.size()) ||
        h >= static_cast<int>(gate_trajs[i].size())) {
      r.out_of_range = true;
      r.errors.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    r.errors.push_back((traj.states[h].head<3>() - gate_trajs[i][h].p).norm());
  }
  if (r.out_of_range) {
    r.reward = -std::numeric_limits<double>::infinity();
    return r;
  }
  double dist = 0.0;
  for (double e : r.errors) dist += e;
  r.reward = -dist - lambda * time_sum;
  return r;
}

/// d_i = exp(beta * (R_i - max_j R_j)); non-finite rewards map to zero weight.
inline Eigen::VectorXd exp_transform(const std::vector<double>& rewards, double beta) {
  if (!(beta > 0.0)) throw DomainError("exp_transform: beta must be positive");
  double best = -std::numeric_limits<double>::infinity();
  for (double r : rewards)
    if (std::isfinite(r)) best = std::max(best, r);
  if (!std::isfinite(best)) throw NoViableSamples("exp_transform: no viable samples");
  Eigen::VectorXd d(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i)
    d(i) = std::isfinite(rewards[i]) ? std::exp(beta * (rewards[i] - best)) : 0.0;
  return d;
}

// ---------------------------------------------------------------------------
// Weighted maximum-likelihood updates

struct UpdateInfo {
  bool degenerate = false;
  double effective_samples = 0.0;
  double condition_number = 0.0;
};

namespace detail {

// Y = ((sum d)^2 - sum d^2) / sum d
inline double unbiased_denominator(const Eigen::VectorXd& d) {
  const double s = d.sum();
  return (s * s - d.squaredNorm()) / s;
}

inline void check_weights(const Eigen::VectorXd& d, std::size_t n) {
  if (static_cast<std::size_t>(d.size()) != n) throw DomainError("update: weight count mismatch");
  if ((d.array() < 0.0).any() || !d.allFinite()) throw DomainError("update: invalid weights");
  if (!(d.sum() > 0.0)) throw NoViableSamples("update: total weight is zero");
}

}  // namespace detail

inline GaussianPolicy update_gaussian(const std::vector<Eigen::VectorXd>& samples,
                                      const Eigen::VectorXd& d, double variance_floor = 1e-6,
                                      UpdateInfo* info = nullptr) {
  if (samples.size() < 2) throw DomainError("update_gaussian: need at least two samples");
  detail::check_weights(d, samples.size());
  const Eigen::Index dim = samples.front().size();
  const double total = d.sum();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < samples.size(); ++i) mean += d(i) * samples[i];
  mean /= total;

  const double Y = detail::unbiased_denominator(d);
  const bool degenerate = !(Y > 1e-12 * total);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  if (!degenerate) {
    for (std::size_t i = 0; i < samples.size(); ++i)
      var += d(i) * (samples[i] - mean).array().square().matrix();
    var /= Y;
  }
  var.array() += variance_floor;
  if (info != nullptr) {
    info->degenerate = degenerate;
    info->effective_samples = total * total / d.squaredNorm();
  }
  return GaussianPolicy{mean, var};
}

inline GaussianPolicy update_gaussian(const EpisodeBatch& batch, double variance_floor = 1e-6,
                                      UpdateInfo* info = nullptr) {
  return update_gaussian(batch.samples, batch.weights, variance_floor, info);
}

/// W = (Phi^T D Phi + ridge I)^-1 Phi^T D Z and the reward-weighted residual
/// covariance with the unbiased denominator.
inline LinearGaussianPolicy update_linear_gaussian(const std::vector<Eigen::VectorXd>& samples,
                                                   const std::vector<Eigen::VectorXd>& contexts,
                                                   const Eigen::VectorXd& d, const RffSpec& rff,
                                                   double ridge = 1e-5,
                                                   double variance_floor = 1e-6,
                                                   UpdateInfo* info = nullptr) {
  if (samples.size() < 2) throw DomainError("update_linear_gaussian: need at least two samples");
  if (contexts.size() != samples.size())
    throw DomainError("update_linear_gaussian: context count mismatch");
  if (!(ridge > 0.0)) throw DomainError("update_linear_gaussian: ridge must be positive");
  detail::check_weights(d, samples.size());
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index zdim = samples.front().size();
  const int m = rff.features();

  Eigen::MatrixXd Phi(n, m);
  Eigen::MatrixXd Z(n, zdim);
  for (Eigen::Index i = 0; i < n; ++i) {
    Phi.row(i) = rff_features(contexts[i], rff).transpose();
    Z.row(i) = samples[i].transpose();
  }
  const Eigen::MatrixXd PhiTD = Phi.transpose() * d.asDiagonal();
  Eigen::MatrixXd normal = PhiTD * Phi;
  normal.diagonal().array() += ridge;
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(normal).singularValues();
  const double cond = sv(0) / sv(sv.size() - 1);
  if (!std::isfinite(cond) || cond > 1e14) {
    std::ostringstream msg;
    msg << "update_linear_gaussian: normal matrix ill-conditioned (cond ~ " << cond << ")";
    throw DomainError(msg.str());
  }
  LinearGaussianPolicy out;
  out.rff = rff;
  out.weights = normal.ldlt().solve(PhiTD * Z);

  const double total = d.sum();
  const double Y = detail::unbiased_denominator(d);
  const bool degenerate = !(Y > 1e-12 * total);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(zdim, zdim);
  if (!degenerate) {
    const Eigen::MatrixXd R = Z - Phi * out.weights;
    cov = R.transpose() * d.asDiagonal() * R / Y;
  }
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += variance_floor;
  out.covariance = cov;
  if (info != nullptr) {
    info->degenerate = degenerate;
    info->effective_samples = total * total / d.squaredNorm();
    info->condition_number = cond;
  }
  return out;
}

inline LinearGaussianPolicy update_linear_gaussian(const EpisodeBatch& batch, const RffSpec& rff,
                                                   double ridge = 1e-5,
                                                   double variance_floor = 1e-6,
                                                   UpdateInfo* info = nullptr) {
  return update_linear_gaussian(batch.samples, batch.contexts, batch.weights, rff, ridge,
                                variance_floor, info);
}

// ---------------------------------------------------------------------------
// Training loops

/// Maps a raw sample into the valid region of [t_1, g_1, ..., t_n, g_n]:
/// times sorted, kept in [min_time, max_time] and strictly increasing;
/// weights >= 0.
inline void repair_decision_vector(Eigen::VectorXd& z, double min_time,
                                   double max_time = std::numeric_limits<double>::infinity()) {
  constexpr double gap = 1e-6;
  const Eigen::Index n = z.size() / 2;
  std::vector<double> times(n);
  for (Eigen::Index i = 0; i < n; ++i) times[i] = z(2 * i);
  std::sort(times.begin(), times.end());
  for (Eigen::Index i = 0; i < n; ++i) {
    times[i] = std::clamp(times[i], min_time, max_time);
    if (i > 0 && times[i] <= times[i - 1]) times[i] = times[i - 1] + gap;
  }
  // pull back anything pushed past the cap
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const double cap = i + 1 < n ? times[i + 1] - gap : max_time;
    times[i] = std::min(times[i], cap);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    z(2 * i) = times[i];
    z(2 * i + 1) = std::max(z(2 * i + 1), 0.0);
  }
}

struct SampleOutcome {
  double reward = -std::numeric_limits<double>::infinity();
  bool ok = true;  // false when the MPC solve itself failed
};

// Called concurrently; `worker` identifies the calling thread's slot.
using SampleEvaluator =
    std::function<SampleOutcome(int worker, const Eigen::VectorXd& z, const Eigen::VectorXd& context)>;
using ContextSampler = std::function<Eigen::VectorXd(Rng&)>;

struct SearchOptions {
  double beta = 10.0;
  int samples = 30;
  int max_iterations = 30;
  double tolerance = 1e-3;  // on the change of mean reward
  int patience = 5;         // consecutive iterations below tolerance
  bool stop_on_convergence = true;
  double variance_floor = 1e-6;
  double max_failure_fraction = 0.5;
  double ridge = 1e-5;
  std::uint64_t seed = 0;
  int workers = 1;
  std::function<void(Eigen::VectorXd&)> repair;
};

struct CurvePoint {
  int iteration = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double max_reward = 0.0;
  int failures = 0;
};

template <typename Policy>
struct SearchResult {
  Policy policy;
  std::vector<CurvePoint> curve;
  bool converged = false;
  int converged_iteration = -1;  // first iteration of the final below-tolerance streak
};

using GaussianSearchResult = SearchResult<GaussianPolicy>;
using LinearSearchResult = SearchResult<LinearGaussianPolicy>;

namespace detail {

struct BatchStats {
  CurvePoint point;
  std::vector<double> rewards;
};

inline BatchStats evaluate_batch(const SampleEvaluator& eval, const std::vector<Eigen::VectorXd>& z,
                                 const std::vector<Eigen::VectorXd>& contexts,
                                 const SearchOptions& opt, int iteration) {
  const std::size_t n = z.size();
  std::vector<SampleOutcome> out(n);
  parallel_for(n, opt.workers, [&](int worker, std::size_t i) { out[i] = eval(worker, z[i], contexts[i]); });
  BatchStats s;
  s.point.iteration = iteration;
  s.rewards.resize(n);
  double sum = 0.0, sq = 0.0, best = -std::numeric_limits<double>::infinity();
  int finite = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out[i].ok) ++s.point.failures;
    s.rewards[i] = out[i].ok ? out[i].reward : -std::numeric_limits<double>::infinity();
    if (std::isfinite(s.rewards[i])) {
      sum += s.rewards[i];
      sq += s.rewards[i] * s.rewards[i];
      best = std::max(best, s.rewards[i]);
      ++finite;
    }
  }
  if (s.point.failures > opt.max_failure_fraction * static_cast<double>(n)) {
    std::ostringstream msg;
    msg << "policy search iteration " << iteration << ": " << s.point.failures << " of " << n
        << " MPC solves failed";
    throw SearchAborted(msg.str());
  }
  const double mean = finite > 0 ? sum / finite : -std::numeric_limits<double>::infinity();
  s.point.mean_reward = mean;
  s.point.std_reward = finite > 0 ? std::sqrt(std::max(0.0, sq / finite - mean * mean)) : 0.0;
  s.point.max_reward = best;
  return s;
}

template <typename Result>
bool track_convergence(Result& result, const SearchOptions& opt, int& streak) {
  const auto& c = result.curve;
  if (c.size() >= 2 &&
      std::abs(c.back().mean_reward - c[c.size() - 2].mean_reward) < opt.tolerance) {
    ++streak;
  } else {
    streak = 0;
  }
  if (streak >= opt.patience) {
    result.converged = true;
    result.converged_iteration = c.back().iteration - streak + 1;
    return opt.stop_on_convergence;
  }
  result.converged = false;
  result.converged_iteration = -1;
  return false;
}

}  // namespace detail

/// Reward-weighted search for a context-free Gaussian over z.
inline GaussianSearchResult train_gaussian(const SampleEvaluator& eval, GaussianPolicy policy,
                                           const SearchOptions& opt) {
  policy.validate();
  if (opt.samples < 2) throw DomainError("train_gaussian: need at least two samples");
  GaussianSearchResult result;
  int streak = 0;
  const Eigen::VectorXd no_context;
  for (int it = 0; it < opt.max_iterations; ++it) {
    std::vector<Eigen::VectorXd> z(opt.samples);
    for (int i = 0; i < opt.samples; ++i) {
      Rng rng = stream(opt.seed, 1, it, i);
      z[i] = policy.sample(rng);
      if (opt.repair) opt.repair(z[i]);
    }
    const std::vector<Eigen::VectorXd> contexts(opt.samples, no_context);
    auto stats = detail::evaluate_batch(eval, z, contexts, opt, it);
    result.curve.push_back(stats.point);
    const Eigen::VectorXd d = exp_transform(stats.rewards, opt.beta);
    policy = update_gaussian(z, d, opt.variance_floor);
    if (detail::track_convergence(result, opt, streak)) break;
  }
  result.policy = policy;
  return result;
}

/// Contextual search: contexts drawn from rho each iteration, mean W^T phi(s).
inline LinearSearchResult train_linear_gaussian(const SampleEvaluator& eval,
                                                const ContextSampler& rho,
                                                LinearGaussianPolicy policy,
                                                const SearchOptions& opt) {
  policy.validate();
  if (opt.samples < 2) throw DomainError("train_linear_gaussian: need at least two samples");
  LinearSearchResult result;
  int streak = 0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    std::vector<Eigen::VectorXd> z(opt.samples), s(opt.samples);
    for (int i = 0; i < opt.samples; ++i) {
      Rng ctx_rng = stream(opt.seed, 2, it, i);
      s[i] = rho(ctx_rng);
      Rng rng = stream(opt.seed, 3, it, i);
      z[i] = policy.sample(s[i], rng);
      if (opt.repair) opt.repair(z[i]);
    }
    auto stats = detail::evaluate_batch(eval, z, s, opt, it);
    result.curve.push_back(stats.point);
    const Eigen::VectorXd d = exp_transform(stats.rewards, opt.beta);
    policy = update_linear_gaussian(z, s, d, policy.rff, opt.ridge, opt.variance_floor);
    if (detail::track_convergence(result, opt, streak)) break;
  }
  result.policy = policy;
  return result;
}

}  // namespace highmpc
