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

// Oracle comparisons shared by the unit tests and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "highmpc/neural_policy.hpp"
#include "highmpc/policy_search.hpp"
#include "highmpc/trajopt.hpp"
#include "oracle_mle.hpp"

namespace highmpc::checks {

struct WeightedBatch {
  std::vector<Eigen::VectorXd> z;
  std::vector<Eigen::VectorXd> s;
  Eigen::VectorXd d;
};

inline WeightedBatch random_batch(std::uint64_t trial, int n, int zdim, int sdim, double beta) {
  Rng rng = stream(99, trial);
  std::normal_distribution<double> normal(0.0, 1.0);
  WeightedBatch b;
  std::vector<double> rewards;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(zdim), s(sdim);
    for (int k = 0; k < zdim; ++k) z(k) = 1.0 + 0.5 * k + 0.7 * normal(rng);
    for (int k = 0; k < sdim; ++k) s(k) = normal(rng);
    b.z.push_back(z);
    b.s.push_back(s);
    rewards.push_back(normal(rng));
  }
  b.d = exp_transform(rewards, beta);
  return b;
}

inline double close(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

struct OracleGap {
  double mean = 0.0;        // mean or W, worst relative gap
  double covariance = 0.0;  // after rescaling by Y / sum d
  int batches = 0;
};

/// Closed-form M-step vs numerical maximizer. The closed form divides by the
/// unbiased denominator Y; the maximum-likelihood variance divides by sum(d).
inline OracleGap gaussian_vs_oracle(int batches = 100) {
  OracleGap gap;
  for (int trial = 0; trial < batches; ++trial) {
    const double beta = 0.5 + 0.05 * trial;
    const auto b = random_batch(trial, 30, 4, 1, beta);
    const GaussianPolicy cf = update_gaussian(b.z, b.d, 0.0);

    const int k = 4;
    auto ll = [&](const Eigen::VectorXd& th) {
      double v = 0.0;
      for (std::size_t i = 0; i < b.z.size(); ++i)
        for (int j = 0; j < k; ++j) {
          const double s2 = std::exp(th(k + j));
          const double r = b.z[i](j) - th(j);
          v += b.d(i) * (-0.5 * std::log(2 * M_PI * s2) - 0.5 * r * r / s2);
        }
      return v;
    };
    const Eigen::VectorXd th = oracle::maximize(ll, Eigen::VectorXd::Zero(2 * k));

    const double sum = b.d.sum();
    const double Y = (sum * sum - b.d.squaredNorm()) / sum;
    for (int j = 0; j < k; ++j) {
      gap.mean = std::max(gap.mean, close(cf.mean(j), th(j)));
      gap.covariance = std::max(gap.covariance, close(cf.variance(j) * Y / sum, std::exp(th(k + j))));
    }
    ++gap.batches;
  }
  return gap;
}

inline OracleGap linear_gaussian_vs_oracle(int batches = 100) {
  const int m = 5, k = 2, sdim = 3;
  const RffSpec rff = RffSpec::random(sdim, m, 1.5, 11);
  OracleGap gap;
  for (int trial = 0; trial < batches; ++trial) {
    const double beta = 0.3 + 0.02 * trial;
    const auto b = random_batch(1000 + trial, 40, k, sdim, beta);
    const LinearGaussianPolicy cf = update_linear_gaussian(b.z, b.s, b.d, rff, 1e-12, 0.0);

    std::vector<Eigen::VectorXd> phi;
    for (const auto& s : b.s) phi.push_back(rff_features(s, rff));
    // theta = [vec(W) (m*k), L00, L10, L11] with log-diagonal Cholesky factor
    auto unpack_cov = [&](const Eigen::VectorXd& th) {
      Eigen::Matrix2d L;
      L << std::exp(th(m * k)), 0.0, th(m * k + 1), std::exp(th(m * k + 2));
      return L;
    };
    auto ll = [&](const Eigen::VectorXd& th) {
      const Eigen::Map<const Eigen::MatrixXd> W(th.data(), m, k);
      const Eigen::Matrix2d L = unpack_cov(th);
      const Eigen::Matrix2d S = L * L.transpose();
      const Eigen::Matrix2d Si = S.inverse();
      const double logdet = std::log(S.determinant());
      double v = 0.0;
      for (std::size_t i = 0; i < b.z.size(); ++i) {
        const Eigen::Vector2d r = b.z[i] - W.transpose() * phi[i];
        v += b.d(i) * (-0.5 * logdet - 0.5 * r.dot(Si * r) - std::log(2 * M_PI));
      }
      return v;
    };
    const Eigen::VectorXd th = oracle::maximize(ll, Eigen::VectorXd::Zero(m * k + 3));
    const Eigen::Map<const Eigen::MatrixXd> W(th.data(), m, k);
    const Eigen::Matrix2d L = unpack_cov(th);
    const Eigen::Matrix2d S = L * L.transpose();

    const double sum = b.d.sum();
    const double Y = (sum * sum - b.d.squaredNorm()) / sum;
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < k; ++c) gap.mean = std::max(gap.mean, close(cf.weights(r, c), W(r, c)));
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c)
        gap.covariance = std::max(gap.covariance, close(cf.covariance(r, c) * Y / sum, S(r, c)));
    ++gap.batches;
  }
  return gap;
}

struct GradientGap {
  double worst = 0.0;
  int probes = 0;
};

inline std::vector<std::vector<GateState>> static_gates(const std::vector<Vec3>& centers, int nodes) {
  std::vector<std::vector<GateState>> out;
  for (const auto& c : centers) {
    GateState g;
    g.p = c;
    out.emplace_back(static_cast<std::size_t>(nodes) + 1, g);
  }
  return out;
}

/// Stage and terminal gradients, ||g - fd||_inf / ||g||_inf per probe.
inline GradientGap cost_gradient_vs_fd(int probes = 120) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> stage(0, 59);
  const auto gates = static_gates({Vec3(2.0, 0.3, 2.1), Vec3(4.0, -0.4, 1.8)}, 60);
  const auto z = DecisionVars({{0.8, 1.0}, {1.9, 0.6}});
  const auto cost = build_cost(z, gates, QuadState::hover_at(Vec3(6, 0, 2)), CostWeights::defaults(), 60, 0.05);
  GradientGap gap;
  const double eps = 1e-5;
  for (int probe = 0; probe < probes; ++probe) {
    StateVector x;
    InputVector u;
    for (int i = 0; i < kStateDim; ++i) x(i) = 2.0 * n(rng);
    for (int i = 0; i < kInputDim; ++i) u(i) = 5.0 * n(rng);
    const int h = stage(rng);
    StateVector gx;
    InputVector gu;
    cost.stage_gradient(h, x, u, gx, gu);
    Eigen::Matrix<double, kStateDim + kInputDim, 1> g, fd;
    g << gx, gu;
    for (int i = 0; i < kStateDim + kInputDim; ++i) {
      StateVector xp = x, xm = x;
      InputVector up = u, um = u;
      if (i < kStateDim) {
        xp(i) += eps;
        xm(i) -= eps;
      } else {
        up(i - kStateDim) += eps;
        um(i - kStateDim) -= eps;
      }
      fd(i) = (cost.stage(h, xp, up) - cost.stage(h, xm, um)) / (2 * eps);
    }
    gap.worst = std::max(gap.worst, (g - fd).lpNorm<Eigen::Infinity>() / g.lpNorm<Eigen::Infinity>());
    StateVector xt;
    for (int i = 0; i < kStateDim; ++i) xt(i) = n(rng);
    StateVector gt = cost.terminal_gradient(xt), fdt;
    for (int i = 0; i < kStateDim; ++i) {
      StateVector xp = xt, xm = xt;
      xp(i) += eps;
      xm(i) -= eps;
      fdt(i) = (cost.terminal(xp) - cost.terminal(xm)) / (2 * eps);
    }
    gap.worst = std::max(gap.worst, (gt - fdt).lpNorm<Eigen::Infinity>() / gt.lpNorm<Eigen::Infinity>());
    ++gap.probes;
  }
  return gap;
}

/// Squared-error loss gradient over all parameters, ||g - fd|| / ||g|| per probe.
inline GradientGap mlp_gradient_vs_fd(int probes = 60) {
  GradientGap gap;
  for (int probe = 0; probe < probes; ++probe) {
    Mlp m = Mlp::random(100 + probe);
    Rng rng = stream(7, probe);
    std::normal_distribution<double> n(0.0, 0.1), wide(0.0, 1.0);
    for (Eigen::Index i = 0; i < m.b1.size(); ++i) m.b1(i) = n(rng);
    for (Eigen::Index i = 0; i < m.b2.size(); ++i) m.b2(i) = n(rng);
    Observation x;
    for (int i = 0; i < kObservationDim; ++i) x(i) = wide(rng);
    const double target = 1.0 + std::abs(n(rng));
    Eigen::VectorXd g = Eigen::VectorXd::Zero(Mlp::parameter_count());
    m.accumulate_gradient(x, target, g);
    const Eigen::VectorXd theta = m.parameters();
    auto loss = [&](const Eigen::VectorXd& th) {
      Mlp q = m;
      q.set_parameters(th);
      const double e = softplus(q.raw(x)) - target;
      return e * e;
    };
    Eigen::VectorXd fd(theta.size());
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd a = theta, b = theta;
      a(i) += eps;
      b(i) -= eps;
      fd(i) = (loss(a) - loss(b)) / (2 * eps);
    }
    gap.worst = std::max(gap.worst, (g - fd).norm() / g.norm());
    ++gap.probes;
  }
  return gap;
}

}  // namespace highmpc::checks
