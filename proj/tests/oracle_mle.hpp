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

// Test-side numerical maximizers for the weighted log-likelihood. Only the
// objective is coded; derivatives come from finite differences and the
// optimum from a damped Newton iteration.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace highmpc::oracle {

using Objective = std::function<double(const Eigen::VectorXd&)>;

inline Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x, double h = 1e-4) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    H.col(i) = (fd_gradient(f, a) - fd_gradient(f, b)) / (2 * h);
  }
  return 0.5 * (H + H.transpose());
}

/// Levenberg-damped Newton ascent. Stops once the FD gradient is below
/// grad_tol or no damped step improves f.
inline Eigen::VectorXd maximize(const Objective& f, Eigen::VectorXd x, double grad_tol = 1e-10,
                                int max_iter = 200) {
  double mu = 1e-3;
  double fx = f(x);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd g = fd_gradient(f, x);
    if (g.lpNorm<Eigen::Infinity>() < grad_tol) break;
    const Eigen::MatrixXd H = fd_hessian(f, x);
    bool moved = false;
    for (int k = 0; k < 40 && !moved; ++k) {
      Eigen::MatrixXd M = -H;
      M.diagonal().array() += mu;
      const Eigen::VectorXd step = M.ldlt().solve(g);
      const Eigen::VectorXd xn = x + step;
      const double fn = f(xn);
      if (std::isfinite(fn) && fn >= fx) {
        moved = fn > fx || step.norm() < 1e-14;
        x = xn;
        fx = fn;
        mu = std::max(mu * 0.1, 1e-12);
        if (!moved) return x;
      } else {
        mu *= 10.0;
      }
    }
    if (!moved) break;
  }
  return x;
}

}  // namespace highmpc::oracle
