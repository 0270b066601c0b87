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

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "highmpc/dynamics.hpp"

namespace highmpc {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// High-level decision variables z = [t_1, gamma_1, ..., t_n, gamma_n]

class DecisionVars {
 public:
  struct Entry {
    double time = 0.0;    // traversal time, s
    double weight = 1.0;  // gate-follow weight
  };

  DecisionVars() = default;

  explicit DecisionVars(std::vector<Entry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (!std::isfinite(e.time) || !std::isfinite(e.weight))
        throw DomainError("DecisionVars: non-finite entry");
      if (e.time <= 0.0) throw DomainError("DecisionVars: traversal times must be positive");
      if (e.weight < 0.0) throw DomainError("DecisionVars: follow weights must be >= 0");
      if (i > 0 && !(entries_[i - 1].time < e.time))
        throw DomainError("DecisionVars: traversal times must be strictly increasing");
    }
  }

  static DecisionVars from_vector(const Eigen::VectorXd& z) {
    if (z.size() % 2 != 0) throw DomainError("DecisionVars: vector length must be even");
    std::vector<Entry> entries;
    for (Eigen::Index i = 0; i < z.size(); i += 2) entries.push_back({z(i), z(i + 1)});
    return DecisionVars(std::move(entries));
  }

  static DecisionVars single(double time, double weight = 1.0) {
    return DecisionVars({{time, weight}});
  }

  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd z(2 * entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      z(2 * i) = entries_[i].time;
      z(2 * i + 1) = entries_[i].weight;
    }
    return z;
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// Node index h_i = floor(t_i / dt). The small offset absorbs representation
// error so that e.g. 1.0 / 0.05 lands on node 20.
inline int traversal_node(double time, double dt) {
  return static_cast<int>(std::floor(time / dt + 1e-9));
}

// ---------------------------------------------------------------------------
// Weights and bounds

struct CostWeights {
  StateVector pass = StateVector::Zero();
  StateVector follow = StateVector::Zero();
  StateVector goal = StateVector::Zero();
  InputVector input = InputVector::Zero();
  double alpha = 10.0;
  InputVector input_ref = InputVector(kGravity, 0.0, 0.0, 0.0);

  static CostWeights defaults(double g = kGravity) {
    CostWeights w;
    w.pass << 100, 100, 100, 0, 0, 0, 0, 10, 10, 10;
    w.follow = w.pass;
    w.goal << 100, 100, 100, 0, 0, 0, 0, 10, 10, 10;
    w.input << 0.1, 0.1, 0.1, 0.1;
    w.alpha = 10.0;
    w.input_ref << g, 0.0, 0.0, 0.0;
    return w;
  }

  void validate() const {
    if ((pass.array() < 0).any() || (follow.array() < 0).any() || (goal.array() < 0).any() ||
        (input.array() < 0).any())
      throw DomainError("CostWeights: diagonal entries must be >= 0");
    if (!(alpha > 0.0)) throw DomainError("CostWeights: alpha must be positive");
  }
};

struct InputBounds {
  InputVector lower = InputVector(2.0, -3.0, -3.0, -3.0);
  InputVector upper = InputVector(20.0, 3.0, 3.0, 3.0);

  void validate() const {
    if (!(lower.array() <= upper.array()).all())
      throw DomainError("InputBounds: empty box");
  }
  InputVector clamp(const InputVector& u) const { return u.cwiseMax(lower).cwiseMin(upper); }
  bool contains(const InputVector& u) const {
    return (u.array() >= lower.array()).all() && (u.array() <= upper.array()).all();
  }
};

// ---------------------------------------------------------------------------
// Per-stage gate-pass flags and gate-follow weights

struct StageSchedule {
  int horizon = 0;
  Eigen::MatrixXi pass;    // horizon x gates, p_h
  Eigen::MatrixXd follow;  // horizon x gates, w_h (before the (1 - p_h) factor)
  std::vector<int> pass_node;
  std::vector<bool> beyond_horizon;

  double follow_factor(int h, int gate) const {
    return follow(h, gate) * (1.0 - pass(h, gate));
  }
  bool any_beyond_horizon() const {
    return std::any_of(beyond_horizon.begin(), beyond_horizon.end(), [](bool b) { return b; });
  }
};

inline StageSchedule stage_schedule(const DecisionVars& z, int horizon, double dt,
                                    double alpha) {
  if (horizon < 1) throw DomainError("stage_schedule: horizon must be >= 1");
  if (!(dt > 0.0)) throw DomainError("stage_schedule: dt must be positive");
  const int n = static_cast<int>(z.size());
  StageSchedule s;
  s.horizon = horizon;
  s.pass = Eigen::MatrixXi::Zero(horizon, n);
  s.follow = Eigen::MatrixXd::Zero(horizon, n);
  for (int i = 0; i < n; ++i) {
    const double t = z[i].time;
    const int node = traversal_node(t, dt);
    s.pass_node.push_back(node);
    s.beyond_horizon.push_back(node > horizon - 1);
    if (node <= horizon - 1) s.pass(node, i) = 1;
    for (int h = 0; h < horizon; ++h) {
      const double gap = h * dt - t;
      s.follow(h, i) = std::exp(-alpha * gap * gap) * z[i].weight;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Stage-wise quadratic cost

enum class TermKind { GatePass, GateFollow, Tracking, Terminal };

struct StateTerm {
  TermKind kind = TermKind::Tracking;
  int gate = -1;
  StateVector weight = StateVector::Zero();  // diagonal
  StateVector target = StateVector::Zero();

  double value(const StateVector& x) const {
    return (weight.array() * (x - target).array().square()).sum();
  }
};

struct StageTerms {
  std::vector<StateTerm> state_terms;
  InputVector input_weight = InputVector::Zero();
  InputVector input_ref = InputVector::Zero();
};

struct CostBreakdown {
  double gate_pass = 0.0;
  double gate_follow = 0.0;
  double tracking = 0.0;
  double input = 0.0;
  double terminal = 0.0;
  double total() const { return gate_pass + gate_follow + tracking + input + terminal; }
};

/// Sum of diagonal quadratics over stages 0..H-1 in (x_h, u_h) plus a terminal
/// quadratic in x_H. Immutable after construction.
class TrajectoryCost {
 public:
  TrajectoryCost(std::vector<StageTerms> stages, StateTerm terminal)
      : stages_(std::move(stages)), terminal_(std::move(terminal)) {
    terminal_.kind = TermKind::Terminal;
    const std::size_t H = stages_.size();
    if (H == 0) throw DomainError("TrajectoryCost: need at least one stage");
    w_.resize(H);
    wr_.resize(H);
    c_.resize(H);
    for (std::size_t h = 0; h < H; ++h) {
      w_[h].setZero();
      wr_[h].setZero();
      c_[h] = 0.0;
      for (const auto& t : stages_[h].state_terms) {
        if (!detail::all_finite(t.weight) || !detail::all_finite(t.target))
          throw DomainError("TrajectoryCost: non-finite term");
        w_[h] += t.weight;
        wr_[h] += t.weight.cwiseProduct(t.target);
        c_[h] += (t.weight.array() * t.target.array().square()).sum();
      }
    }
  }

  int horizon() const { return static_cast<int>(stages_.size()); }
  const StageTerms& stage_terms(int h) const { return stages_[h]; }
  const StateTerm& terminal_term() const { return terminal_; }
  InputVector input_ref(int h) const { return stages_[h].input_ref; }

  double stage(int h, const StateVector& x, const InputVector& u) const {
    const auto& s = stages_[h];
    const double state = (w_[h].array() * x.array().square()).sum() - 2.0 * wr_[h].dot(x) + c_[h];
    const double input = (s.input_weight.array() * (u - s.input_ref).array().square()).sum();
    return state + input;
  }

  void stage_gradient(int h, const StateVector& x, const InputVector& u, StateVector& gx,
                      InputVector& gu) const {
    const auto& s = stages_[h];
    gx = 2.0 * (w_[h].cwiseProduct(x) - wr_[h]);
    gu = 2.0 * s.input_weight.cwiseProduct(u - s.input_ref);
  }

  StateVector stage_hessian_x(int h) const { return 2.0 * w_[h]; }
  InputVector stage_hessian_u(int h) const { return 2.0 * stages_[h].input_weight; }

  double terminal(const StateVector& x) const { return terminal_.value(x); }
  StateVector terminal_gradient(const StateVector& x) const {
    return 2.0 * terminal_.weight.cwiseProduct(x - terminal_.target);
  }
  StateVector terminal_hessian() const { return 2.0 * terminal_.weight; }

  double total(const std::vector<StateVector>& states,
               const std::vector<InputVector>& inputs) const {
    double J = terminal(states.back());
    for (int h = 0; h < horizon(); ++h) J += stage(h, states[h], inputs[h]);
    return J;
  }

  CostBreakdown breakdown(const std::vector<StateVector>& states,
                          const std::vector<InputVector>& inputs) const {
    CostBreakdown b;
    for (int h = 0; h < horizon(); ++h) {
      for (const auto& t : stages_[h].state_terms) {
        const double v = t.value(states[h]);
        switch (t.kind) {
          case TermKind::GatePass: b.gate_pass += v; break;
          case TermKind::GateFollow: b.gate_follow += v; break;
          default: b.tracking += v; break;
        }
      }
      const auto& s = stages_[h];
      b.input += (s.input_weight.array() * (inputs[h] - s.input_ref).array().square()).sum();
    }
    b.terminal = terminal(states.back());
    return b;
  }

 private:
  std::vector<StageTerms> stages_;
  StateTerm terminal_;
  std::vector<StateVector> w_, wr_;
  std::vector<double> c_;
};

/// Gate-pass, gate-follow, action and terminal costs for the given decision
/// variables. The gate reference of gate i is its predicted state at node
/// floor(t_i / dt), constant over the horizon.
inline TrajectoryCost build_cost(const DecisionVars& z,
                                 const std::vector<std::vector<GateState>>& gate_trajs,
                                 const QuadState& goal, const CostWeights& w, int horizon,
                                 double dt) {
  w.validate();
  if (gate_trajs.size() != z.size())
    throw DomainError("build_cost: one gate trajectory per decision entry required");
  for (const auto& traj : gate_trajs)
    if (static_cast<int>(traj.size()) < horizon + 1)
      throw DomainError("build_cost: gate trajectory shorter than horizon + 1");
  const StageSchedule sched = stage_schedule(z, horizon, dt, w.alpha);

  std::vector<StateVector> refs;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto& traj = gate_trajs[i];
    const int node = std::min(sched.pass_node[i], static_cast<int>(traj.size()) - 1);
    refs.push_back(traj[node].to_vector());
  }

  std::vector<StageTerms> stages(horizon);
  for (int h = 0; h < horizon; ++h) {
    auto& st = stages[h];
    st.input_weight = w.input;
    st.input_ref = w.input_ref;
    for (int i = 0; i < static_cast<int>(z.size()); ++i) {
      if (sched.pass(h, i) == 1)
        st.state_terms.push_back({TermKind::GatePass, i, w.pass, refs[i]});
      const double f = sched.follow_factor(h, i);
      if (f > 0.0) st.state_terms.push_back({TermKind::GateFollow, i, f * w.follow, refs[i]});
    }
  }
  return TrajectoryCost(std::move(stages),
                        StateTerm{TermKind::Terminal, -1, w.goal, goal.to_vector()});
}

// ---------------------------------------------------------------------------
// Solver

struct SolveStats {
  int iterations = 0;
  double step_norm = std::numeric_limits<double>::infinity();
  double projected_gradient_norm = std::numeric_limits<double>::infinity();
  double max_defect = 0.0;
  double wall_time_ms = 0.0;
  bool converged = false;
  std::string termination;
  std::vector<double> cost_history;  // objective after each accepted iteration
};

struct Trajectory {
  double dt = 0.0;
  std::vector<StateVector> states;  // H + 1
  std::vector<InputVector> inputs;  // H
  std::vector<double> stage_costs;  // H
  double terminal_cost = 0.0;
  double total_cost = 0.0;
  SolveStats stats;

  int horizon() const { return static_cast<int>(inputs.size()); }
};

struct SolverOptions {
  int max_iterations = 100;
  double armijo_factor = 0.5;
  double armijo_c1 = 1e-4;
  int max_line_search = 30;
  double step_tolerance = 1e-6;
  double gradient_tolerance = 1e-4;
  double gravity = kGravity;
  double regularization_max = 1e8;
};

namespace detail {

struct BoxQpSolution {
  InputVector x = InputVector::Zero();
  std::array<bool, kInputDim> free{};
  bool ok = true;
};

// Projected-Newton solve of min 0.5 x'Hx + g'x subject to lo <= x <= hi.
inline BoxQpSolution solve_box_qp(const Eigen::Matrix4d& H, const InputVector& g,
                                  const InputVector& lo, const InputVector& hi) {
  BoxQpSolution sol;
  InputVector x = InputVector::Zero().cwiseMax(lo).cwiseMin(hi);
  auto value = [&](const InputVector& y) { return 0.5 * y.dot(H * y) + g.dot(y); };
  constexpr double eps = 1e-13;
  for (int it = 0; it < 50; ++it) {
    const InputVector grad = g + H * x;
    std::array<bool, kInputDim> free{};
    int nfree = 0;
    for (int i = 0; i < kInputDim; ++i) {
      const bool clamped = (x(i) <= lo(i) + eps && grad(i) > 0.0) ||
                           (x(i) >= hi(i) - eps && grad(i) < 0.0);
      free[i] = !clamped;
      nfree += free[i] ? 1 : 0;
    }
    sol.free = free;
    if (nfree == 0) break;
    Eigen::MatrixXd Hff(nfree, nfree);
    Eigen::VectorXd gf(nfree);
    for (int i = 0, a = 0; i < kInputDim; ++i) {
      if (!free[i]) continue;
      gf(a) = grad(i);
      for (int j = 0, b = 0; j < kInputDim; ++j) {
        if (!free[j]) continue;
        Hff(a, b++) = H(i, j);
      }
      ++a;
    }
    if (gf.lpNorm<Eigen::Infinity>() < 1e-12) break;
    Eigen::LLT<Eigen::MatrixXd> llt(Hff);
    if (llt.info() != Eigen::Success) {
      sol.ok = false;
      return sol;
    }
    const Eigen::VectorXd df = -llt.solve(gf);
    InputVector dir = InputVector::Zero();
    for (int i = 0, a = 0; i < kInputDim; ++i)
      if (free[i]) dir(i) = df(a++);
    const double slope = grad.dot(dir);
    const double f0 = value(x);
    double step = 1.0;
    InputVector candidate = x;
    bool moved = false;
    while (step > 1e-12) {
      candidate = (x + step * dir).cwiseMax(lo).cwiseMin(hi);
      if (value(candidate) - f0 <= 0.1 * step * slope) {
        moved = true;
        break;
      }
      step *= 0.6;
    }
    if (!moved) break;
    const double change = (candidate - x).lpNorm<Eigen::Infinity>();
    x = candidate;
    if (change < 1e-14) break;
  }
  const InputVector grad = g + H * x;
  for (int i = 0; i < kInputDim; ++i)
    sol.free[i] = !((x(i) <= lo(i) + eps && grad(i) > 0.0) ||
                    (x(i) >= hi(i) - eps && grad(i) < 0.0));
  sol.x = x;
  return sol;
}

}  // namespace detail

/// Gauss-Newton trajectory optimizer over stacked states and inputs.
///
/// Each iteration linearizes the RK4 map, solves the resulting equality
/// constrained QP by a Riccati recursion (input boxes enforced per stage by a
/// projected-Newton box QP), and takes an Armijo step along the closed-loop
/// nonlinear rollout, so every accepted iterate satisfies the discrete
/// dynamics exactly. Owns its workspace; use one instance per thread.
class TrajectorySolver {
 public:
  explicit TrajectorySolver(SolverOptions options = {}) : opt_(options) {}

  const SolverOptions& options() const { return opt_; }

  Trajectory solve(const StateVector& x_init, const TrajectoryCost& cost,
                   const InputBounds& bounds, double dt,
                   const std::vector<InputVector>* warm_start = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    bounds.validate();
    if (!(dt > 0.0)) throw DomainError("solve_trajectory: dt must be positive");
    if (!detail::all_finite(x_init)) throw DomainError("solve_trajectory: non-finite x_init");
    const int H = cost.horizon();
    resize(H);

    for (int h = 0; h < H; ++h) {
      InputVector u = cost.input_ref(h);
      if (warm_start != nullptr && !warm_start->empty())
        u = (*warm_start)[std::min<std::size_t>(h, warm_start->size() - 1)];
      U_[h] = bounds.clamp(u);
    }
    X_[0] = x_init;
    if (!rollout(X_, U_, dt)) throw SolverError("solve_trajectory: initial rollout diverged");
    double J = cost.total(X_, U_);

    SolveStats stats;
    stats.cost_history.push_back(J);
    double reg = 0.0;
    int iter = 0;
    for (; iter < opt_.max_iterations; ++iter) {
      linearize(dt);
      stats.projected_gradient_norm = projected_gradient(cost, bounds);
      if (stats.projected_gradient_norm <= opt_.gradient_tolerance) {
        stats.converged = true;
        stats.termination = "gradient";
        break;
      }
      if (!backward_pass(cost, bounds, reg)) {
        reg = std::max(10.0 * reg, 1e-6);
        if (reg > opt_.regularization_max) {
          stats.termination = "regularization_limit";
          break;
        }
        continue;
      }
      if (-dv1_ < 1e-12) {
        stats.converged = true;
        stats.termination = "stationary";
        stats.step_norm = 0.0;
        break;
      }
      double full_step = 0.0;
      for (int h = 0; h < H; ++h) full_step = std::max(full_step, k_[h].lpNorm<Eigen::Infinity>());
      if (full_step <= opt_.step_tolerance) {
        stats.converged = true;
        stats.termination = "step";
        stats.step_norm = full_step;
        break;
      }
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < opt_.max_line_search; ++ls, alpha *= opt_.armijo_factor) {
        if (!forward_pass(bounds, dt, alpha)) continue;
        const double Jn = cost.total(Xn_, Un_);
        const double expected = alpha * dv1_ + alpha * alpha * dv2_;
        if (Jn <= J && Jn - J <= opt_.armijo_c1 * expected) {
          double step = 0.0;
          for (int h = 0; h < H; ++h)
            step = std::max(step, (Un_[h] - U_[h]).lpNorm<Eigen::Infinity>());
          std::swap(X_, Xn_);
          std::swap(U_, Un_);
          J = Jn;
          stats.step_norm = step;
          stats.cost_history.push_back(J);
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        reg = std::max(10.0 * reg, 1e-6);
        if (reg > opt_.regularization_max) {
          stats.termination = "line_search_failed";
          break;
        }
        continue;
      }
      if (alpha >= 0.5) {
        reg = reg > 1e-6 ? reg / 4.0 : 0.0;
      } else if (alpha < 0.1) {
        reg = std::max(4.0 * reg, 1e-3);
      }
    }
    if (stats.termination.empty()) stats.termination = "max_iterations";
    stats.iterations = iter;

    Trajectory out;
    out.dt = dt;
    out.states = X_;
    out.inputs = U_;
    out.stage_costs.resize(H);
    for (int h = 0; h < H; ++h) out.stage_costs[h] = cost.stage(h, X_[h], U_[h]);
    out.terminal_cost = cost.terminal(X_[H]);
    out.total_cost = J;
    double defect = 0.0;
    for (int h = 0; h < H; ++h)
      defect = std::max(defect, (rk4_step(X_[h], U_[h], dt, opt_.gravity) - X_[h + 1])
                                    .lpNorm<Eigen::Infinity>());
    stats.max_defect = defect;
    stats.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.stats = std::move(stats);
    return out;
  }

 private:
  void resize(int H) {
    X_.assign(H + 1, StateVector::Zero());
    Xn_.assign(H + 1, StateVector::Zero());
    U_.assign(H, InputVector::Zero());
    Un_.assign(H, InputVector::Zero());
    jac_.resize(H);
    k_.assign(H, InputVector::Zero());
    K_.assign(H, Eigen::Matrix<double, kInputDim, kStateDim>::Zero());
  }

  bool rollout(std::vector<StateVector>& X, const std::vector<InputVector>& U, double dt) {
    for (std::size_t h = 0; h < U.size(); ++h) {
      try {
        X[h + 1] = rk4_step(X[h], U[h], dt, opt_.gravity);
      } catch (const DomainError&) {
        return false;
      }
      if (!detail::all_finite(X[h + 1]) || X[h + 1].norm() > 1e8) return false;
    }
    return true;
  }

  void linearize(double dt) {
    for (std::size_t h = 0; h < U_.size(); ++h)
      rk4_step(X_[h], U_[h], dt, opt_.gravity, &jac_[h]);
  }

  double projected_gradient(const TrajectoryCost& cost, const InputBounds& bounds) const {
    const int H = cost.horizon();
    StateVector lambda = cost.terminal_gradient(X_[H]);
    double norm = 0.0;
    StateVector gx;
    InputVector gu;
    for (int h = H - 1; h >= 0; --h) {
      cost.stage_gradient(h, X_[h], U_[h], gx, gu);
      const InputVector g = gu + jac_[h].B.transpose() * lambda;
      for (int i = 0; i < kInputDim; ++i) {
        const bool at_lower = U_[h](i) <= bounds.lower(i) + 1e-12;
        const bool at_upper = U_[h](i) >= bounds.upper(i) - 1e-12;
        double gi = g(i);
        if ((at_lower && gi > 0.0) || (at_upper && gi < 0.0)) gi = 0.0;
        norm = std::max(norm, std::abs(gi));
      }
      lambda = gx + jac_[h].A.transpose() * lambda;
    }
    return norm;
  }

  bool backward_pass(const TrajectoryCost& cost, const InputBounds& bounds, double reg) {
    const int H = cost.horizon();
    StateVector Vx = cost.terminal_gradient(X_[H]);
    StateJacobian Vxx = cost.terminal_hessian().asDiagonal();
    dv1_ = 0.0;
    dv2_ = 0.0;
    StateVector lx;
    InputVector lu;
    for (int h = H - 1; h >= 0; --h) {
      const auto& A = jac_[h].A;
      const auto& B = jac_[h].B;
      cost.stage_gradient(h, X_[h], U_[h], lx, lu);
      const StateVector Qx = lx + A.transpose() * Vx;
      const InputVector Qu = lu + B.transpose() * Vx;
      const Eigen::Matrix<double, kStateDim, kStateDim> VxxA = Vxx * A;
      const InputJacobian VxxB = Vxx * B;
      StateJacobian Qxx = A.transpose() * VxxA;
      Qxx.diagonal() += cost.stage_hessian_x(h);
      Eigen::Matrix4d Quu = B.transpose() * VxxB;
      Quu.diagonal() += cost.stage_hessian_u(h);
      const Eigen::Matrix<double, kInputDim, kStateDim> Qux = B.transpose() * VxxA;
      Eigen::Matrix4d Quu_reg = Quu;
      Quu_reg.diagonal().array() += reg;

      const auto qp = detail::solve_box_qp(Quu_reg, Qu, bounds.lower - U_[h],
                                           bounds.upper - U_[h]);
      if (!qp.ok) return false;
      InputVector k = qp.x;
      Eigen::Matrix<double, kInputDim, kStateDim> K =
          Eigen::Matrix<double, kInputDim, kStateDim>::Zero();
      int nfree = 0;
      for (bool f : qp.free) nfree += f ? 1 : 0;
      if (nfree > 0) {
        Eigen::MatrixXd Hff(nfree, nfree);
        Eigen::MatrixXd Rf(nfree, kStateDim);
        for (int i = 0, a = 0; i < kInputDim; ++i) {
          if (!qp.free[i]) continue;
          Rf.row(a) = Qux.row(i);
          for (int j = 0, b = 0; j < kInputDim; ++j) {
            if (!qp.free[j]) continue;
            Hff(a, b++) = Quu_reg(i, j);
          }
          ++a;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(Hff);
        if (llt.info() != Eigen::Success) return false;
        const Eigen::MatrixXd Kf = -llt.solve(Rf);
        for (int i = 0, a = 0; i < kInputDim; ++i)
          if (qp.free[i]) K.row(i) = Kf.row(a++);
      }
      k_[h] = k;
      K_[h] = K;
      dv1_ += k.dot(Qu);
      dv2_ += 0.5 * k.dot(Quu * k);
      Vx = Qx + K.transpose() * Quu * k + K.transpose() * Qu + Qux.transpose() * k;
      Vxx = Qxx + K.transpose() * Quu * K + K.transpose() * Qux + Qux.transpose() * K;
      Vxx = 0.5 * (Vxx + Vxx.transpose()).eval();
    }
    return true;
  }

  bool forward_pass(const InputBounds& bounds, double dt, double alpha) {
    Xn_[0] = X_[0];
    for (std::size_t h = 0; h < U_.size(); ++h) {
      Un_[h] = bounds.clamp(U_[h] + alpha * k_[h] + K_[h] * (Xn_[h] - X_[h]));
      try {
        Xn_[h + 1] = rk4_step(Xn_[h], Un_[h], dt, opt_.gravity);
      } catch (const DomainError&) {
        return false;
      }
      if (!detail::all_finite(Xn_[h + 1]) || Xn_[h + 1].norm() > 1e8) return false;
    }
    return true;
  }

  SolverOptions opt_;
  std::vector<StateVector> X_, Xn_;
  std::vector<InputVector> U_, Un_;
  std::vector<StepJacobians> jac_;
  std::vector<InputVector> k_;
  std::vector<Eigen::Matrix<double, kInputDim, kStateDim>> K_;
  double dv1_ = 0.0, dv2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Receding-horizon wrapper

struct MpcConfig {
  double horizon_time = 3.0;
  double dt = 0.05;
  double control_period = 0.05;  // time between consecutive step() calls
  CostWeights weights = CostWeights::defaults();
  InputBounds bounds;
  SolverOptions solver;

  int horizon() const { return static_cast<int>(std::lround(horizon_time / dt)); }
  double gravity() const { return solver.gravity; }
};

enum class MpcStatus { Converged, NotConverged, SolverFailure };

inline const char* to_string(MpcStatus s) {
  switch (s) {
    case MpcStatus::Converged: return "converged";
    case MpcStatus::NotConverged: return "not_converged";
    case MpcStatus::SolverFailure: return "solver_failure";
  }
  return "unknown";
}

struct MpcStep {
  QuadInput command;
  Trajectory trajectory;
  MpcStatus status = MpcStatus::Converged;
  StageSchedule schedule;
  std::vector<std::vector<GateState>> gate_trajectories;
};

/// Gate trajectories long enough to cover both the horizon and every
/// traversal node in z.
inline std::vector<std::vector<GateState>> predict_gates(
    const DecisionVars& z, const std::vector<GateState>& gates,
    const std::vector<PendulumParams>& params, int horizon, double dt, double g) {
  if (gates.size() != z.size() || params.size() != z.size())
    throw DomainError("predict_gates: one gate and pendulum per decision entry required");
  int nodes = horizon;
  for (const auto& e : z.entries()) nodes = std::max(nodes, traversal_node(e.time, dt));
  std::vector<std::vector<GateState>> out;
  for (std::size_t i = 0; i < gates.size(); ++i)
    out.push_back(predict_gate_trajectory(gates[i], params[i], nodes, dt, g));
  return out;
}

/// MPC(z): predicts the gates, builds the cost, solves from a shifted warm
/// start, and returns the first input.
class HighMpc {
 public:
  explicit HighMpc(MpcConfig cfg) : cfg_(std::move(cfg)), solver_(cfg_.solver) {
    cfg_.weights.validate();
    cfg_.bounds.validate();
    last_command_ = QuadInput::hover(cfg_.gravity());
  }

  const MpcConfig& config() const { return cfg_; }

  void reset() {
    previous_.clear();
    last_command_ = QuadInput::hover(cfg_.gravity());
  }

  // Plans without touching the warm-start memory.
  Trajectory plan(const QuadState& x, const DecisionVars& z, const std::vector<GateState>& gates,
                  const std::vector<PendulumParams>& params, const QuadState& goal,
                  const std::vector<InputVector>* warm_start = nullptr) {
    const int H = cfg_.horizon();
    const auto trajs = predict_gates(z, gates, params, H, cfg_.dt, cfg_.gravity());
    const auto cost = build_cost(z, trajs, goal, cfg_.weights, H, cfg_.dt);
    return solver_.solve(x.to_vector(), cost, cfg_.bounds, cfg_.dt, warm_start);
  }

  MpcStep step(const QuadState& x, const DecisionVars& z, const std::vector<GateState>& gates,
               const std::vector<PendulumParams>& params, const QuadState& goal) {
    const int H = cfg_.horizon();
    MpcStep out;
    out.gate_trajectories = predict_gates(z, gates, params, H, cfg_.dt, cfg_.gravity());
    out.schedule = stage_schedule(z, H, cfg_.dt, cfg_.weights.alpha);
    const auto cost = build_cost(z, out.gate_trajectories, goal, cfg_.weights, H, cfg_.dt);
    return finish(x, cost, std::move(out));
  }

  // Shared tail for controllers that bring their own cost.
  MpcStep solve_with(const QuadState& x, const TrajectoryCost& cost) {
    return finish(x, cost, MpcStep{});
  }

 private:
  MpcStep finish(const QuadState& x, const TrajectoryCost& cost, MpcStep out) {
    const std::vector<InputVector> warm = shifted_warm_start(cost.horizon());
    try {
      out.trajectory =
          solver_.solve(x.to_vector(), cost, cfg_.bounds, cfg_.dt, warm.empty() ? nullptr : &warm);
    } catch (const SolverError&) {
      out.status = MpcStatus::SolverFailure;
      out.command = last_command_;
      previous_.clear();
      return out;
    }
    out.status = out.trajectory.stats.converged ? MpcStatus::Converged : MpcStatus::NotConverged;
    previous_ = out.trajectory.inputs;
    out.command = QuadInput::from_vector(out.trajectory.inputs.front());
    last_command_ = out.command;
    return out;
  }

  std::vector<InputVector> shifted_warm_start(int H) const {
    if (previous_.empty()) return {};
    const double shift = cfg_.control_period / cfg_.dt;
    const int n = static_cast<int>(previous_.size());
    std::vector<InputVector> out(H);
    for (int h = 0; h < H; ++h) {
      const double s = std::min(h + shift, static_cast<double>(n - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, n - 1);
      const double a = s - i0;
      out[h] = (1.0 - a) * previous_[i0] + a * previous_[i1];
    }
    return out;
  }

  MpcConfig cfg_;
  TrajectorySolver solver_;
  std::vector<InputVector> previous_;
  QuadInput last_command_;
};

}  // namespace highmpc
