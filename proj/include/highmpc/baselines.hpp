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

// Comparison controllers: an MPC that tracks the predicted gate motion at
// every stage, and a sampled minimum-jerk primitive planner.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "highmpc/dynamics.hpp"
#include "highmpc/trajopt.hpp"

namespace highmpc {

// ---------------------------------------------------------------------------
// Standard MPC

/// Tracks y/z position, attitude and y/z velocity of the gate.
inline StateVector standard_tracking_weights() {
  StateVector q;
  q << 0, 100, 100, 10, 10, 10, 10, 0, 10, 10;
  return q;
}

/// Stage cost (x_h - x^g_h)' Q (x_h - x^g_h) for h = 1..H-1 against the
/// time-varying gate prediction, plus action and terminal costs.
inline TrajectoryCost build_tracking_cost(const std::vector<GateState>& gate_traj,
                                          const QuadState& goal, const StateVector& Q,
                                          const CostWeights& w, int horizon) {
  w.validate();
  if (static_cast<int>(gate_traj.size()) < horizon + 1)
    throw DomainError("build_tracking_cost: gate trajectory shorter than horizon + 1");
  if ((Q.array() < 0.0).any()) throw DomainError("build_tracking_cost: negative weight");
  std::vector<StageTerms> stages(horizon);
  for (int h = 0; h < horizon; ++h) {
    stages[h].input_weight = w.input;
    stages[h].input_ref = w.input_ref;
    if (h >= 1) stages[h].state_terms.push_back({TermKind::Tracking, 0, Q, gate_traj[h].to_vector()});
  }
  return TrajectoryCost(std::move(stages),
                        StateTerm{TermKind::Terminal, -1, w.goal, goal.to_vector()});
}

class StandardMpc {
 public:
  explicit StandardMpc(MpcConfig cfg, StateVector Q = standard_tracking_weights())
      : core_(std::move(cfg)), Q_(Q) {}

  const MpcConfig& config() const { return core_.config(); }
  void reset() { core_.reset(); }

  MpcStep step(const QuadState& x, const GateState& gate, const PendulumParams& pp,
               const QuadState& goal) {
    const auto& cfg = core_.config();
    const int H = cfg.horizon();
    auto traj = predict_gate_trajectory(gate, pp, H, cfg.dt, cfg.gravity());
    const auto cost = build_tracking_cost(traj, goal, Q_, cfg.weights, H);
    MpcStep out = core_.solve_with(x, cost);
    out.gate_trajectories = {std::move(traj)};
    return out;
  }

 private:
  HighMpc core_;
  StateVector Q_;
};

// ---------------------------------------------------------------------------
// Minimum-jerk primitives

/// Boundary values of one axis; unset entries are free.
struct AxisBoundary {
  std::optional<double> position;
  std::optional<double> velocity;
  std::optional<double> acceleration;
};

struct AxisStart {
  double position = 0.0;
  double velocity = 0.0;
  double acceleration = 0.0;
};

/// Per-axis quintic x(t) = sum_k c_k t^k on [0, T].
struct JerkPrimitive {
  double duration = 0.0;
  std::array<Eigen::Matrix<double, 6, 1>, 3> coeffs{};

  // derivative order 0..5 of axis `axis` at time t
  double derivative(int axis, int order, double t) const {
    const auto& c = coeffs[axis];
    double s = 0.0;
    for (int k = order; k < 6; ++k) {
      double f = 1.0;
      for (int j = 0; j < order; ++j) f *= static_cast<double>(k - j);
      s += f * c(k) * std::pow(t, k - order);
    }
    return s;
  }

  Vec3 position(double t) const { return eval(0, t); }
  Vec3 velocity(double t) const { return eval(1, t); }
  Vec3 acceleration(double t) const { return eval(2, t); }
  Vec3 jerk(double t) const { return eval(3, t); }

  // integral of |jerk|^2 over [0, T], exact for quintics
  double jerk_cost() const {
    double total = 0.0;
    const double T = duration;
    for (int a = 0; a < 3; ++a) {
      const auto& c = coeffs[a];
      // jerk = j0 + j1 t + j2 t^2
      const double j0 = 6.0 * c(3), j1 = 24.0 * c(4), j2 = 60.0 * c(5);
      total += j0 * j0 * T + j0 * j1 * T * T + (j1 * j1 + 2.0 * j0 * j2) * T * T * T / 3.0 +
               0.5 * j1 * j2 * std::pow(T, 4) + j2 * j2 * std::pow(T, 5) / 5.0;
    }
    return total;
  }

 private:
  Vec3 eval(int order, double t) const {
    return Vec3(derivative(0, order, t), derivative(1, order, t), derivative(2, order, t));
  }
};

namespace detail {

// Coefficients (c3, c4, c5) from the three end conditions; a free end value
// is replaced by the natural condition of the jerk-optimal solution.
inline Eigen::Matrix<double, 6, 1> solve_axis(const AxisStart& s, const AxisBoundary& e,
                                              double T) {
  Eigen::Matrix<double, 6, 1> c = Eigen::Matrix<double, 6, 1>::Zero();
  c(0) = s.position;
  c(1) = s.velocity;
  c(2) = 0.5 * s.acceleration;
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  Eigen::Matrix3d A;
  Eigen::Vector3d b;
  if (e.position) {
    A.row(0) << T3, T4, T5;
    b(0) = *e.position - (c(0) + c(1) * T + c(2) * T2);
  } else {
    A.row(0) << 0.0, 0.0, 120.0;  // fifth derivative vanishes
    b(0) = 0.0;
  }
  if (e.velocity) {
    A.row(1) << 3.0 * T2, 4.0 * T3, 5.0 * T4;
    b(1) = *e.velocity - (c(1) + 2.0 * c(2) * T);
  } else {
    A.row(1) << 0.0, 24.0, 120.0 * T;  // fourth derivative vanishes
    b(1) = 0.0;
  }
  if (e.acceleration) {
    A.row(2) << 6.0 * T, 12.0 * T2, 20.0 * T3;
    b(2) = *e.acceleration - 2.0 * c(2);
  } else {
    A.row(2) << 6.0, 24.0 * T, 60.0 * T2;  // jerk vanishes
    b(2) = 0.0;
  }
  const Eigen::Vector3d x = A.fullPivLu().solve(b);
  c.tail<3>() = x;
  return c;
}

}  // namespace detail

inline JerkPrimitive min_jerk_primitive(const std::array<AxisStart, 3>& start,
                                        const std::array<AxisBoundary, 3>& end, double T) {
  if (!(T > 1e-6) || !std::isfinite(T)) throw DomainError("min_jerk_primitive: degenerate duration");
  JerkPrimitive p;
  p.duration = T;
  for (int a = 0; a < 3; ++a) p.coeffs[a] = detail::solve_axis(start[a], end[a], T);
  return p;
}

// ---------------------------------------------------------------------------
// Sampling planner

struct PrimitiveConfig {
  double t_min = 0.1;
  double t_max = 3.0;
  double t_step = 0.1;
  int check_nodes = 50;
  double thrust_min = 2.0;   // m/s^2
  double thrust_max = 20.0;  // m/s^2
  double accel_max = 15.0;   // per axis, m/s^2
  double attitude_gain = 8.0;   // 1/s
  double yaw_gain = 2.0;        // 1/s
  double rate_limit = 3.0;      // rad/s
  double hold_kp = 4.0;
  double hold_kd = 3.0;
  double gravity = kGravity;
  double pendulum_dt = 0.01;  // integration step for the waypoint prediction

  std::vector<double> grid() const {
    std::vector<double> g;
    const int n = static_cast<int>(std::floor((t_max - t_min) / t_step + 1e-9)) + 1;
    for (int i = 0; i < n; ++i) g.push_back(t_min + i * t_step);
    return g;
  }
};

/// Thrust magnitude and per-axis acceleration on an evenly spaced grid.
inline bool primitive_feasible(const JerkPrimitive& p, const PrimitiveConfig& cfg) {
  for (int k = 0; k < cfg.check_nodes; ++k) {
    const double t = p.duration * k / static_cast<double>(cfg.check_nodes - 1);
    const Vec3 a = p.acceleration(t);
    if (a.cwiseAbs().maxCoeff() > cfg.accel_max) return false;
    const double thrust = (a + Vec3(0.0, 0.0, cfg.gravity)).norm();
    if (thrust < cfg.thrust_min || thrust > cfg.thrust_max) return false;
  }
  return true;
}

/// Gate state after `t` seconds of free swinging.
inline GateState gate_at(const GateState& gate, const PendulumParams& pp, double t, double h,
                         double g = kGravity) {
  GateState s = gate;
  double remaining = t;
  while (remaining > 1e-12) {
    const double step = std::min(h, remaining);
    s = step_gate(s, pp, step, g);
    remaining -= step;
  }
  return s;
}

struct PrimitivePlan {
  std::optional<JerkPrimitive> primitive;
  double traversal_time = 0.0;
  Vec3 waypoint = Vec3::Zero();
  int candidates = 0;
  int rejected = 0;
};

/// First feasible traversal time on the grid with end constraints
/// p = gate center, v = [free, 0, 0], a free.
inline PrimitivePlan plan_primitive(const QuadState& x, const Vec3& accel, const GateState& gate,
                                    const PendulumParams& pp, const PrimitiveConfig& cfg) {
  PrimitivePlan plan;
  std::array<AxisStart, 3> start;
  for (int a = 0; a < 3; ++a) start[a] = {x.p(a), x.v(a), accel(a)};
  for (double T : cfg.grid()) {
    ++plan.candidates;
    const GateState g = gate_at(gate, pp, T, cfg.pendulum_dt, cfg.gravity);
    std::array<AxisBoundary, 3> end;
    end[0] = {g.p(0), std::nullopt, std::nullopt};
    end[1] = {g.p(1), 0.0, std::nullopt};
    end[2] = {g.p(2), 0.0, std::nullopt};
    JerkPrimitive p = min_jerk_primitive(start, end, T);
    if (!primitive_feasible(p, cfg)) {
      ++plan.rejected;
      continue;
    }
    plan.primitive = p;
    plan.traversal_time = T;
    plan.waypoint = g.p;
    return plan;
  }
  return plan;
}

/// Body-rate command realizing a desired world acceleration: thrust along
/// the desired body z axis, rates from a first-order attitude law.
inline QuadInput track_acceleration(const QuadState& x, const Vec3& accel,
                                    const PrimitiveConfig& cfg) {
  Vec3 f = accel + Vec3(0.0, 0.0, cfg.gravity);
  if (f.norm() < 1e-6) f = Vec3(0.0, 0.0, 1e-6);
  const Vec3 z_des = f.normalized();
  const Eigen::Matrix3d R = rotation_matrix(x.q);
  const Vec3 z_body = R.col(2);
  const Vec3 err_world = z_body.cross(z_des);
  Vec3 rates = cfg.attitude_gain * (R.transpose() * err_world);
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  rates(2) = -cfg.yaw_gain * yaw;
  rates = rates.cwiseMax(-cfg.rate_limit).cwiseMin(cfg.rate_limit);
  QuadInput u;
  u.thrust = std::clamp(f.dot(z_body), cfg.thrust_min, cfg.thrust_max);
  u.rates = rates;
  return u;
}

struct PrimitiveCommand {
  QuadInput command;
  PrimitivePlan plan;
  bool fallback = false;  // no feasible candidate; holding position
};

/// Replans from the current state each call and tracks the first part of
/// the selected primitive. `lookahead` is the time into the primitive whose
/// acceleration is commanded (typically one control period).
class PrimitiveController {
 public:
  explicit PrimitiveController(PrimitiveConfig cfg = {}) : cfg_(cfg) {}

  const PrimitiveConfig& config() const { return cfg_; }
  void reset() {
    accel_ = Vec3::Zero();
    hold_.reset();
  }

  PrimitiveCommand step(const QuadState& x, const GateState& gate, const PendulumParams& pp,
                        double lookahead) {
    PrimitiveCommand out;
    out.plan = plan_primitive(x, accel_, gate, pp, cfg_);
    Vec3 a_des;
    if (out.plan.primitive) {
      hold_.reset();
      a_des = out.plan.primitive->acceleration(std::min(lookahead, out.plan.primitive->duration));
    } else {
      out.fallback = true;
      if (!hold_) hold_ = x.p;
      a_des = -cfg_.hold_kp * (x.p - *hold_) - cfg_.hold_kd * x.v;
    }
    out.command = track_acceleration(x, a_des, cfg_);
    accel_ = rotation_matrix(x.q).col(2) * out.command.thrust - Vec3(0.0, 0.0, cfg_.gravity);
    return out;
  }

 private:
  PrimitiveConfig cfg_;
  Vec3 accel_ = Vec3::Zero();
  std::optional<Vec3> hold_;
};

}  // namespace highmpc
