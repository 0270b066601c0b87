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
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace highmpc {

inline constexpr double kGravity = 9.81;
inline constexpr int kStateDim = 10;
inline constexpr int kInputDim = 4;

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
// [p (3), q = (w, x, y, z) (4), v (3)]
using StateVector = Eigen::Matrix<double, kStateDim, 1>;
// [c, wx, wy, wz]
using InputVector = Eigen::Matrix<double, kInputDim, 1>;
using StateJacobian = Eigen::Matrix<double, kStateDim, kStateDim>;
using InputJacobian = Eigen::Matrix<double, kStateDim, kInputDim>;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.array().isFinite().all();
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail

struct QuadState {
  Vec3 p = Vec3::Zero();
  Vec4 q = Vec4(1.0, 0.0, 0.0, 0.0);
  Vec3 v = Vec3::Zero();

  static QuadState hover_at(const Vec3& position) {
    QuadState s;
    s.p = position;
    return s;
  }

  StateVector to_vector() const {
    StateVector x;
    x << p, q, v;
    return x;
  }

  static QuadState from_vector(const StateVector& x) {
    QuadState s;
    s.p = x.segment<3>(0);
    s.q = x.segment<4>(3);
    s.v = x.segment<3>(7);
    return s;
  }
};

struct QuadInput {
  double thrust = kGravity;  // mass-normalized collective thrust, m/s^2
  Vec3 rates = Vec3::Zero();  // body rates, rad/s

  InputVector to_vector() const {
    InputVector u;
    u << thrust, rates;
    return u;
  }

  static QuadInput from_vector(const InputVector& u) {
    return QuadInput{u(0), u.tail<3>()};
  }

  static QuadInput hover(double g = kGravity) { return QuadInput{g, Vec3::Zero()}; }
};

// Rotates body z by q: third column of R(q), q = (w, x, y, z).
inline Vec3 body_z_axis(const Vec4& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  return Vec3(2.0 * (x * z + w * y), 2.0 * (y * z - w * x),
              1.0 - 2.0 * (x * x + y * y));
}

inline Eigen::Matrix3d rotation_matrix(const Vec4& q) {
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

// Unit quaternion with w >= 0.
inline Vec4 canonical_quaternion(const Vec4& q) {
  Vec4 n = q / q.norm();
  if (n(0) < 0.0) n = -n;
  return n;
}

inline Vec4 roll_quaternion(double roll) {
  return canonical_quaternion(Vec4(std::cos(0.5 * roll), std::sin(0.5 * roll), 0.0, 0.0));
}

/// Continuous-time rate-controlled quadrotor model.
///   p' = v,  q' = 0.5 * q (x) [0, w],  v' = R(q) [0, 0, c] - [0, 0, g]
inline StateVector quad_derivative(const StateVector& x, const InputVector& u,
                                   double g = kGravity) {
  detail::require(detail::all_finite(x) && detail::all_finite(u) && std::isfinite(g),
                  "quad_derivative: non-finite state or input");
  const double qw = x(3), qx = x(4), qy = x(5), qz = x(6);
  const double c = u(0), wx = u(1), wy = u(2), wz = u(3);
  StateVector dx;
  dx.segment<3>(0) = x.segment<3>(7);
  dx(3) = 0.5 * (-qx * wx - qy * wy - qz * wz);
  dx(4) = 0.5 * (qw * wx + qy * wz - qz * wy);
  dx(5) = 0.5 * (qw * wy - qx * wz + qz * wx);
  dx(6) = 0.5 * (qw * wz + qx * wy - qy * wx);
  dx.segment<3>(7) = c * body_z_axis(x.segment<4>(3)) - Vec3(0.0, 0.0, g);
  return dx;
}

inline StateVector quad_derivative(const QuadState& x, const QuadInput& u,
                                   double g = kGravity) {
  detail::require(std::abs(x.q.norm() - 1.0) <= 1e-6,
                  "quad_derivative: quaternion is not unit norm");
  return quad_derivative(x.to_vector(), u.to_vector(), g);
}

// Partial derivatives of quad_derivative.
inline void quad_derivative_jacobian(const StateVector& x, const InputVector& u,
                                     StateJacobian& A, InputJacobian& B) {
  const double qw = x(3), qx = x(4), qy = x(5), qz = x(6);
  const double c = u(0), wx = u(1), wy = u(2), wz = u(3);
  A.setZero();
  B.setZero();
  A.block<3, 3>(0, 7).setIdentity();

  Eigen::Matrix4d omega;
  omega << 0, -wx, -wy, -wz,
           wx, 0, wz, -wy,
           wy, -wz, 0, wx,
           wz, wy, -wx, 0;
  A.block<4, 4>(3, 3) = 0.5 * omega;

  Eigen::Matrix<double, 4, 3> dq_dw;
  dq_dw << -qx, -qy, -qz,
            qw, -qz, qy,
            qz, qw, -qx,
           -qy, qx, qw;
  B.block<4, 3>(3, 1) = 0.5 * dq_dw;

  Eigen::Matrix<double, 3, 4> dz_dq;
  dz_dq << qy, qz, qw, qx,
          -qx, -qw, qz, qy,
           0.0, -2.0 * qx, -2.0 * qy, 0.0;
  A.block<3, 4>(7, 3) = 2.0 * c * dz_dq;
  B.block<3, 1>(7, 0) = body_z_axis(x.segment<4>(3));
}

struct StepJacobians {
  StateJacobian A;
  InputJacobian B;
};

/// One RK4 step followed by quaternion renormalization (w >= 0). Optionally
/// returns the Jacobians of the full discrete map.
inline StateVector rk4_step(const StateVector& x, const InputVector& u, double dt,
                            double g = kGravity, StepJacobians* jac = nullptr) {
  detail::require(dt > 0.0 && std::isfinite(dt), "rk4_step: dt must be positive");
  const StateVector k1 = quad_derivative(x, u, g);
  const StateVector x2 = x + 0.5 * dt * k1;
  const StateVector k2 = quad_derivative(x2, u, g);
  const StateVector x3 = x + 0.5 * dt * k2;
  const StateVector k3 = quad_derivative(x3, u, g);
  const StateVector x4 = x + dt * k3;
  const StateVector k4 = quad_derivative(x4, u, g);
  StateVector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  const Vec4 q_raw = next.segment<4>(3);
  const double norm = q_raw.norm();
  detail::require(norm > 0.0 && std::isfinite(norm), "rk4_step: degenerate quaternion");
  const double sign = q_raw(0) < 0.0 ? -1.0 : 1.0;
  const Vec4 q_unit = q_raw / norm;
  next.segment<4>(3) = sign * q_unit;

  if (jac != nullptr) {
    StateJacobian A1, A2, A3, A4;
    InputJacobian B1, B2, B3, B4;
    quad_derivative_jacobian(x, u, A1, B1);
    quad_derivative_jacobian(x2, u, A2, B2);
    quad_derivative_jacobian(x3, u, A3, B3);
    quad_derivative_jacobian(x4, u, A4, B4);
    const StateJacobian I = StateJacobian::Identity();
    // dk_i/dx and dk_i/du through the stage chain.
    const StateJacobian K1x = A1;
    const InputJacobian K1u = B1;
    const StateJacobian K2x = A2 * (I + 0.5 * dt * K1x);
    const InputJacobian K2u = A2 * (0.5 * dt * K1u) + B2;
    const StateJacobian K3x = A3 * (I + 0.5 * dt * K2x);
    const InputJacobian K3u = A3 * (0.5 * dt * K2u) + B3;
    const StateJacobian K4x = A4 * (I + dt * K3x);
    const InputJacobian K4u = A4 * (dt * K3u) + B4;
    jac->A = I + (dt / 6.0) * (K1x + 2.0 * K2x + 2.0 * K3x + K4x);
    jac->B = (dt / 6.0) * (K1u + 2.0 * K2u + 2.0 * K3u + K4u);

    const Eigen::Matrix4d normalize =
        sign * (Eigen::Matrix4d::Identity() - q_unit * q_unit.transpose()) / norm;
    jac->A.middleRows<4>(3) = normalize * jac->A.middleRows<4>(3);
    jac->B.middleRows<4>(3) = normalize * jac->B.middleRows<4>(3);
  }
  return next;
}

inline QuadState integrate_quad(const QuadState& x, const QuadInput& u, double dt,
                                double g = kGravity) {
  detail::require(dt > 0.0, "integrate_quad: dt must be positive");
  return QuadState::from_vector(rk4_step(x.to_vector(), u.to_vector(), dt, g));
}

// ---------------------------------------------------------------------------
// Pendulum gate

struct PendulumParams {
  Vec3 anchor = Vec3(0.0, 0.0, 3.45);  // fixed support, world frame
  double cm_length = 1.0;               // support to center of mass, m
  double arm_length = 1.45;             // support to gate center, m
  double damping = 0.2;                 // 1/s
  double mass = 0.76;                   // kg
  double inertia = 0.76;                // kg m^2

  void validate() const {
    detail::require(detail::all_finite(anchor), "PendulumParams: non-finite anchor");
    detail::require(cm_length > 0.0 && arm_length > 0.0 && damping >= 0.0 && mass > 0.0 &&
                        inertia > 0.0,
                    "PendulumParams: invalid physical parameters");
  }

  // Steel stick (0.3 kg, 1.0 m) plus wooden loop (0.46 kg, radius 0.45 m),
  // lumped into a point mass at the combined center of mass.
  static PendulumParams real_world(const Vec3& anchor, double damping = 0.2) {
    constexpr double stick_mass = 0.3, stick_length = 1.0;
    constexpr double loop_mass = 0.46, loop_radius = 0.45;
    PendulumParams pp;
    pp.anchor = anchor;
    pp.mass = stick_mass + loop_mass;
    pp.arm_length = stick_length + loop_radius;
    pp.cm_length = (stick_mass * 0.5 * stick_length + loop_mass * pp.arm_length) / pp.mass;
    pp.inertia = pp.mass * pp.cm_length * pp.cm_length;
    pp.damping = damping;
    return pp;
  }

  Vec3 rest_center() const { return anchor - Vec3(0.0, 0.0, arm_length); }
};

struct GateState {
  double theta = 0.0;
  double theta_dot = 0.0;
  Vec3 p = Vec3::Zero();
  Vec4 q = Vec4(1.0, 0.0, 0.0, 0.0);
  Vec3 v = Vec3::Zero();

  StateVector to_vector() const {
    StateVector x;
    x << p, q, v;
    return x;
  }
};

/// Returns (theta_dot, theta_ddot) for roll about the world x axis.
inline std::pair<double, double> pendulum_derivative(double theta, double theta_dot,
                                                     const PendulumParams& pp,
                                                     double g = kGravity) {
  detail::require(std::isfinite(theta) && std::isfinite(theta_dot),
                  "pendulum_derivative: non-finite state");
  const double accel =
      -(pp.mass * g * pp.cm_length * std::sin(theta) / pp.inertia + pp.damping * theta_dot);
  return {theta_dot, accel};
}

inline double pendulum_energy(double theta, double theta_dot, const PendulumParams& pp,
                              double g = kGravity) {
  return 0.5 * pp.inertia * theta_dot * theta_dot +
         pp.mass * g * pp.cm_length * (1.0 - std::cos(theta));
}

// Closed-form kinematics of the gate center for a given swing angle and rate.
inline GateState gate_pose(double theta, double theta_dot, const PendulumParams& pp) {
  GateState s;
  s.theta = theta;
  s.theta_dot = theta_dot;
  const double st = std::sin(theta), ct = std::cos(theta);
  s.p = pp.anchor + pp.arm_length * Vec3(0.0, st, -ct);
  s.v = pp.arm_length * theta_dot * Vec3(0.0, ct, st);
  s.q = roll_quaternion(theta);
  return s;
}

inline std::pair<double, double> pendulum_rk4(double theta, double theta_dot, double dt,
                                              const PendulumParams& pp, double g = kGravity) {
  const auto [a1, b1] = pendulum_derivative(theta, theta_dot, pp, g);
  const auto [a2, b2] =
      pendulum_derivative(theta + 0.5 * dt * a1, theta_dot + 0.5 * dt * b1, pp, g);
  const auto [a3, b3] =
      pendulum_derivative(theta + 0.5 * dt * a2, theta_dot + 0.5 * dt * b2, pp, g);
  const auto [a4, b4] = pendulum_derivative(theta + dt * a3, theta_dot + dt * b3, pp, g);
  return {theta + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
          theta_dot + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)};
}

inline GateState step_gate(const GateState& gate, const PendulumParams& pp, double dt,
                           double g = kGravity) {
  const auto [theta, theta_dot] = pendulum_rk4(gate.theta, gate.theta_dot, dt, pp, g);
  return gate_pose(theta, theta_dot, pp);
}

inline constexpr double kMaxPendulumStep = 0.01;  // s

/// Equal RK4 substeps no longer than kMaxPendulumStep.
inline int pendulum_substeps(double dt) {
  return std::max(1, static_cast<int>(std::ceil(dt / kMaxPendulumStep - 1e-9)));
}

/// H+1 predicted gate states at spacing dt; element 0 is g0.
inline std::vector<GateState> predict_gate_trajectory(const GateState& g0,
                                                      const PendulumParams& pp, int horizon,
                                                      double dt, double g = kGravity) {
  detail::require(horizon >= 1, "predict_gate_trajectory: horizon must be >= 1");
  detail::require(dt > 0.0, "predict_gate_trajectory: dt must be positive");
  pp.validate();
  const int sub = pendulum_substeps(dt);
  const double h = dt / sub;
  std::vector<GateState> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  out.push_back(g0);
  for (int k = 0; k < horizon; ++k) {
    GateState s = out.back();
    for (int j = 0; j < sub; ++j) s = step_gate(s, pp, h, g);
    out.push_back(s);
  }
  return out;
}

}  // namespace highmpc
