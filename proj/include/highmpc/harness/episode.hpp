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
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "highmpc/baselines.hpp"
#include "highmpc/harness/io.hpp"
#include "highmpc/harness/planning.hpp"
#include "highmpc/neural_policy.hpp"
#include "highmpc/trajopt.hpp"

namespace highmpc::harness {

// ---------------------------------------------------------------------------
// World

struct Course {
  std::vector<PendulumParams> gates;  // ordered by anchor x
  std::vector<GateState> initial_gates;
  QuadState start;
  double goal_offset = 2.0;

  /// Hover point `goal_offset` behind gate i at its rest height.
  QuadState local_goal(int gate) const {
    const auto& pp = gates.at(static_cast<std::size_t>(gate));
    const Vec3 c = pp.rest_center();
    return QuadState::hover_at(Vec3(pp.anchor.x() + goal_offset, c.y(), c.z()));
  }

  /// Straight-line path through the rest centers at `speed`.
  double expected_time(double speed) const {
    double len = 0.0;
    Vec3 p = start.p;
    for (const auto& g : gates) {
      len += (g.rest_center() - p).norm();
      p = g.rest_center();
    }
    return len / speed;
  }

  void validate() const {
    if (gates.empty() || gates.size() != initial_gates.size())
      throw DomainError("Course: one initial state per gate required");
    for (std::size_t i = 1; i < gates.size(); ++i)
      if (!(gates[i].anchor.x() > gates[i - 1].anchor.x()))
        throw DomainError("Course: gates must be ordered by increasing anchor x");
  }
};

struct WorldState {
  double time = 0.0;
  QuadState quad;
  std::vector<GateState> gates;
  int next_gate = 0;
};

/// Fixed number of RK4 substeps per control period.
inline GateState advance_gate(const GateState& g, const PendulumParams& pp, double period,
                              int substeps, double gravity = kGravity) {
  GateState s = g;
  const double h = period / substeps;
  for (int k = 0; k < substeps; ++k) s = step_gate(s, pp, h, gravity);
  return s;
}

// ---------------------------------------------------------------------------
// Controllers

struct ControlAction {
  QuadInput command;
  bool failed = false;
  std::string status = "ok";
  double traversal_time = std::numeric_limits<double>::quiet_NaN();
  std::optional<QuadState> teleport;  // test doubles only: replaces the plant step
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual void reset() = 0;
  virtual ControlAction act(const WorldState& world, const Course& course) = 0;
};

/// High-MPC with the traversal time of the next gate from the MLP, gamma = 1.
/// With per_step off the network is queried once per gate and the time is
/// counted down afterwards.
class NeuralHighMpcController : public Controller {
 public:
  NeuralHighMpcController(MpcConfig cfg, Mlp model, bool per_step = true)
      : mpc_(std::move(cfg)), model_(std::move(model)), per_step_(per_step) {}

  std::string name() const override { return "highmpc"; }
  void reset() override {
    mpc_.reset();
    queried_gate_ = -1;
  }

  ControlAction act(const WorldState& world, const Course& course) override {
    const int i = world.next_gate;
    const GateState& gate = world.gates.at(static_cast<std::size_t>(i));
    const auto& pp = course.gates.at(static_cast<std::size_t>(i));
    double t;
    if (per_step_ || queried_gate_ != i) {
      t = model_.forward(make_observation(world.quad, gate));
      queried_gate_ = i;
      query_time_ = world.time;
      query_value_ = t;
    } else {
      t = std::max(query_value_ - (world.time - query_time_), mpc_.config().dt);
    }
    const MpcStep step =
        mpc_.step(world.quad, DecisionVars::single(t, 1.0), {gate}, {pp}, course.local_goal(i));
    ControlAction a;
    a.command = step.command;
    a.status = to_string(step.status);
    a.traversal_time = t;
    return a;
  }

 private:
  HighMpc mpc_;
  Mlp model_;
  bool per_step_;
  int queried_gate_ = -1;
  double query_time_ = 0.0, query_value_ = 0.0;
};

class StandardMpcController : public Controller {
 public:
  explicit StandardMpcController(MpcConfig cfg) : mpc_(std::move(cfg)) {}

  std::string name() const override { return "standard_mpc"; }
  void reset() override { mpc_.reset(); }

  ControlAction act(const WorldState& world, const Course& course) override {
    const int i = world.next_gate;
    const MpcStep step = mpc_.step(world.quad, world.gates.at(static_cast<std::size_t>(i)),
                                   course.gates.at(static_cast<std::size_t>(i)), course.local_goal(i));
    ControlAction a;
    a.command = step.command;
    a.status = to_string(step.status);
    return a;
  }

 private:
  StandardMpc mpc_;
};

class MinJerkController : public Controller {
 public:
  MinJerkController(PrimitiveConfig cfg, double control_period)
      : ctrl_(cfg), period_(control_period) {}

  std::string name() const override { return "minjerk"; }
  void reset() override { ctrl_.reset(); }

  ControlAction act(const WorldState& world, const Course& course) override {
    const int i = world.next_gate;
    const PrimitiveCommand cmd = ctrl_.step(world.quad, world.gates.at(static_cast<std::size_t>(i)),
                                            course.gates.at(static_cast<std::size_t>(i)), period_);
    ControlAction a;
    a.command = cmd.command;
    a.status = cmd.fallback ? "fallback" : "ok";
    if (cmd.plan.primitive) a.traversal_time = cmd.plan.traversal_time;
    return a;
  }

 private:
  PrimitiveController ctrl_;
  double period_;
};

// ---------------------------------------------------------------------------
// Episode

struct EpisodeOptions {
  double control_period = 0.05;
  double sim_dt = 0.01;
  double cap_factor = 3.0;
  double nominal_speed = 2.0;
  double gravity = kGravity;
  double rate_lag = 0.0;  // s; 0 applies commanded rates directly
  bool record_log = true;

  static EpisodeOptions from(const Config& c) {
    EpisodeOptions o;
    o.control_period = c.episode.mpc.control_period;
    o.sim_dt = c.episode.sim_dt;
    o.cap_factor = c.episode.cap_factor;
    o.nominal_speed = c.scenario.nominal_speed;
    o.gravity = c.episode.mpc.gravity();
    o.rate_lag = c.episode.rate_lag;
    return o;
  }
};

struct LogRow {
  double time = 0.0;
  QuadState quad;
  QuadInput command;
  int next_gate = 0;
  Vec3 gate_position = Vec3::Zero();
  double traversal_time = std::numeric_limits<double>::quiet_NaN();
};

struct TimingStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double max_ms = 0.0;
  int calls = 0;
};

struct EpisodeResult {
  std::vector<double> errors;           // per gate, m; bracketing minimum or closest approach
  std::vector<double> crossing_errors;  // interpolated at the gate plane; nan if not crossed
  std::vector<bool> crossed;
  bool success = false;
  std::string termination;
  int steps = 0;
  int solver_failures = 0;
  int fallbacks = 0;
  double peak_rate = 0.0;  // max |omega| commanded, rad/s
  std::vector<LogRow> log;
  TimingStats timing;

  int gates_crossed() const {
    return static_cast<int>(std::count(crossed.begin(), crossed.end(), true));
  }
  double mean_error() const {
    double s = 0.0;
    for (double e : errors) s += e;
    return errors.empty() ? 0.0 : s / static_cast<double>(errors.size());
  }
};

inline TimingStats timing_stats(std::vector<double> ms) {
  TimingStats t;
  t.calls = static_cast<int>(ms.size());
  if (ms.empty()) return t;
  double s = 0.0;
  for (double v : ms) s += v;
  t.mean_ms = s / static_cast<double>(ms.size());
  t.max_ms = *std::max_element(ms.begin(), ms.end());
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  t.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  return t;
}

inline int substeps(double period, double sim_dt) {
  return std::max(1, static_cast<int>(std::lround(period / sim_dt)));
}

/// Steps the plant at the control period until every gate plane is crossed,
/// the step cap is hit, or something breaks. Gate i's error is the smaller
/// quad-to-gate distance of the two control steps bracketing its crossing;
/// gates never crossed report their closest approach.
inline EpisodeResult run_episode(Controller& controller, const Course& course,
                                 const EpisodeOptions& opt) {
  course.validate();
  const std::size_t n = course.gates.size();
  const int sub = substeps(opt.control_period, opt.sim_dt);
  const double h = opt.control_period / sub;
  const int cap = static_cast<int>(
      std::ceil(opt.cap_factor * course.expected_time(opt.nominal_speed) / opt.control_period));

  EpisodeResult r;
  r.errors.assign(n, std::numeric_limits<double>::infinity());
  r.crossing_errors.assign(n, std::numeric_limits<double>::quiet_NaN());
  r.crossed.assign(n, false);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  std::vector<double> call_ms;

  controller.reset();
  WorldState w;
  w.quad = course.start;
  w.gates = course.initial_gates;
  const double lag_gain = opt.rate_lag > 0.0 ? -std::expm1(-h / opt.rate_lag) : 1.0;
  Vec3 applied_rates = Vec3::Zero();

  auto log_state = [&](const QuadInput& u, double t_tra) {
    if (!opt.record_log) return;
    LogRow row;
    row.time = w.time;
    row.quad = w.quad;
    row.command = u;
    row.next_gate = w.next_gate;
    if (w.next_gate < static_cast<int>(n)) row.gate_position = w.gates[static_cast<std::size_t>(w.next_gate)].p;
    row.traversal_time = t_tra;
    r.log.push_back(row);
  };
  for (std::size_t i = 0; i < n; ++i) closest[i] = (w.quad.p - w.gates[i].p).norm();

  for (int step = 0; step < cap; ++step) {
    ControlAction a;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      a = controller.act(w, course);
    } catch (const std::exception& e) {
      a.failed = true;
      a.status = e.what();
    }
    call_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    if (a.failed) {
      r.termination = "controller_failure: " + a.status;
      break;
    }
    if (a.status == "solver_failure") ++r.solver_failures;
    if (a.status == "fallback") ++r.fallbacks;
    r.peak_rate = std::max(r.peak_rate, a.command.rates.cwiseAbs().maxCoeff());
    log_state(a.command, a.traversal_time);

    const Vec3 prev_quad = w.quad.p;
    std::vector<Vec3> prev_gates;
    for (const auto& g : w.gates) prev_gates.push_back(g.p);

    for (std::size_t i = 0; i < n; ++i)
      w.gates[i] = advance_gate(w.gates[i], course.gates[i], opt.control_period, sub, opt.gravity);
    if (a.teleport) {
      w.quad = *a.teleport;
    } else {
      for (int k = 0; k < sub; ++k) {
        QuadInput u = a.command;
        if (opt.rate_lag > 0.0) {
          applied_rates += lag_gain * (a.command.rates - applied_rates);
          u.rates = applied_rates;
        }
        w.quad = integrate_quad(w.quad, u, h, opt.gravity);
      }
    }
    w.time += opt.control_period;
    r.steps = step + 1;

    if (!w.quad.to_vector().allFinite()) {
      r.termination = "diverged";
      break;
    }
    for (std::size_t i = 0; i < n; ++i)
      closest[i] = std::min(closest[i], (w.quad.p - w.gates[i].p).norm());
    while (w.next_gate < static_cast<int>(n)) {
      const std::size_t i = static_cast<std::size_t>(w.next_gate);
      const double plane = course.gates[i].anchor.x();
      if (w.quad.p.x() < plane) break;
      const double d0 = (prev_quad - prev_gates[i]).norm();
      const double d1 = (w.quad.p - w.gates[i].p).norm();
      r.errors[i] = std::min(d0, d1);
      const double dx = w.quad.p.x() - prev_quad.x();
      const double s = dx > 0.0 ? std::clamp((plane - prev_quad.x()) / dx, 0.0, 1.0) : 1.0;
      const Vec3 pq = prev_quad + s * (w.quad.p - prev_quad);
      const Vec3 pg = prev_gates[i] + s * (w.gates[i].p - prev_gates[i]);
      r.crossing_errors[i] = (pq - pg).norm();
      r.crossed[i] = true;
      ++w.next_gate;
    }
    if (w.next_gate == static_cast<int>(n)) {
      r.termination = "all_gates";
      break;
    }
    if (w.quad.p.z() < 0.0) {
      r.termination = "ground";
      break;
    }
  }
  if (r.termination.empty()) r.termination = "step_cap";
  log_state(QuadInput::hover(opt.gravity), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < n; ++i)
    if (!r.crossed[i]) r.errors[i] = closest[i];
  r.success = all_below_threshold(r.errors);
  r.timing = timing_stats(std::move(call_ms));
  return r;
}

inline CsvTable episode_log_table(const EpisodeResult& r) {
  CsvTable t({"time", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "thrust", "wx", "wy",
              "wz", "next_gate", "gate_x", "gate_y", "gate_z", "t_tra"});
  for (const auto& row : r.log) {
    t.row().add(row.time);
    for (int k = 0; k < 3; ++k) t.add(row.quad.p(k));
    for (int k = 0; k < 4; ++k) t.add(row.quad.q(k));
    for (int k = 0; k < 3; ++k) t.add(row.quad.v(k));
    t.add(row.command.thrust);
    for (int k = 0; k < 3; ++k) t.add(row.command.rates(k));
    t.add(row.next_gate);
    for (int k = 0; k < 3; ++k) t.add(row.gate_position(k));
    t.add(row.traversal_time);
  }
  return t;
}

inline json episode_json(const EpisodeResult& r) {
  json crossed = json::array();
  for (bool b : r.crossed) crossed.push_back(b);
  auto numbers = [](const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
  };
  return json{{"errors", numbers(r.errors)},
              {"crossing_errors", numbers(r.crossing_errors)},
              {"crossed", crossed},
              {"success", r.success},
              {"termination", r.termination},
              {"steps", r.steps},
              {"solver_failures", r.solver_failures},
              {"fallbacks", r.fallbacks},
              {"peak_rate", r.peak_rate},
              {"timing_ms",
               {{"mean", r.timing.mean_ms},
                {"median", r.timing.median_ms},
                {"max", r.timing.max_ms},
                {"calls", r.timing.calls}}}};
}

// ---------------------------------------------------------------------------
// Single swinging gate course for the neural controller

/// Quad hovering a random distance before one real-world gate; theta_0 from
/// the scenario range. Keyed by (seed, trial).
inline Course single_gate_course(const Config& c, std::uint64_t seed, std::size_t trial) {
  Rng rng = stream(seed, 0x516e, trial);
  std::uniform_real_distribution<double> dist(c.episode.start_distance_min, c.episode.start_distance_max);
  std::uniform_real_distribution<double> angle(c.scenario.theta_min, c.scenario.theta_max);
  const GateSpec spec = c.scenario.gates.front();
  Course course;
  course.gates = {spec.params()};
  course.initial_gates = {gate_pose(angle(rng), 0.0, course.gates[0])};
  const Vec3 rest = course.gates[0].rest_center();
  course.start = QuadState::hover_at(Vec3(spec.anchor.x() - dist(rng), rest.y(), rest.z()));
  course.goal_offset = c.episode.goal_offset;
  return course;
}

}  // namespace highmpc::harness
