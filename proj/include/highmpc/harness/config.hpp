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

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "highmpc/baselines.hpp"
#include "highmpc/neural_policy.hpp"
#include "highmpc/trajopt.hpp"
#include "json.hpp"

namespace highmpc::harness {

using nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Schema

struct GateSpec {
  Vec3 anchor = Vec3(3.0, 0.0, 3.45);
  double damping = 0.2;
  std::optional<double> arm_length, cm_length, mass, inertia;  // override the lumped model

  static GateSpec at(const Vec3& a) {
    GateSpec g;
    g.anchor = a;
    return g;
  }

  PendulumParams params() const {
    PendulumParams pp = PendulumParams::real_world(anchor, damping);
    if (arm_length) pp.arm_length = *arm_length;
    if (cm_length) pp.cm_length = *cm_length;
    if (mass) pp.mass = *mass;
    if (inertia) pp.inertia = *inertia;
    pp.validate();
    return pp;
  }
};

struct ScenarioConfig {
  std::vector<GateSpec> gates = {GateSpec::at(Vec3(3.0, 0.0, 3.45)), GateSpec::at(Vec3(6.0, 0.0, 3.45)),
                                 GateSpec::at(Vec3(9.0, 0.0, 3.45))};
  double theta_min = -std::numbers::pi / 2;  // rad, initial swing angle range
  double theta_max = std::numbers::pi / 2;
  std::vector<double> initial_angles = {0.5, -0.8, 1.0};  // rad, fixed planning context
  Vec3 start_position = Vec3(0.0, 0.0, 2.0);
  Vec3 start_velocity = Vec3::Zero();
  Vec3 goal_position = Vec3(12.0, 0.0, 2.0);
  double lambda = 0.1;        // 1/s, reward regularizer on traversal times
  double nominal_speed = 2.0;  // m/s, heuristic traversal times

  std::vector<PendulumParams> pendulums() const {
    std::vector<PendulumParams> out;
    for (const auto& g : gates) out.push_back(g.params());
    return out;
  }
};

struct GaussianConfig {
  double beta = 10.0;
  int samples = 30;
  int iterations = 30;
  double tolerance = 1e-3;
  int patience = 5;
  bool stop_on_convergence = false;
  double variance_floor = 1e-6;
  double time_variance = 0.25;   // s^2
  double weight_variance = 0.09;
  double max_failure_fraction = 0.5;
};

struct LinearConfig {
  double beta = 3.0;
  int samples = 300;
  int iterations = 30;
  double ridge = 0.1;
  int features = 40;
  double bandwidth = 2.236;  // rad
  std::uint64_t rff_seed = 7;
  int init_contexts = 1000;
  double time_variance = 0.25;
  double weight_variance = 0.09;
  double variance_floor = 1e-6;
  int trials = 100;
  double max_failure_fraction = 0.5;
};

struct NnReset {
  double distance_min = 1.5;  // m, along x before the gate plane
  double distance_max = 9.0;
  double lateral = 1.0;       // m, |y| bound
  double height_min = 1.0;
  double height_max = 3.0;
  double speed_x_min = 0.0;   // m/s
  double speed_x_max = 6.0;
  double speed_yz = 1.0;      // m/s, |v_y|, |v_z| bound
  double tilt = 0.3;          // rad, roll/pitch bound
  double theta_dot = 1.0;     // rad/s, |initial swing rate| bound
};

struct NnConfig {
  int samples = 4000;
  MpcConfig mpc = [] {
    MpcConfig c;
    c.horizon_time = 2.0;
    c.dt = 0.1;
    c.control_period = 0.1;
    c.weights.pass(7) = c.weights.follow(7) = 0.0;  // forward speed left free at the gate
    return c;
  }();
  double sim_dt = 0.01;
  int step_cap = 40;
  int search_samples = 10;
  int search_iterations = 3;
  int first_iterations = 6;
  double search_beta = 10.0;
  double initial_variance = 0.25;  // s^2, first step of an episode
  double step_variance = 0.0225;   // s^2, warm-started steps
  NnReset reset;
  MlpTrainOptions train;
  std::string model;  // trained MLP JSON used by sweep / run-episode; empty = none
};

struct EpisodeConfig {
  MpcConfig mpc = [] {
    MpcConfig c;
    c.horizon_time = 2.0;
    c.dt = 0.1;
    c.control_period = 0.05;
    c.weights.pass(7) = c.weights.follow(7) = 0.0;
    return c;
  }();
  double sim_dt = 0.01;
  double cap_factor = 3.0;
  double rate_lag = 0.0;     // s, first-order body-rate lag in the plant; 0 = none
  double goal_offset = 2.0;  // m, local hover goal behind the active gate
  int trials = 20;           // single-gate neural evaluation
  double start_distance_min = 3.0;
  double start_distance_max = 6.0;
};

struct SweepConfig {
  std::vector<double> offsets = {1.0, 3.0, 5.0, 7.0, 9.0};
  std::vector<double> velocities = {0.0, 2.0, 4.0, 6.0};
  int trials = 5;
  int gates = 5;
  double start_height = 2.0;
  double anchor_height = 3.45;
};

struct Config {
  std::uint64_t seed = 1;
  int workers = 1;
  ScenarioConfig scenario;
  MpcConfig mpc;  // planning experiments
  GaussianConfig gaussian;
  LinearConfig linear;
  NnConfig nn;
  EpisodeConfig episode;
  SweepConfig sweep;
  PrimitiveConfig primitive;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Value conversion

namespace detail {

template <typename T>
struct Conv;

template <>
struct Conv<double> {
  static void read(const json& j, double& out, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    out = j.get<double>();
  }
  static json write(double v) { return v; }
};

template <>
struct Conv<int> {
  static void read(const json& j, int& out, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
    out = j.get<int>();
  }
  static json write(int v) { return v; }
};

template <>
struct Conv<std::uint64_t> {
  static void read(const json& j, std::uint64_t& out, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() < 0)
      throw ConfigError(path + ": expected a non-negative integer");
    out = j.get<std::uint64_t>();
  }
  static json write(std::uint64_t v) { return v; }
};

template <>
struct Conv<bool> {
  static void read(const json& j, bool& out, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path + ": expected true or false");
    out = j.get<bool>();
  }
  static json write(bool v) { return v; }
};

template <>
struct Conv<std::vector<double>> {
  static void read(const json& j, std::vector<double>& out, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
    out.clear();
    for (const auto& e : j) {
      if (!e.is_number()) throw ConfigError(path + ": expected an array of numbers");
      out.push_back(e.get<double>());
    }
  }
  static json write(const std::vector<double>& v) { return v; }
};

template <>
struct Conv<std::string> {
  static void read(const json& j, std::string& out, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path + ": expected a string");
    out = j.get<std::string>();
  }
  static json write(const std::string& v) { return v; }
};

template <int N>
struct Conv<Eigen::Matrix<double, N, 1>> {
  using V = Eigen::Matrix<double, N, 1>;
  static void read(const json& j, V& out, const std::string& path) {
    if (!j.is_array() || static_cast<int>(j.size()) != N)
      throw ConfigError(path + ": expected " + std::to_string(N) + " numbers");
    for (int i = 0; i < N; ++i) {
      if (!j[i].is_number()) throw ConfigError(path + ": expected numbers");
      out(i) = j[i].get<double>();
    }
  }
  static json write(const V& v) {
    json a = json::array();
    for (int i = 0; i < N; ++i) a.push_back(v(i));
    return a;
  }
};

}  // namespace detail

/// Reads keys from one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : path_(std::move(path)) {
    if (j.is_null()) {
      j_ = json::object();
    } else if (!j.is_object()) {
      throw ConfigError(path_ + ": expected an object");
    } else {
      j_ = j;
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (j_.contains(key)) detail::Conv<T>::read(j_.at(key), out, child(key));
  }

  template <typename T>
  void read(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (j_.contains(key) && !j_.at(key).is_null()) {
      T v{};
      detail::Conv<T>::read(j_.at(key), v, child(key));
      out = v;
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.contains(key) ? j_.at(key) : json(), child(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key: " + child(it.key()));
  }

 private:
  json j_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Readers

inline void read_solver(Section s, SolverOptions& o) {
  s.read("max_iterations", o.max_iterations);
  s.read("armijo_factor", o.armijo_factor);
  s.read("armijo_c1", o.armijo_c1);
  s.read("max_line_search", o.max_line_search);
  s.read("step_tolerance", o.step_tolerance);
  s.read("gradient_tolerance", o.gradient_tolerance);
  s.read("gravity", o.gravity);
  s.read("regularization_max", o.regularization_max);
  s.finish();
}

inline void read_mpc(Section s, MpcConfig& c) {
  s.read("horizon_time", c.horizon_time);
  s.read("dt", c.dt);
  s.read("control_period", c.control_period);
  {
    Section w = s.sub("weights");
    w.read("pass", c.weights.pass);
    w.read("follow", c.weights.follow);
    w.read("goal", c.weights.goal);
    w.read("input", c.weights.input);
    w.read("alpha", c.weights.alpha);
    w.read("input_ref", c.weights.input_ref);
    w.finish();
  }
  {
    Section b = s.sub("bounds");
    b.read("lower", c.bounds.lower);
    b.read("upper", c.bounds.upper);
    b.finish();
  }
  read_solver(s.sub("solver"), c.solver);
  s.finish();
}

inline void read_gate(Section s, GateSpec& g) {
  s.read("anchor", g.anchor);
  s.read("damping", g.damping);
  s.read("arm_length", g.arm_length);
  s.read("cm_length", g.cm_length);
  s.read("mass", g.mass);
  s.read("inertia", g.inertia);
  s.finish();
}

inline void read_scenario(Section s, ScenarioConfig& c) {
  if (const json* gates = s.raw("gates")) {
    if (!gates->is_array() || gates->empty())
      throw ConfigError(s.child("gates") + ": expected a non-empty array");
    c.gates.clear();
    for (std::size_t i = 0; i < gates->size(); ++i) {
      GateSpec g;
      read_gate(Section((*gates)[i], s.child("gates[" + std::to_string(i) + "]")), g);
      c.gates.push_back(g);
    }
  }
  s.read("theta_min", c.theta_min);
  s.read("theta_max", c.theta_max);
  s.read("initial_angles", c.initial_angles);
  s.read("start_position", c.start_position);
  s.read("start_velocity", c.start_velocity);
  s.read("goal_position", c.goal_position);
  s.read("lambda", c.lambda);
  s.read("nominal_speed", c.nominal_speed);
  s.finish();
}

inline void read_gaussian(Section s, GaussianConfig& c) {
  s.read("beta", c.beta);
  s.read("samples", c.samples);
  s.read("iterations", c.iterations);
  s.read("tolerance", c.tolerance);
  s.read("patience", c.patience);
  s.read("stop_on_convergence", c.stop_on_convergence);
  s.read("variance_floor", c.variance_floor);
  s.read("time_variance", c.time_variance);
  s.read("weight_variance", c.weight_variance);
  s.read("max_failure_fraction", c.max_failure_fraction);
  s.finish();
}

inline void read_linear(Section s, LinearConfig& c) {
  s.read("beta", c.beta);
  s.read("samples", c.samples);
  s.read("iterations", c.iterations);
  s.read("ridge", c.ridge);
  s.read("features", c.features);
  s.read("bandwidth", c.bandwidth);
  s.read("rff_seed", c.rff_seed);
  s.read("init_contexts", c.init_contexts);
  s.read("time_variance", c.time_variance);
  s.read("weight_variance", c.weight_variance);
  s.read("variance_floor", c.variance_floor);
  s.read("trials", c.trials);
  s.read("max_failure_fraction", c.max_failure_fraction);
  s.finish();
}

inline void read_nn(Section s, NnConfig& c) {
  s.read("samples", c.samples);
  read_mpc(s.sub("mpc"), c.mpc);
  s.read("sim_dt", c.sim_dt);
  s.read("step_cap", c.step_cap);
  s.read("search_samples", c.search_samples);
  s.read("search_iterations", c.search_iterations);
  s.read("first_iterations", c.first_iterations);
  s.read("search_beta", c.search_beta);
  s.read("initial_variance", c.initial_variance);
  s.read("step_variance", c.step_variance);
  s.read("model", c.model);
  {
    Section r = s.sub("reset");
    r.read("distance_min", c.reset.distance_min);
    r.read("distance_max", c.reset.distance_max);
    r.read("lateral", c.reset.lateral);
    r.read("height_min", c.reset.height_min);
    r.read("height_max", c.reset.height_max);
    r.read("speed_x_min", c.reset.speed_x_min);
    r.read("speed_x_max", c.reset.speed_x_max);
    r.read("speed_yz", c.reset.speed_yz);
    r.read("tilt", c.reset.tilt);
    r.read("theta_dot", c.reset.theta_dot);
    r.finish();
  }
  {
    Section t = s.sub("train");
    t.read("learning_rate", c.train.learning_rate);
    t.read("momentum", c.train.momentum);
    t.read("batch_size", c.train.batch_size);
    t.read("epochs", c.train.epochs);
    t.read("validation_fraction", c.train.validation_fraction);
    t.read("patience", c.train.patience);
    t.finish();
  }
  s.finish();
}

inline void read_episode(Section s, EpisodeConfig& c) {
  read_mpc(s.sub("mpc"), c.mpc);
  s.read("sim_dt", c.sim_dt);
  s.read("cap_factor", c.cap_factor);
  s.read("rate_lag", c.rate_lag);
  s.read("goal_offset", c.goal_offset);
  s.read("trials", c.trials);
  s.read("start_distance_min", c.start_distance_min);
  s.read("start_distance_max", c.start_distance_max);
  s.finish();
}

inline void read_sweep(Section s, SweepConfig& c) {
  s.read("offsets", c.offsets);
  s.read("velocities", c.velocities);
  s.read("trials", c.trials);
  s.read("gates", c.gates);
  s.read("start_height", c.start_height);
  s.read("anchor_height", c.anchor_height);
  s.finish();
}

inline void read_primitive(Section s, PrimitiveConfig& c) {
  s.read("t_min", c.t_min);
  s.read("t_max", c.t_max);
  s.read("t_step", c.t_step);
  s.read("check_nodes", c.check_nodes);
  s.read("thrust_min", c.thrust_min);
  s.read("thrust_max", c.thrust_max);
  s.read("accel_max", c.accel_max);
  s.read("attitude_gain", c.attitude_gain);
  s.read("yaw_gain", c.yaw_gain);
  s.read("rate_limit", c.rate_limit);
  s.read("hold_kp", c.hold_kp);
  s.read("hold_kd", c.hold_kd);
  s.read("gravity", c.gravity);
  s.read("pendulum_dt", c.pendulum_dt);
  s.finish();
}

// ---------------------------------------------------------------------------
// Writers

inline json write_mpc(const MpcConfig& c) {
  using detail::Conv;
  const auto& o = c.solver;
  return json{
      {"horizon_time", c.horizon_time},
      {"dt", c.dt},
      {"control_period", c.control_period},
      {"weights",
       {{"pass", Conv<StateVector>::write(c.weights.pass)},
        {"follow", Conv<StateVector>::write(c.weights.follow)},
        {"goal", Conv<StateVector>::write(c.weights.goal)},
        {"input", Conv<InputVector>::write(c.weights.input)},
        {"alpha", c.weights.alpha},
        {"input_ref", Conv<InputVector>::write(c.weights.input_ref)}}},
      {"bounds",
       {{"lower", Conv<InputVector>::write(c.bounds.lower)},
        {"upper", Conv<InputVector>::write(c.bounds.upper)}}},
      {"solver",
       {{"max_iterations", o.max_iterations},
        {"armijo_factor", o.armijo_factor},
        {"armijo_c1", o.armijo_c1},
        {"max_line_search", o.max_line_search},
        {"step_tolerance", o.step_tolerance},
        {"gradient_tolerance", o.gradient_tolerance},
        {"gravity", o.gravity},
        {"regularization_max", o.regularization_max}}}};
}

inline json to_json(const Config& c) {
  using detail::Conv;
  json gates = json::array();
  for (const auto& g : c.scenario.gates) {
    json e{{"anchor", Conv<Vec3>::write(g.anchor)}, {"damping", g.damping}};
    if (g.arm_length) e["arm_length"] = *g.arm_length;
    if (g.cm_length) e["cm_length"] = *g.cm_length;
    if (g.mass) e["mass"] = *g.mass;
    if (g.inertia) e["inertia"] = *g.inertia;
    gates.push_back(e);
  }
  const auto& s = c.scenario;
  const auto& gs = c.gaussian;
  const auto& ln = c.linear;
  const auto& nn = c.nn;
  const auto& ep = c.episode;
  const auto& sw = c.sweep;
  const auto& pr = c.primitive;
  return json{
      {"seed", c.seed},
      {"workers", c.workers},
      {"scenario",
       {{"gates", gates},
        {"theta_min", s.theta_min},
        {"theta_max", s.theta_max},
        {"initial_angles", s.initial_angles},
        {"start_position", Conv<Vec3>::write(s.start_position)},
        {"start_velocity", Conv<Vec3>::write(s.start_velocity)},
        {"goal_position", Conv<Vec3>::write(s.goal_position)},
        {"lambda", s.lambda},
        {"nominal_speed", s.nominal_speed}}},
      {"mpc", write_mpc(c.mpc)},
      {"gaussian",
       {{"beta", gs.beta},
        {"samples", gs.samples},
        {"iterations", gs.iterations},
        {"tolerance", gs.tolerance},
        {"patience", gs.patience},
        {"stop_on_convergence", gs.stop_on_convergence},
        {"variance_floor", gs.variance_floor},
        {"time_variance", gs.time_variance},
        {"weight_variance", gs.weight_variance},
        {"max_failure_fraction", gs.max_failure_fraction}}},
      {"linear",
       {{"beta", ln.beta},
        {"samples", ln.samples},
        {"iterations", ln.iterations},
        {"ridge", ln.ridge},
        {"features", ln.features},
        {"bandwidth", ln.bandwidth},
        {"rff_seed", ln.rff_seed},
        {"init_contexts", ln.init_contexts},
        {"time_variance", ln.time_variance},
        {"weight_variance", ln.weight_variance},
        {"variance_floor", ln.variance_floor},
        {"trials", ln.trials},
        {"max_failure_fraction", ln.max_failure_fraction}}},
      {"nn",
       {{"samples", nn.samples},
        {"mpc", write_mpc(nn.mpc)},
        {"sim_dt", nn.sim_dt},
        {"step_cap", nn.step_cap},
        {"search_samples", nn.search_samples},
        {"search_iterations", nn.search_iterations},
        {"first_iterations", nn.first_iterations},
        {"search_beta", nn.search_beta},
        {"initial_variance", nn.initial_variance},
        {"step_variance", nn.step_variance},
        {"model", nn.model},
        {"reset",
         {{"distance_min", nn.reset.distance_min},
          {"distance_max", nn.reset.distance_max},
          {"lateral", nn.reset.lateral},
          {"height_min", nn.reset.height_min},
          {"height_max", nn.reset.height_max},
          {"speed_x_min", nn.reset.speed_x_min},
          {"speed_x_max", nn.reset.speed_x_max},
          {"speed_yz", nn.reset.speed_yz},
          {"tilt", nn.reset.tilt},
          {"theta_dot", nn.reset.theta_dot}}},
        {"train",
         {{"learning_rate", nn.train.learning_rate},
          {"momentum", nn.train.momentum},
          {"batch_size", nn.train.batch_size},
          {"epochs", nn.train.epochs},
          {"validation_fraction", nn.train.validation_fraction},
          {"patience", nn.train.patience}}}}},
      {"episode",
       {{"mpc", write_mpc(ep.mpc)},
        {"sim_dt", ep.sim_dt},
        {"cap_factor", ep.cap_factor},
        {"rate_lag", ep.rate_lag},
        {"goal_offset", ep.goal_offset},
        {"trials", ep.trials},
        {"start_distance_min", ep.start_distance_min},
        {"start_distance_max", ep.start_distance_max}}},
      {"sweep",
       {{"offsets", sw.offsets},
        {"velocities", sw.velocities},
        {"trials", sw.trials},
        {"gates", sw.gates},
        {"start_height", sw.start_height},
        {"anchor_height", sw.anchor_height}}},
      {"primitive",
       {{"t_min", pr.t_min},
        {"t_max", pr.t_max},
        {"t_step", pr.t_step},
        {"check_nodes", pr.check_nodes},
        {"thrust_min", pr.thrust_min},
        {"thrust_max", pr.thrust_max},
        {"accel_max", pr.accel_max},
        {"attitude_gain", pr.attitude_gain},
        {"yaw_gain", pr.yaw_gain},
        {"rate_limit", pr.rate_limit},
        {"hold_kp", pr.hold_kp},
        {"hold_kd", pr.hold_kd},
        {"gravity", pr.gravity},
        {"pendulum_dt", pr.pendulum_dt}}}};
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline void check_mpc(const MpcConfig& c, const std::string& path) {
  check(c.dt > 0.0, path + ".dt must be positive");
  check(c.horizon_time >= c.dt, path + ".horizon_time must be >= dt");
  check(c.control_period > 0.0, path + ".control_period must be positive");
  check(c.solver.max_iterations >= 1, path + ".solver.max_iterations must be >= 1");
  try {
    c.weights.validate();
    c.bounds.validate();
  } catch (const DomainError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace detail

inline void Config::validate() const {
  using detail::check;
  check(workers >= 1, "workers must be >= 1");
  check(!scenario.gates.empty(), "scenario.gates must not be empty");
  for (std::size_t i = 1; i < scenario.gates.size(); ++i)
    check(scenario.gates[i].anchor.x() > scenario.gates[i - 1].anchor.x(),
          "scenario.gates must be ordered by increasing anchor x");
  try {
    for (const auto& g : scenario.gates) g.params();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("scenario.gates: ") + e.what());
  }
  check(scenario.theta_min <= scenario.theta_max, "scenario.theta_min > theta_max");
  check(scenario.initial_angles.empty() || scenario.initial_angles.size() == scenario.gates.size(),
        "scenario.initial_angles needs one angle per gate");
  check(scenario.lambda >= 0.0, "scenario.lambda must be >= 0");
  check(scenario.nominal_speed > 0.0, "scenario.nominal_speed must be positive");
  detail::check_mpc(mpc, "mpc");
  detail::check_mpc(nn.mpc, "nn.mpc");
  detail::check_mpc(episode.mpc, "episode.mpc");
  check(gaussian.beta > 0.0 && linear.beta > 0.0 && nn.search_beta > 0.0, "beta must be positive");
  check(gaussian.samples >= 2 && linear.samples >= 2 && nn.search_samples >= 2,
        "sample counts must be >= 2");
  check(gaussian.iterations >= 1 && linear.iterations >= 1, "iterations must be >= 1");
  check(gaussian.time_variance > 0.0 && gaussian.weight_variance > 0.0 &&
            linear.time_variance > 0.0 && linear.weight_variance > 0.0,
        "policy variances must be positive");
  check(linear.features >= 1 && linear.bandwidth > 0.0 && linear.ridge > 0.0,
        "linear.features, bandwidth and ridge must be positive");
  check(linear.trials >= 1 && linear.init_contexts >= 1, "linear.trials must be >= 1");
  check(nn.samples >= 1, "nn.samples must be >= 1");
  check(nn.sim_dt > 0.0 && episode.sim_dt > 0.0, "sim_dt must be positive");
  check(nn.step_cap >= 1, "nn.step_cap must be >= 1");
  check(nn.reset.distance_min > 0.0 && nn.reset.distance_min <= nn.reset.distance_max,
        "nn.reset distance range invalid");
  check(nn.train.batch_size >= 1 && nn.train.epochs >= 1, "nn.train batch/epochs must be >= 1");
  check(episode.cap_factor > 0.0, "episode.cap_factor must be positive");
  check(episode.rate_lag >= 0.0, "episode.rate_lag must be >= 0");
  check(episode.trials >= 1, "episode.trials must be >= 1");
  check(!sweep.offsets.empty() && !sweep.velocities.empty(), "sweep axes must be non-empty");
  for (double d : sweep.offsets) check(d > 0.0, "sweep.offsets must be positive");
  check(sweep.trials >= 1 && sweep.gates >= 1, "sweep.trials and sweep.gates must be >= 1");
  check(primitive.t_min > 0.0 && primitive.t_step > 0.0 && primitive.t_max >= primitive.t_min,
        "primitive time grid invalid");
  check(primitive.check_nodes >= 2, "primitive.check_nodes must be >= 2");
}

// ---------------------------------------------------------------------------
// Loading

/// JSON with // and /* */ comments. Missing keys keep their defaults.
inline Config parse_config(const std::string& text, const std::string& origin = "config") {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  Config c;
  Section root(j, "");
  root.read("seed", c.seed);
  root.read("workers", c.workers);
  read_scenario(root.sub("scenario"), c.scenario);
  read_mpc(root.sub("mpc"), c.mpc);
  read_gaussian(root.sub("gaussian"), c.gaussian);
  read_linear(root.sub("linear"), c.linear);
  read_nn(root.sub("nn"), c.nn);
  read_episode(root.sub("episode"), c.episode);
  read_sweep(root.sub("sweep"), c.sweep);
  read_primitive(root.sub("primitive"), c.primitive);
  root.finish();
  c.validate();
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

inline std::string resolved_text(const Config& c) { return to_json(c).dump(2) + "\n"; }

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const Config& c) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a(resolved_text(c));
  return os.str();
}

}  // namespace highmpc::harness
