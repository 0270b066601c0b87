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
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "highmpc/harness/config.hpp"
#include "highmpc/harness/io.hpp"
#include "highmpc/parallel.hpp"
#include "highmpc/policy_search.hpp"
#include "highmpc/trajopt.hpp"

namespace highmpc::harness {

inline constexpr double kSuccessThreshold = 0.5;  // m

inline bool all_below_threshold(const std::vector<double>& errors) {
  return std::all_of(errors.begin(), errors.end(),
                     [](double e) { return e < kSuccessThreshold; });
}

// ---------------------------------------------------------------------------
// Open-loop planning task: one MPC solve from a fixed start through all gates.

struct PlanningTask {
  std::vector<PendulumParams> gates;
  std::vector<GateState> initial;  // gate states at t = 0
  QuadState start;
  QuadState goal;
  MpcConfig mpc;
  double lambda = 0.1;

  int horizon() const { return mpc.horizon(); }
  double max_time() const { return (horizon() - 1) * mpc.dt; }
};

inline PlanningTask make_planning_task(const Config& c, const Eigen::VectorXd& angles) {
  PlanningTask t;
  t.gates = c.scenario.pendulums();
  if (angles.size() != static_cast<Eigen::Index>(t.gates.size()))
    throw DomainError("make_planning_task: one angle per gate required");
  for (std::size_t i = 0; i < t.gates.size(); ++i)
    t.initial.push_back(gate_pose(angles(static_cast<Eigen::Index>(i)), 0.0, t.gates[i]));
  t.start = QuadState::hover_at(c.scenario.start_position);
  t.start.v = c.scenario.start_velocity;
  t.goal = QuadState::hover_at(c.scenario.goal_position);
  t.mpc = c.mpc;
  t.lambda = c.scenario.lambda;
  return t;
}

inline Eigen::VectorXd fixed_angles(const Config& c) {
  const auto& a = c.scenario.initial_angles;
  if (a.empty()) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.scenario.gates.size()));
  return Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

struct PlanOutcome {
  TraversalReward reward;
  Trajectory trajectory;
  std::vector<std::vector<GateState>> gate_trajectories;
  bool solved = false;
};

/// Solves MPC(z) cold from the task start and scores it.
inline PlanOutcome evaluate_plan(HighMpc& mpc, const PlanningTask& task, const Eigen::VectorXd& z) {
  PlanOutcome out;
  const DecisionVars dv = DecisionVars::from_vector(z);
  const auto& cfg = mpc.config();
  out.gate_trajectories =
      predict_gates(dv, task.initial, task.gates, cfg.horizon(), cfg.dt, cfg.gravity());
  try {
    out.trajectory = mpc.plan(task.start, dv, task.initial, task.gates, task.goal);
    out.solved = true;
  } catch (const SolverError&) {
    out.reward.reward = -std::numeric_limits<double>::infinity();
    out.reward.errors.assign(z.size() / 2, std::numeric_limits<double>::infinity());
    return out;
  }
  out.reward = traversal_reward(out.trajectory, dv, out.gate_trajectories, cfg.dt, task.lambda);
  return out;
}

/// One HighMpc per worker slot.
class SolverPool {
 public:
  SolverPool(const MpcConfig& cfg, int workers) {
    for (int w = 0; w < std::max(1, workers); ++w) pool_.push_back(std::make_unique<HighMpc>(cfg));
  }
  HighMpc& at(int worker) { return *pool_.at(static_cast<std::size_t>(worker)); }

 private:
  std::vector<std::unique_ptr<HighMpc>> pool_;
};

inline std::function<void(Eigen::VectorXd&)> planning_repair(const MpcConfig& mpc) {
  const double lo = mpc.dt, hi = (mpc.horizon() - 1) * mpc.dt;
  return [lo, hi](Eigen::VectorXd& z) { repair_decision_vector(z, lo, hi); };
}

// ---------------------------------------------------------------------------
// Baseline selectors

/// t_i = |gate center at its initial pose - start| / speed, capped
/// inside the horizon; gamma_i = 1.
inline Eigen::VectorXd heuristic_z(const PlanningTask& task, double nominal_speed) {
  const Eigen::Index n = static_cast<Eigen::Index>(task.gates.size());
  Eigen::VectorXd z(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(2 * i) = (task.initial[static_cast<std::size_t>(i)].p - task.start.p).norm() / nominal_speed;
    z(2 * i + 1) = 1.0;
  }
  repair_decision_vector(z, task.mpc.dt, task.max_time());
  return z;
}

/// t_i ~ U(0, t_H], sorted; gamma_i = 1.
inline Eigen::VectorXd random_z(const PlanningTask& task, Rng& rng) {
  const Eigen::Index n = static_cast<Eigen::Index>(task.gates.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> times(static_cast<std::size_t>(n));
  for (auto& t : times) t = task.mpc.horizon_time * (1.0 - u(rng));
  std::sort(times.begin(), times.end());
  Eigen::VectorXd z(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(2 * i) = times[static_cast<std::size_t>(i)];
    z(2 * i + 1) = 1.0;
  }
  repair_decision_vector(z, 1e-9, task.mpc.horizon_time);
  return z;
}

/// Times spread evenly over the horizon, unit follow weights.
inline Eigen::VectorXd spread_z(std::size_t gates, double horizon_time) {
  const Eigen::Index n = static_cast<Eigen::Index>(gates);
  Eigen::VectorXd z(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(2 * i) = horizon_time * static_cast<double>(i + 1) / static_cast<double>(n + 1);
    z(2 * i + 1) = 1.0;
  }
  return z;
}

inline Eigen::VectorXd initial_variance(std::size_t gates, double time_var, double weight_var) {
  Eigen::VectorXd v(2 * static_cast<Eigen::Index>(gates));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(gates); ++i) {
    v(2 * i) = time_var;
    v(2 * i + 1) = weight_var;
  }
  return v;
}

inline ContextSampler context_sampler(const Config& c) {
  const double lo = c.scenario.theta_min, hi = c.scenario.theta_max;
  const Eigen::Index n = static_cast<Eigen::Index>(c.scenario.gates.size());
  return [lo, hi, n](Rng& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s(i) = lo == hi ? lo : u(rng);
    return s;
  };
}

// ---------------------------------------------------------------------------
// Gaussian planning experiment

struct GaussianPlanning {
  GaussianSearchResult search;
  GaussianPolicy initial;
  PlanOutcome final_plan;  // plan from the final mean
};

inline SearchOptions gaussian_options(const Config& c) {
  SearchOptions o;
  o.beta = c.gaussian.beta;
  o.samples = c.gaussian.samples;
  o.max_iterations = c.gaussian.iterations;
  o.tolerance = c.gaussian.tolerance;
  o.patience = c.gaussian.patience;
  o.stop_on_convergence = c.gaussian.stop_on_convergence;
  o.variance_floor = c.gaussian.variance_floor;
  o.max_failure_fraction = c.gaussian.max_failure_fraction;
  o.seed = c.seed;
  o.workers = c.workers;
  o.repair = planning_repair(c.mpc);
  return o;
}

inline GaussianPlanning train_gaussian_planning(const Config& c) {
  const PlanningTask task = make_planning_task(c, fixed_angles(c));
  SolverPool pool(task.mpc, c.workers);
  GaussianPlanning out;
  out.initial.mean = spread_z(task.gates.size(), task.mpc.horizon_time);
  out.initial.variance =
      initial_variance(task.gates.size(), c.gaussian.time_variance, c.gaussian.weight_variance);
  const SampleEvaluator eval = [&](int w, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
    const PlanOutcome p = evaluate_plan(pool.at(w), task, z);
    return SampleOutcome{p.reward.reward, p.solved};
  };
  out.search = train_gaussian(eval, out.initial, gaussian_options(c));
  Eigen::VectorXd z = out.search.policy.mean;
  planning_repair(task.mpc)(z);
  out.final_plan = evaluate_plan(pool.at(0), task, z);
  return out;
}

// ---------------------------------------------------------------------------
// Linear-Gaussian contextual policy

inline RffSpec make_rff(const Config& c) {
  return RffSpec::random(static_cast<int>(c.scenario.gates.size()), c.linear.features,
                         c.linear.bandwidth, c.linear.rff_seed);
}

/// W fitted to the evenly spread z over contexts from rho, so the initial
/// mean is constant in the context; covariance from the config.
inline LinearGaussianPolicy initial_linear_policy(const Config& c) {
  const std::size_t n = c.scenario.gates.size();
  const RffSpec rff = make_rff(c);
  const Eigen::VectorXd z0 = spread_z(n, c.mpc.horizon_time);
  const ContextSampler rho = context_sampler(c);
  std::vector<Eigen::VectorXd> s, z;
  Rng rng = stream(c.seed, 0x1a17);
  for (int i = 0; i < c.linear.init_contexts; ++i) {
    s.push_back(rho(rng));
    z.push_back(z0);
  }
  LinearGaussianPolicy p = update_linear_gaussian(
      z, s, Eigen::VectorXd::Ones(c.linear.init_contexts), rff, 1e-5, c.linear.variance_floor);
  p.covariance = initial_variance(n, c.linear.time_variance, c.linear.weight_variance).asDiagonal();
  return p;
}

inline SearchOptions linear_options(const Config& c) {
  SearchOptions o;
  o.beta = c.linear.beta;
  o.samples = c.linear.samples;
  o.max_iterations = c.linear.iterations;
  o.tolerance = c.gaussian.tolerance;
  o.patience = c.gaussian.patience;
  o.stop_on_convergence = false;
  o.variance_floor = c.linear.variance_floor;
  o.ridge = c.linear.ridge;
  o.max_failure_fraction = c.linear.max_failure_fraction;
  o.seed = c.seed;
  o.workers = c.workers;
  o.repair = planning_repair(c.mpc);
  return o;
}

inline LinearSearchResult train_linear_planning(const Config& c) {
  const Eigen::VectorXd zero_angles = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.scenario.gates.size()));
  const PlanningTask base = make_planning_task(c, zero_angles);
  SolverPool pool(base.mpc, c.workers);
  const SampleEvaluator eval = [&](int w, const Eigen::VectorXd& z, const Eigen::VectorXd& s) {
    const PlanOutcome p = evaluate_plan(pool.at(w), make_planning_task(c, s), z);
    return SampleOutcome{p.reward.reward, p.solved};
  };
  return train_linear_gaussian(eval, context_sampler(c), initial_linear_policy(c), linear_options(c));
}

// ---------------------------------------------------------------------------
// Selector comparison over random contexts

struct GateStats {
  double success_rate = 0.0;  // [0, 1]
  double mean = 0.0;          // m
  double std = 0.0;           // m, population
};

struct SelectorReport {
  std::string name;
  std::vector<GateStats> gates;
  double all_success_rate = 0.0;
  std::vector<std::vector<double>> errors;  // trial x gate
};

struct TableReport {
  int trials = 0;
  std::vector<SelectorReport> rows;  // random, heuristic, learned

  const SelectorReport& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    throw std::out_of_range("TableReport: no row " + name);
  }
};

/// Failed solves count as errors of +inf.
inline SelectorReport summarize_errors(std::string name, std::vector<std::vector<double>> errors) {
  SelectorReport r;
  r.name = std::move(name);
  const std::size_t trials = errors.size();
  const std::size_t gates = trials ? errors[0].size() : 0;
  r.gates.resize(gates);
  int all = 0;
  for (const auto& e : errors) all += all_below_threshold(e) ? 1 : 0;
  r.all_success_rate = trials ? static_cast<double>(all) / static_cast<double>(trials) : 0.0;
  for (std::size_t g = 0; g < gates; ++g) {
    double sum = 0.0, sq = 0.0;
    int ok = 0;
    for (const auto& e : errors) {
      ok += e[g] < kSuccessThreshold ? 1 : 0;
      sum += e[g];
      sq += e[g] * e[g];
    }
    const double n = static_cast<double>(trials);
    r.gates[g].success_rate = ok / n;
    r.gates[g].mean = sum / n;
    r.gates[g].std = std::isfinite(sum) ? std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n)))
                                        : std::numeric_limits<double>::infinity();
  }
  r.errors = std::move(errors);
  return r;
}

/// Random, heuristic and learned selectors on the same contexts from rho.
inline TableReport eval_linear_policy(const LinearGaussianPolicy& policy, const Config& c,
                                      int trials, std::uint64_t seed) {
  const ContextSampler rho = context_sampler(c);
  const auto repair = planning_repair(c.mpc);
  SolverPool pool(c.mpc, c.workers);
  const std::size_t n = static_cast<std::size_t>(trials);
  std::vector<std::vector<double>> random(n), heuristic(n), learned(n);
  parallel_for(n, c.workers, [&](int w, std::size_t k) {
    Rng ctx = stream(seed, 0x7ab1e, k);
    const Eigen::VectorXd s = rho(ctx);
    const PlanningTask task = make_planning_task(c, s);
    Rng rz = stream(seed, 0x7ab1e, k, 1);
    random[k] = evaluate_plan(pool.at(w), task, random_z(task, rz)).reward.errors;
    heuristic[k] = evaluate_plan(pool.at(w), task, heuristic_z(task, c.scenario.nominal_speed)).reward.errors;
    Eigen::VectorXd z = policy.mean(s);
    repair(z);
    learned[k] = evaluate_plan(pool.at(w), task, z).reward.errors;
  });
  TableReport rep;
  rep.trials = trials;
  rep.rows.push_back(summarize_errors("random", std::move(random)));
  rep.rows.push_back(summarize_errors("heuristic", std::move(heuristic)));
  rep.rows.push_back(summarize_errors("learned", std::move(learned)));
  return rep;
}

inline CsvTable table_report_csv(const TableReport& rep) {
  CsvTable t({"selector", "gate", "trials", "success_rate", "mean_error", "std_error"});
  for (const auto& r : rep.rows)
    for (std::size_t g = 0; g < r.gates.size(); ++g)
      t.row().add(r.name).add(static_cast<int>(g + 1)).add(rep.trials).add(r.gates[g].success_rate)
          .add(r.gates[g].mean).add(r.gates[g].std);
  return t;
}

}  // namespace highmpc::harness
