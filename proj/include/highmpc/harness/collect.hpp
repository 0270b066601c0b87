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
#include <map>
#include <vector>

#include <Eigen/Geometry>

#include "highmpc/harness/config.hpp"
#include "highmpc/harness/episode.hpp"
#include "highmpc/neural_policy.hpp"
#include "highmpc/parallel.hpp"
#include "highmpc/policy_search.hpp"
#include "highmpc/trajopt.hpp"

namespace highmpc::harness {

struct CollectStats {
  int episodes = 0;
  int steps = 0;
  int skipped = 0;  // states where the search failed
  int crossed = 0;  // episodes that ended at the gate plane
};

struct CollectResult {
  Dataset data;
  CollectStats stats;
};

struct EpisodeData {
  std::vector<DataRecord> records;
  CollectStats stats;
};

/// Random quad/gate state in front of the first scenario gate.
inline std::pair<QuadState, GateState> random_reset(const Config& c, const PendulumParams& pp,
                                                    Rng& rng) {
  const NnReset& r = c.nn.reset;
  auto u = [&](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  QuadState q;
  q.p = Vec3(pp.anchor.x() - u(r.distance_min, r.distance_max), u(-r.lateral, r.lateral),
             u(r.height_min, r.height_max));
  q.v = Vec3(u(r.speed_x_min, r.speed_x_max), u(-r.speed_yz, r.speed_yz), u(-r.speed_yz, r.speed_yz));
  const double roll = u(-r.tilt, r.tilt), pitch = u(-r.tilt, r.tilt);
  const Eigen::Quaterniond att = Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                                 Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX());
  q.q = canonical_quaternion(Vec4(att.w(), att.x(), att.y(), att.z()));
  const GateState g =
      gate_pose(u(c.scenario.theta_min, c.scenario.theta_max), u(-r.theta_dot, r.theta_dot), pp);
  return {q, g};
}

/// One collection episode: at every control step a 1-D Gaussian search over
/// the traversal time of the gate gives z*_t; the MPC then flies with z*_t.
/// The search mean is warm-started from the previous step's optimum.
inline EpisodeData collect_episode(const Config& c, std::uint64_t seed, std::size_t episode) {
  const NnConfig& nn = c.nn;
  const MpcConfig& mc = nn.mpc;
  const PendulumParams pp = c.scenario.gates.front().params();
  Rng rng = stream(seed, 0xc011ec7, episode);
  auto [quad, gate] = random_reset(c, pp, rng);

  const int H = mc.horizon();
  const double t_lo = mc.dt, t_hi = (H - 1) * mc.dt;
  const QuadState goal = QuadState::hover_at(
      Vec3(pp.anchor.x() + c.episode.goal_offset, pp.rest_center().y(), pp.rest_center().z()));
  const int sub = substeps(mc.control_period, nn.sim_dt);
  const double h = mc.control_period / sub;

  HighMpc mpc(mc);
  EpisodeData out;
  out.stats.episodes = 1;
  std::vector<InputVector> warm;
  double prev_opt = std::numeric_limits<double>::quiet_NaN();

  for (int step = 0; step < nn.step_cap; ++step) {
    GaussianPolicy prior;
    prior.mean.resize(1);
    prior.variance.resize(1);
    SearchOptions opt;
    if (std::isnan(prev_opt)) {
      prior.mean(0) = (gate.p - quad.p).norm() / c.scenario.nominal_speed;
      prior.variance(0) = nn.initial_variance;
      opt.max_iterations = nn.first_iterations;
    } else {
      prior.mean(0) = prev_opt - mc.control_period;
      prior.variance(0) = nn.step_variance;
      opt.max_iterations = nn.search_iterations;
    }
    prior.mean(0) = std::clamp(prior.mean(0), t_lo, t_hi);
    opt.beta = nn.search_beta;
    opt.samples = nn.search_samples;
    opt.stop_on_convergence = false;
    opt.seed = splitmix64(splitmix64(seed ^ 0xda7aULL) ^ (episode * 1000003ULL + step));
    opt.workers = 1;
    opt.repair = [t_lo, t_hi](Eigen::VectorXd& z) { z(0) = std::clamp(z(0), t_lo, t_hi); };

    const std::vector<InputVector>* ws = warm.empty() ? nullptr : &warm;
    const SampleEvaluator eval = [&](int, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
      const DecisionVars dv = DecisionVars::single(z(0), 1.0);
      try {
        const Trajectory traj = mpc.plan(quad, dv, {gate}, {pp}, goal, ws);
        const auto gt = predict_gates(dv, {gate}, {pp}, H, mc.dt, mc.gravity());
        return SampleOutcome{traversal_reward(traj, dv, gt, mc.dt, c.scenario.lambda).reward, true};
      } catch (const SolverError&) {
        return SampleOutcome{-std::numeric_limits<double>::infinity(), false};
      }
    };

    double t_star = prior.mean(0);
    bool ok = true;
    try {
      const auto res = train_gaussian(eval, prior, opt);
      t_star = std::clamp(res.policy.mean(0), t_lo, t_hi);
    } catch (const std::exception&) {
      ok = false;
      ++out.stats.skipped;
    }
    if (ok) {
      DataRecord rec;
      rec.o = make_observation(quad, gate);
      rec.t = t_star;
      rec.episode = static_cast<int>(episode);
      rec.step = step;
      out.records.push_back(rec);
      prev_opt = t_star;
    }

    const MpcStep ms = mpc.step(quad, DecisionVars::single(t_star, 1.0), {gate}, {pp}, goal);
    if (ms.status == MpcStatus::SolverFailure) {
      warm.clear();
    } else {
      const auto& u = ms.trajectory.inputs;
      const int shift = std::max(1, static_cast<int>(std::lround(mc.control_period / mc.dt)));
      warm.assign(static_cast<std::size_t>(H), u.back());
      for (int k = 0; k + shift < H; ++k) warm[static_cast<std::size_t>(k)] = u[static_cast<std::size_t>(k + shift)];
    }
    for (int k = 0; k < sub; ++k) quad = integrate_quad(quad, ms.command, h, mc.gravity());
    gate = advance_gate(gate, pp, mc.control_period, sub, mc.gravity());
    ++out.stats.steps;
    if (!quad.to_vector().allFinite() || quad.p.z() < 0.0) break;
    if (quad.p.x() >= pp.anchor.x()) {
      out.stats.crossed = 1;
      break;
    }
  }
  return out;
}

/// Episodes in index order until n_target records exist; the tail of the
/// last episode is dropped. Identical for any worker count.
inline CollectResult collect_dataset(const Config& c, int n_target, std::uint64_t seed, int workers) {
  if (n_target < 1) throw DomainError("collect_dataset: n_target must be >= 1");
  CollectResult out;
  std::size_t next = 0;
  const std::size_t batch = static_cast<std::size_t>(std::max(1, workers)) * 4;
  while (static_cast<int>(out.data.size()) < n_target) {
    std::vector<EpisodeData> eps(batch);
    parallel_for(batch, workers, [&](int, std::size_t i) { eps[i] = collect_episode(c, seed, next + i); });
    next += batch;
    for (auto& e : eps) {
      if (static_cast<int>(out.data.size()) >= n_target) break;
      out.stats.episodes += e.stats.episodes;
      out.stats.steps += e.stats.steps;
      out.stats.skipped += e.stats.skipped;
      out.stats.crossed += e.stats.crossed;
      for (auto& r : e.records) out.data.push_back(r);
    }
  }
  out.data.resize(static_cast<std::size_t>(n_target));
  return out;
}

/// Median over consecutive in-episode pairs of t_k - t_{k+1}.
inline double median_decrement(const Dataset& d) {
  std::vector<double> dec;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i].episode == d[i - 1].episode && d[i].step == d[i - 1].step + 1)
      dec.push_back(d[i - 1].t - d[i].t);
  if (dec.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(dec.begin(), dec.end());
  const std::size_t n = dec.size();
  return n % 2 ? dec[n / 2] : 0.5 * (dec[n / 2 - 1] + dec[n / 2]);
}

// ---------------------------------------------------------------------------
// Neural protocol

/// Training options from the config, shuffled and split with the run seed.
inline MlpTrainOptions nn_train_options(const Config& c) {
  MlpTrainOptions o = c.nn.train;
  o.seed = c.seed;
  return o;
}

/// Seeded single swinging gate episodes flown by the neural controller.
inline std::vector<EpisodeResult> evaluate_single_gate(const Mlp& model, const Config& c, int trials,
                                                       std::uint64_t seed, int workers) {
  std::vector<EpisodeResult> out(static_cast<std::size_t>(std::max(0, trials)));
  EpisodeOptions opt = EpisodeOptions::from(c);
  opt.record_log = false;
  parallel_for(out.size(), workers, [&](int, std::size_t k) {
    NeuralHighMpcController ctl(c.episode.mpc, model);
    out[k] = run_episode(ctl, single_gate_course(c, seed, k), opt);
  });
  return out;
}

}  // namespace highmpc::harness
