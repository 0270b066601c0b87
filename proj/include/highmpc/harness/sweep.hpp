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

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "highmpc/harness/config.hpp"
#include "highmpc/harness/episode.hpp"
#include "highmpc/harness/io.hpp"
#include "highmpc/parallel.hpp"

namespace highmpc::harness {

struct SweepCell {
  double offset = 0.0;    // m
  double velocity = 0.0;  // m/s
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_error = 0.0;    // m, over trials and gates
  double mean_crossed = 0.0;  // gates crossed per trial
  double mean_peak_rate = 0.0;
  int failures = 0;  // episodes ended by a controller failure
};

struct SweepGrid {
  std::string controller;
  std::vector<SweepCell> cells;  // offset-major

  double aggregate_success() const {
    int s = 0, t = 0;
    for (const auto& c : cells) {
      s += c.successes;
      t += c.trials;
    }
    return t ? static_cast<double>(s) / t : 0.0;
  }
  double aggregate_peak_rate() const {
    double s = 0.0;
    int t = 0;
    for (const auto& c : cells) {
      s += c.mean_peak_rate * c.trials;
      t += c.trials;
    }
    return t ? s / t : 0.0;
  }
  /// Mean success rate over the cells with this offset.
  double column_success(double offset) const {
    double s = 0.0;
    int n = 0;
    for (const auto& c : cells)
      if (c.offset == offset) {
        s += c.success_rate;
        ++n;
      }
    return n ? s / n : 0.0;
  }
};

using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

struct NamedController {
  std::string name;
  ControllerFactory make;
};

/// Gates at x = k * offset (k = 1..n), quad at the origin with forward speed
/// v_x. Angles keyed by (seed, cell, trial) so every controller sees the same
/// course.
inline Course sweep_course(const Config& c, double offset, double velocity, std::uint64_t seed,
                           std::size_t cell, std::size_t trial) {
  Rng rng = stream(seed, 0x5eeb, cell, trial);
  std::uniform_real_distribution<double> angle(c.scenario.theta_min, c.scenario.theta_max);
  const GateSpec proto = c.scenario.gates.front();
  Course course;
  for (int k = 1; k <= c.sweep.gates; ++k) {
    GateSpec g = proto;
    g.anchor = Vec3(k * offset, 0.0, c.sweep.anchor_height);
    course.gates.push_back(g.params());
    const double th = c.scenario.theta_min == c.scenario.theta_max ? c.scenario.theta_min : angle(rng);
    course.initial_gates.push_back(gate_pose(th, 0.0, course.gates.back()));
  }
  course.start = QuadState::hover_at(Vec3(0.0, 0.0, c.sweep.start_height));
  course.start.v = Vec3(velocity, 0.0, 0.0);
  course.goal_offset = c.episode.goal_offset;
  return course;
}

struct SweepRun {
  std::vector<SweepGrid> grids;
  std::vector<std::vector<EpisodeResult>> episodes;  // controller x (cell * trials + trial)
};

/// Every (controller, cell, trial) is an independent job; per-cell failures
/// are recorded, never thrown.
inline SweepRun run_sweep(const std::vector<NamedController>& controllers, const Config& c,
                          std::uint64_t seed, int workers) {
  const auto& sw = c.sweep;
  const std::size_t cells = sw.offsets.size() * sw.velocities.size();
  const std::size_t trials = static_cast<std::size_t>(sw.trials);
  const std::size_t per = cells * trials;
  EpisodeOptions opt = EpisodeOptions::from(c);
  opt.record_log = false;

  SweepRun run;
  run.episodes.assign(controllers.size(), std::vector<EpisodeResult>(per));
  parallel_for(controllers.size() * per, workers, [&](int, std::size_t job) {
    const std::size_t k = job / per, rest = job % per;
    const std::size_t cell = rest / trials, trial = rest % trials;
    const double offset = sw.offsets[cell / sw.velocities.size()];
    const double velocity = sw.velocities[cell % sw.velocities.size()];
    const Course course = sweep_course(c, offset, velocity, seed, cell, trial);
    EpisodeResult r;
    try {
      auto ctrl = controllers[k].make();
      r = run_episode(*ctrl, course, opt);
    } catch (const std::exception& e) {
      r.termination = std::string("controller_failure: ") + e.what();
      r.errors.assign(course.gates.size(), std::numeric_limits<double>::infinity());
      r.crossed.assign(course.gates.size(), false);
      r.success = false;
    }
    run.episodes[k][rest] = std::move(r);
  });

  for (std::size_t k = 0; k < controllers.size(); ++k) {
    SweepGrid g;
    g.controller = controllers[k].name;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      SweepCell sc;
      sc.offset = sw.offsets[cell / sw.velocities.size()];
      sc.velocity = sw.velocities[cell % sw.velocities.size()];
      sc.trials = static_cast<int>(trials);
      double err = 0.0, crossed = 0.0, peak = 0.0;
      for (std::size_t t = 0; t < trials; ++t) {
        const EpisodeResult& r = run.episodes[k][cell * trials + t];
        sc.successes += r.success ? 1 : 0;
        sc.failures += r.termination.rfind("controller_failure", 0) == 0 ? 1 : 0;
        err += r.mean_error();
        crossed += r.gates_crossed();
        peak += r.peak_rate;
      }
      sc.success_rate = static_cast<double>(sc.successes) / sc.trials;
      sc.mean_error = err / sc.trials;
      sc.mean_crossed = crossed / sc.trials;
      sc.mean_peak_rate = peak / sc.trials;
      g.cells.push_back(sc);
    }
    run.grids.push_back(std::move(g));
  }
  return run;
}

inline CsvTable sweep_table(const SweepGrid& g) {
  CsvTable t({"offset", "velocity", "trials", "successes", "success_rate", "mean_error",
              "mean_gates_crossed", "mean_peak_rate", "failures"});
  for (const auto& c : g.cells)
    t.row().add(c.offset).add(c.velocity).add(c.trials).add(c.successes).add(c.success_rate)
        .add(c.mean_error).add(c.mean_crossed).add(c.mean_peak_rate).add(c.failures);
  return t;
}

inline json sweep_summary(const SweepRun& run) {
  json ctrls = json::object();
  for (const auto& g : run.grids) {
    int trials = 0;
    for (const auto& c : g.cells) trials += c.trials;
    ctrls[g.controller] = json{{"aggregate_success", g.aggregate_success()},
                               {"aggregate_peak_rate", g.aggregate_peak_rate()},
                               {"trials", trials}};
  }
  return json{{"controllers", ctrls}};
}

}  // namespace highmpc::harness
