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

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "highmpc/harness/collect.hpp"
#include "highmpc/harness/io.hpp"
#include "highmpc/harness/planning.hpp"
#include "highmpc/harness/sweep.hpp"

namespace fs = std::filesystem;
using namespace highmpc;
using namespace highmpc::harness;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

struct Run {
  Config config;
  fs::path dir;
  Provenance prov;
};

Run start_run(const Globals& g, const std::string& name, const std::function<void(Config&)>& tweak = {}) {
  Run r;
  r.config = g.config.empty() ? Config{} : load_config(g.config);
  if (g.seed) r.config.seed = *g.seed;
  if (g.workers) r.config.workers = *g.workers;
  if (tweak) tweak(r.config);
  r.config.validate();
  r.dir = resolve_run_dir(g.out, name);
  fs::create_directories(r.dir);
  r.prov = Provenance::of(r.config);
  write_text(r.dir / "config.resolved", resolved_text(r.config));
  return r;
}

void log(const std::string& msg) { std::cerr << "[highmpc] " << msg << std::endl; }

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json errors_json(const std::vector<double>& e) {
  json a = json::array();
  for (double v : e) a.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  return a;
}

Mlp load_model(const std::string& path) {
  if (path.empty()) throw UsageError("no model: pass --model or set nn.model in the config");
  return Mlp::from_json(json::parse(read_text(path)));
}

// ---------------------------------------------------------------------------

void cmd_train_gaussian(const Globals& g, std::optional<double> beta, std::optional<int> samples,
                        std::optional<int> iters) {
  Run r = start_run(g, "train-gaussian", [&](Config& c) {
    if (beta) c.gaussian.beta = *beta;
    if (samples) c.gaussian.samples = *samples;
    if (iters) c.gaussian.iterations = *iters;
  });
  const auto t0 = std::chrono::steady_clock::now();
  const GaussianPlanning res = train_gaussian_planning(r.config);
  curve_table(res.search.curve).save(r.dir / "curve.csv", r.prov);
  write_json(r.dir / "policy.json", gaussian_json(res.search.policy), r.prov);
  write_json(r.dir / "plan.json", trajectory_json(res.final_plan.trajectory), r.prov);
  write_json(r.dir / "summary.json",
             {{"subcommand", "train-gaussian"},
              {"iterations", res.search.curve.size()},
              {"converged", res.search.converged},
              {"converged_iteration", res.search.converged_iteration},
              {"final_errors", errors_json(res.final_plan.reward.errors)},
              {"final_reward", res.final_plan.reward.reward},
              {"final_mean", vector_json(res.search.policy.mean)},
              {"seconds", since(t0)}},
             r.prov);
  log("wrote " + r.dir.string());
}

void cmd_train_linear(const Globals& g) {
  Run r = start_run(g, "train-linear");
  const auto t0 = std::chrono::steady_clock::now();
  const LinearSearchResult res = train_linear_planning(r.config);
  curve_table(res.curve).save(r.dir / "curve.csv", r.prov);
  write_json(r.dir / "policy.json", linear_json(res.policy), r.prov);
  write_json(r.dir / "summary.json",
             {{"subcommand", "train-linear"},
              {"iterations", res.curve.size()},
              {"converged", res.converged},
              {"converged_iteration", res.converged_iteration},
              {"seconds", since(t0)}},
             r.prov);
  log("wrote " + r.dir.string());
}

void cmd_eval_linear(const Globals& g, const std::string& policy_path, int trials) {
  Run r = start_run(g, "eval-linear");
  const LinearGaussianPolicy p = linear_from_json(json::parse(read_text(policy_path)));
  const TableReport rep = eval_linear_policy(p, r.config, trials, r.config.seed);
  table_report_csv(rep).save(r.dir / "table.csv", r.prov);
  json rows = json::object();
  for (const auto& row : rep.rows) {
    json gates = json::array();
    for (const auto& gs : row.gates)
      gates.push_back({{"success_rate", gs.success_rate},
                       {"mean", std::isfinite(gs.mean) ? json(gs.mean) : json(nullptr)},
                       {"std", std::isfinite(gs.std) ? json(gs.std) : json(nullptr)}});
    rows[row.name] = {{"gates", gates}, {"all_success_rate", row.all_success_rate}};
  }
  write_json(r.dir / "summary.json", {{"subcommand", "eval-linear"}, {"trials", trials}, {"selectors", rows}},
             r.prov);
  log("wrote " + r.dir.string());
}

void cmd_collect(const Globals& g, std::optional<int> samples) {
  Run r = start_run(g, "collect-nn", [&](Config& c) {
    if (samples) c.nn.samples = *samples;
  });
  const auto t0 = std::chrono::steady_clock::now();
  const CollectResult col = collect_dataset(r.config, r.config.nn.samples, r.config.seed, r.config.workers);
  dataset_table(col.data).save(r.dir / "dataset.csv", r.prov);
  write_json(r.dir / "summary.json",
             {{"subcommand", "collect-nn"},
              {"samples", col.data.size()},
              {"episodes", col.stats.episodes},
              {"steps", col.stats.steps},
              {"skipped", col.stats.skipped},
              {"crossed", col.stats.crossed},
              {"median_decrement", median_decrement(col.data)},
              {"seconds", since(t0)}},
             r.prov);
  log("wrote " + r.dir.string());
}

MlpTrainResult train_and_save(const Run& r, const Dataset& data) {
  const MlpTrainResult tr = train_mlp(data, nn_train_options(r.config));
  write_text(r.dir / "model.json", tr.model.to_json().dump() + "\n");
  CsvTable loss({"epoch", "train_mse", "val_mse"});
  for (std::size_t e = 0; e < tr.train_loss.size(); ++e)
    loss.row().add(static_cast<int>(e)).add(tr.train_loss[e]).add(e < tr.val_loss.size() ? tr.val_loss[e] : NAN);
  loss.save(r.dir / "loss.csv", r.prov);
  return tr;
}

void cmd_train_nn(const Globals& g, const std::string& data_path) {
  Run r = start_run(g, "train-nn");
  const Dataset data = dataset_from_csv(data_path);
  const MlpTrainResult tr = train_and_save(r, data);
  write_json(r.dir / "summary.json",
             {{"subcommand", "train-nn"},
              {"train_size", tr.train_size},
              {"val_size", tr.val_size},
              {"val_rmse", tr.validation_rmse()},
              {"best_epoch", tr.best_epoch},
              {"stopped_early", tr.stopped_early},
              {"diverged", tr.diverged}},
             r.prov);
  log("validation rmse " + format_number(tr.validation_rmse()) + " s");
}

std::unique_ptr<Controller> make_controller(const std::string& name, const Config& c,
                                            const std::optional<Mlp>& model) {
  if (name == "highmpc") {
    if (!model) throw UsageError("controller highmpc needs a model");
    return std::make_unique<NeuralHighMpcController>(c.episode.mpc, *model);
  }
  if (name == "standard_mpc") return std::make_unique<StandardMpcController>(c.episode.mpc);
  if (name == "minjerk") return std::make_unique<MinJerkController>(c.primitive, c.episode.mpc.control_period);
  throw UsageError("unknown controller: " + name);
}

void cmd_run_episode(const Globals& g, const std::string& controller, std::string model_path,
                     const std::string& course_kind, int trial, double offset, double velocity) {
  Run r = start_run(g, "run-episode");
  if (model_path.empty()) model_path = r.config.nn.model;
  std::optional<Mlp> model;
  if (controller == "highmpc") model = load_model(model_path);
  Course course;
  if (course_kind == "single") {
    course = single_gate_course(r.config, r.config.seed, static_cast<std::size_t>(trial));
  } else if (course_kind == "sweep") {
    course = sweep_course(r.config, offset, velocity, r.config.seed, 0, static_cast<std::size_t>(trial));
  } else {
    throw UsageError("unknown course: " + course_kind);
  }
  auto ctl = make_controller(controller, r.config, model);
  const EpisodeResult res = run_episode(*ctl, course, EpisodeOptions::from(r.config));
  episode_log_table(res).save(r.dir / "log.csv", r.prov);
  json j = episode_json(res);
  j["subcommand"] = "run-episode";
  j["controller"] = controller;
  write_json(r.dir / "episode.json", j, r.prov);
  log(controller + ": " + res.termination + (res.success ? ", success" : ", failure"));
}

void cmd_sweep(const Globals& g, std::string model_path) {
  Run r = start_run(g, "sweep");
  const Config& c = r.config;
  if (model_path.empty()) model_path = c.nn.model;
  Mlp model;
  json model_info;
  if (!model_path.empty()) {
    model = load_model(model_path);
    model_info = {{"source", model_path}};
  } else {
    log("no model given; collecting " + std::to_string(c.nn.samples) + " samples and training");
    const CollectResult col = collect_dataset(c, c.nn.samples, c.seed, c.workers);
    dataset_table(col.data).save(r.dir / "dataset.csv", r.prov);
    const MlpTrainResult tr = train_and_save(r, col.data);
    model = tr.model;
    model_info = {{"source", "trained"}, {"samples", col.data.size()}, {"val_rmse", tr.validation_rmse()}};
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<NamedController> ctrls = {
      {"highmpc", [&] { return std::make_unique<NeuralHighMpcController>(c.episode.mpc, model); }},
      {"standard_mpc", [&] { return std::make_unique<StandardMpcController>(c.episode.mpc); }},
      {"minjerk", [&] { return std::make_unique<MinJerkController>(c.primitive, c.episode.mpc.control_period); }}};
  const SweepRun run = run_sweep(ctrls, c, c.seed, c.workers);
  for (const auto& grid : run.grids) sweep_table(grid).save(r.dir / (grid.controller + ".csv"), r.prov);
  json s = sweep_summary(run);
  s["subcommand"] = "sweep";
  s["model"] = model_info;
  s["seconds"] = since(t0);
  write_json(r.dir / "summary.json", s, r.prov);
  for (const auto& grid : run.grids)
    log(grid.controller + " aggregate success " + format_number(grid.aggregate_success()));
}

// Pivot a sweep CSV into offset x velocity matrices.
void pivot_sweep(const fs::path& csv, const fs::path& out_dir, const Provenance& prov) {
  const auto rows = read_csv(csv);
  if (rows.empty()) return;
  const auto& h = rows[0];
  auto col = [&](const std::string& name) {
    const auto it = std::find(h.begin(), h.end(), name);
    if (it == h.end()) throw std::runtime_error(csv.string() + ": missing column " + name);
    return static_cast<std::size_t>(it - h.begin());
  };
  const std::size_t io = col("offset"), iv = col("velocity"), is = col("success_rate"), ie = col("mean_error");
  std::vector<std::string> offsets, velocities;
  std::map<std::pair<std::string, std::string>, std::pair<std::string, std::string>> cell;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& row = rows[k];
    if (std::find(offsets.begin(), offsets.end(), row[io]) == offsets.end()) offsets.push_back(row[io]);
    if (std::find(velocities.begin(), velocities.end(), row[iv]) == velocities.end()) velocities.push_back(row[iv]);
    cell[{row[io], row[iv]}] = {row[is], row[ie]};
  }
  for (int which = 0; which < 2; ++which) {
    std::vector<std::string> header = {"offset"};
    for (const auto& v : velocities) header.push_back("vx_" + v);
    CsvTable t(header);
    for (const auto& o : offsets) {
      t.row().add(o);
      for (const auto& v : velocities) {
        const auto it = cell.find({o, v});
        t.add(it == cell.end() ? std::string("nan") : (which == 0 ? it->second.first : it->second.second));
      }
    }
    const std::string stem = csv.stem().string();
    t.save(out_dir / ("plot_" + stem + (which == 0 ? "_success.csv" : "_error.csv")), prov);
  }
}

void cmd_plot_data(const Globals& g, const std::string& input) {
  Run r = start_run(g, "plot-data");
  if (!fs::is_directory(input)) throw UsageError("--input must be a run directory: " + input);
  std::set<fs::path> files;
  for (const auto& e : fs::directory_iterator(input))
    if (e.path().extension() == ".csv" && e.path().filename().string().rfind("plot_", 0) != 0) files.insert(e.path());
  json made = json::array();
  for (const auto& f : files) {
    const auto rows = read_csv(f);
    if (rows.empty()) continue;
    const auto& h = rows[0];
    if (std::find(h.begin(), h.end(), "velocity") != h.end()) {
      pivot_sweep(f, r.dir, r.prov);
      made.push_back(f.filename().string());
    } else if (!h.empty() && h[0] == "iteration") {
      // band of one standard deviation around the mean reward
      CsvTable t({"iteration", "mean_reward", "lower", "upper"});
      for (std::size_t k = 1; k < rows.size(); ++k) {
        const double m = std::stod(rows[k][1]), s = std::stod(rows[k][2]);
        t.row().add(rows[k][0]).add(m).add(m - s).add(m + s);
      }
      t.save(r.dir / ("plot_" + f.stem().string() + ".csv"), r.prov);
      made.push_back(f.filename().string());
    } else if (!h.empty() && h[0] == "time") {
      CsvTable t({"time", "px", "py", "pz"});
      for (std::size_t k = 1; k < rows.size(); ++k) t.row().add(rows[k][0]).add(rows[k][1]).add(rows[k][2]).add(rows[k][3]);
      t.save(r.dir / ("plot_" + f.stem().string() + "_path.csv"), r.prov);
      made.push_back(f.filename().string());
    }
  }
  write_json(r.dir / "summary.json", {{"subcommand", "plot-data"}, {"input", input}, {"converted", made}}, r.prov);
  log("converted " + std::to_string(made.size()) + " file(s)");
}

void error_record(const std::string& kind, const std::string& sub, const std::string& message) {
  const json rec = {{"error", {{"kind", kind}, {"subcommand", sub}, {"message", message}}}};
  std::cerr << rec.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"highmpc: learning high-level MPC decision variables"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&](CLI::App* s) {
    s->add_option("--config", g.config, "config file (JSON, // comments allowed)");
    s->add_option("--out", g.out, "run directory (default $HIGHMPC_RUN_DIR/<subcommand> or runs/<subcommand>)");
    s->add_option("--seed", g.seed, "master seed (overrides the config)");
    s->add_option("--workers", g.workers, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  };

  std::optional<double> beta;
  std::optional<int> samples, iters;
  auto* tg = app.add_subcommand("train-gaussian", "Gaussian policy search on the fixed three-gate task");
  add_globals(tg);
  tg->add_option("--beta", beta, "inverse temperature");
  tg->add_option("--samples", samples, "samples per iteration")->check(CLI::PositiveNumber);
  tg->add_option("--iters", iters, "iterations")->check(CLI::PositiveNumber);

  auto* tl = app.add_subcommand("train-linear", "contextual linear-Gaussian policy search");
  add_globals(tl);

  std::string policy_path;
  int trials = 100;
  auto* el = app.add_subcommand("eval-linear", "random / heuristic / learned comparison");
  add_globals(el);
  el->add_option("--policy", policy_path, "policy.json from train-linear")->required()->check(CLI::ExistingFile);
  el->add_option("--trials", trials, "contexts drawn from rho")->check(CLI::PositiveNumber);

  std::optional<int> nn_samples;
  auto* cn = app.add_subcommand("collect-nn", "collect (observation, traversal time) pairs");
  add_globals(cn);
  cn->add_option("--samples", nn_samples, "number of samples")->check(CLI::PositiveNumber);

  std::string data_path;
  auto* tn = app.add_subcommand("train-nn", "fit the traversal-time MLP");
  add_globals(tn);
  tn->add_option("--data", data_path, "dataset.csv from collect-nn")->required()->check(CLI::ExistingFile);

  std::string controller = "highmpc", model_path, course_kind = "single";
  int trial = 0;
  double offset = 3.0, velocity = 0.0;
  auto* re = app.add_subcommand("run-episode", "fly one closed-loop episode and log it");
  add_globals(re);
  re->add_option("--controller", controller, "highmpc | standard_mpc | minjerk")
      ->check(CLI::IsMember({"highmpc", "standard_mpc", "minjerk"}));
  re->add_option("--model", model_path, "model.json (highmpc)");
  re->add_option("--course", course_kind, "single | sweep")->check(CLI::IsMember({"single", "sweep"}));
  re->add_option("--trial", trial, "trial index")->check(CLI::NonNegativeNumber);
  re->add_option("--offset", offset, "gate spacing for --course sweep, m");
  re->add_option("--velocity", velocity, "initial forward speed for --course sweep, m/s");

  auto* sw = app.add_subcommand("sweep", "High-MPC vs standard MPC vs min-jerk over offsets and speeds");
  add_globals(sw);
  sw->add_option("--model", model_path, "model.json (default nn.model, else collect and train)");

  std::string input;
  auto* pd = app.add_subcommand("plot-data", "pivot run CSVs into plot-ready tables");
  add_globals(pd);
  pd->add_option("--input", input, "run directory to convert")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_record("usage", "", e.what());
    std::cerr << app.help() << std::endl;
    return 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    if (sub == "train-gaussian") cmd_train_gaussian(g, beta, samples, iters);
    else if (sub == "train-linear") cmd_train_linear(g);
    else if (sub == "eval-linear") cmd_eval_linear(g, policy_path, trials);
    else if (sub == "collect-nn") cmd_collect(g, nn_samples);
    else if (sub == "train-nn") cmd_train_nn(g, data_path);
    else if (sub == "run-episode") cmd_run_episode(g, controller, model_path, course_kind, trial, offset, velocity);
    else if (sub == "sweep") cmd_sweep(g, model_path);
    else if (sub == "plot-data") cmd_plot_data(g, input);
  } catch (const ConfigError& e) {
    error_record("config", sub, e.what());
    return 2;
  } catch (const UsageError& e) {
    error_record("usage", sub, e.what());
    return 2;
  } catch (const std::exception& e) {
    error_record("runtime", sub, e.what());
    return 1;
  }
  return 0;
}
