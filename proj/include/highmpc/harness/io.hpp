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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "highmpc/harness/config.hpp"
#include "highmpc/neural_policy.hpp"
#include "highmpc/policy_search.hpp"
#include "json.hpp"

#ifndef HIGHMPC_BUILD_ID
#define HIGHMPC_BUILD_ID "unknown"
#endif

namespace highmpc::harness {

inline constexpr const char* kRunDirEnv = "HIGHMPC_RUN_DIR";

struct Provenance {
  std::string build_id = HIGHMPC_BUILD_ID;
  std::uint64_t seed = 0;
  std::string config_hash;

  static Provenance of(const Config& c) { return Provenance{HIGHMPC_BUILD_ID, c.seed, harness::config_hash(c)}; }

  json to_json() const {
    return json{{"build_id", build_id}, {"seed", seed}, {"config_hash", config_hash}};
  }
  std::string comment() const {
    std::ostringstream os;
    os << "# build_id=" << build_id << " seed=" << seed << " config_hash=" << config_hash;
    return os.str();
  }
};

/// Explicit path wins, then $HIGHMPC_RUN_DIR/<name>, then runs/<name>.
inline std::filesystem::path resolve_run_dir(const std::string& explicit_dir,
                                             const std::string& name) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv(kRunDirEnv); env && *env)
    return std::filesystem::path(env) / name;
  return std::filesystem::path("runs") / name;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, json j, const Provenance& prov) {
  j["provenance"] = prov.to_json();
  write_text(path, j.dump(2) + "\n");
}

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// Provenance comment line, header, rows. Numbers use a fixed format so that
/// identical inputs give identical bytes.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& add(double v) { return add_cell(format_number(v)); }
  CsvTable& add(int v) { return add_cell(std::to_string(v)); }
  CsvTable& add(std::size_t v) { return add_cell(std::to_string(v)); }
  CsvTable& add(const std::string& v) { return add_cell(v); }
  CsvTable& add(const char* v) { return add_cell(v); }

  std::size_t size() const { return rows_.size(); }

  std::string body() const {
    std::ostringstream os;
    write_line(os, header_);
    for (const auto& r : rows_) {
      if (r.size() != header_.size()) throw std::logic_error("CsvTable: ragged row");
      write_line(os, r);
    }
    return os.str();
  }

  std::string text(const Provenance& prov) const { return prov.comment() + "\n" + body(); }

  void save(const std::filesystem::path& path, const Provenance& prov) const {
    write_text(path, text(prov));
  }

 private:
  CsvTable& add_cell(std::string s) {
    if (rows_.empty()) throw std::logic_error("CsvTable: add before row");
    rows_.back().push_back(std::move(s));
    return *this;
  }
  static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << "\n";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Splits a CSV file produced by CsvTable into rows, skipping # comments.
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Records

inline CsvTable curve_table(const std::vector<CurvePoint>& curve) {
  CsvTable t({"iteration", "mean_reward", "std_reward", "max_reward", "failures", "snapshot"});
  for (const auto& p : curve)
    t.row().add(p.iteration).add(p.mean_reward).add(p.std_reward).add(p.max_reward).add(p.failures)
        .add("iter_" + std::to_string(p.iteration));
  return t;
}

inline json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j[0].size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw std::runtime_error("matrix_from_json: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline json gaussian_json(const GaussianPolicy& p) {
  return json{{"type", "gaussian"}, {"mean", vector_json(p.mean)}, {"variance", vector_json(p.variance)}};
}

inline GaussianPolicy gaussian_from_json(const json& j) {
  GaussianPolicy p;
  p.mean = vector_from_json(j.at("mean"));
  p.variance = vector_from_json(j.at("variance"));
  p.validate();
  return p;
}

inline json linear_json(const LinearGaussianPolicy& p) {
  return json{{"type", "linear_gaussian"},
              {"weights", matrix_json(p.weights)},
              {"covariance", matrix_json(p.covariance)},
              {"rff",
               {{"projection", matrix_json(p.rff.projection)},
                {"phase", vector_json(p.rff.phase)},
                {"bandwidth", p.rff.bandwidth},
                {"seed", p.rff.seed}}}};
}

inline LinearGaussianPolicy linear_from_json(const json& j) {
  LinearGaussianPolicy p;
  p.weights = matrix_from_json(j.at("weights"));
  p.covariance = matrix_from_json(j.at("covariance"));
  const auto& r = j.at("rff");
  p.rff.projection = matrix_from_json(r.at("projection"));
  p.rff.phase = vector_from_json(r.at("phase"));
  p.rff.bandwidth = r.at("bandwidth").get<double>();
  p.rff.seed = r.at("seed").get<std::uint64_t>();
  p.validate();
  return p;
}

inline json trajectory_json(const Trajectory& t) {
  json states = json::array(), inputs = json::array();
  for (const auto& x : t.states) states.push_back(vector_json(x));
  for (const auto& u : t.inputs) inputs.push_back(vector_json(u));
  return json{{"dt", t.dt},
              {"states", states},
              {"inputs", inputs},
              {"stage_costs", t.stage_costs},
              {"terminal_cost", t.terminal_cost},
              {"total_cost", t.total_cost},
              {"solver",
               {{"iterations", t.stats.iterations},
                {"converged", t.stats.converged},
                {"termination", t.stats.termination},
                {"step_norm", t.stats.step_norm},
                {"projected_gradient_norm", t.stats.projected_gradient_norm},
                {"max_defect", t.stats.max_defect},
                {"wall_time_ms", t.stats.wall_time_ms}}}};
}

// Dataset: one row per sample.
inline CsvTable dataset_table(const Dataset& d) {
  CsvTable t({"episode", "step", "o_px", "o_py", "o_pz", "o_qw", "o_qx", "o_qy", "o_qz", "o_vx",
              "o_vy", "o_vz", "t_tra"});
  for (const auto& r : d) {
    t.row().add(r.episode).add(r.step);
    for (int i = 0; i < kObservationDim; ++i) t.add(r.o(i));
    t.add(r.t);
  }
  return t;
}

inline Dataset dataset_from_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw std::runtime_error(path.string() + ": empty dataset");
  Dataset d;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 13) throw std::runtime_error(path.string() + ": malformed dataset row");
    DataRecord rec;
    rec.episode = std::stoi(r[0]);
    rec.step = std::stoi(r[1]);
    for (int k = 0; k < kObservationDim; ++k) rec.o(k) = std::stod(r[2 + k]);
    rec.t = std::stod(r[12]);
    d.push_back(rec);
  }
  return d;
}

}  // namespace highmpc::harness
