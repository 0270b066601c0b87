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

// Small MLP mapping an observation (quad state minus gate state) to a
// traversal time, trained by minibatch SGD with momentum.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "highmpc/dynamics.hpp"
#include "highmpc/parallel.hpp"

namespace highmpc {

constexpr int kObservationDim = kStateDim;
using Observation = Eigen::Matrix<double, kObservationDim, 1>;

/// o = x^q - x^g componentwise, both quaternions in canonical sign.
inline Observation make_observation(const QuadState& quad, const GateState& gate) {
  Observation o;
  o.segment<3>(0) = quad.p - gate.p;
  o.segment<4>(3) = canonical_quaternion(quad.q) - canonical_quaternion(gate.q);
  o.segment<3>(7) = quad.v - gate.v;
  return o;
}

inline double softplus(double y) {
  return y > 30.0 ? y : std::log1p(std::exp(y));
}

inline double sigmoid(double y) { return 1.0 / (1.0 + std::exp(-y)); }

struct DataRecord {
  Observation o = Observation::Zero();
  double t = 0.0;  // target traversal time, s
  int episode = 0;
  int step = 0;
};

using Dataset = std::vector<DataRecord>;

/// 10 -> 32 -> 32 -> 1 network, ReLU hidden units, softplus output. Inputs are
/// standardized with statistics stored alongside the weights.
class Mlp {
 public:
  static constexpr int kHidden = 32;

  Eigen::MatrixXd W1, W2, W3;
  Eigen::VectorXd b1, b2, b3;
  Observation input_mean = Observation::Zero();
  Observation input_std = Observation::Ones();
  std::uint64_t seed = 0;

  Mlp() { zero(); }

  void zero() {
    W1 = Eigen::MatrixXd::Zero(kHidden, kObservationDim);
    b1 = Eigen::VectorXd::Zero(kHidden);
    W2 = Eigen::MatrixXd::Zero(kHidden, kHidden);
    b2 = Eigen::VectorXd::Zero(kHidden);
    W3 = Eigen::MatrixXd::Zero(1, kHidden);
    b3 = Eigen::VectorXd::Zero(1);
  }

  // He-uniform weights, zero biases.
  static Mlp random(std::uint64_t seed) {
    Mlp m;
    m.seed = seed;
    Rng rng = stream(seed, 0x31f);
    auto fill = [&](Eigen::MatrixXd& W) {
      const double limit = std::sqrt(6.0 / static_cast<double>(W.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index i = 0; i < W.rows(); ++i)
        for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = u(rng);
    };
    fill(m.W1);
    fill(m.W2);
    fill(m.W3);
    return m;
  }

  static constexpr int parameter_count() {
    return kHidden * kObservationDim + kHidden + kHidden * kHidden + kHidden + kHidden + 1;
  }

  Eigen::VectorXd parameters() const {
    Eigen::VectorXd p(parameter_count());
    int k = 0;
    auto put = [&](const Eigen::MatrixXd& M) {
      for (Eigen::Index j = 0; j < M.cols(); ++j)
        for (Eigen::Index i = 0; i < M.rows(); ++i) p(k++) = M(i, j);
    };
    put(W1);
    put(b1);
    put(W2);
    put(b2);
    put(W3);
    put(b3);
    return p;
  }

  void set_parameters(const Eigen::VectorXd& p) {
    if (p.size() != parameter_count()) throw DomainError("Mlp: parameter count mismatch");
    int k = 0;
    auto get = [&](Eigen::MatrixXd& M) {
      for (Eigen::Index j = 0; j < M.cols(); ++j)
        for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, j) = p(k++);
    };
    Eigen::MatrixXd b1m = b1, b2m = b2, b3m = b3;
    get(W1);
    get(b1m);
    get(W2);
    get(b2m);
    get(W3);
    get(b3m);
    b1 = b1m;
    b2 = b2m;
    b3 = b3m;
  }

  Observation standardize(const Observation& o) const {
    return ((o - input_mean).array() / input_std.array()).matrix();
  }

  // Pre-softplus output for an already standardized input.
  double raw(const Observation& x) const {
    const Eigen::VectorXd h1 = (W1 * x + b1).cwiseMax(0.0);
    const Eigen::VectorXd h2 = (W2 * h1 + b2).cwiseMax(0.0);
    return (W3 * h2 + b3)(0);
  }

  /// Traversal time for a raw observation.
  double forward(const Observation& o) const { return softplus(raw(standardize(o))); }

  /// Squared-error loss (t_hat - t)^2 for one standardized input; adds the
  /// gradient with respect to all parameters (flattened order) into grad.
  double accumulate_gradient(const Observation& x, double target, Eigen::VectorXd& grad) const {
    const Eigen::VectorXd a1 = W1 * x + b1;
    const Eigen::VectorXd h1 = a1.cwiseMax(0.0);
    const Eigen::VectorXd a2 = W2 * h1 + b2;
    const Eigen::VectorXd h2 = a2.cwiseMax(0.0);
    const double y = (W3 * h2 + b3)(0);
    const double out = softplus(y);
    const double err = out - target;
    const double dy = 2.0 * err * sigmoid(y);

    const Eigen::VectorXd d2 = (W3.transpose() * dy).array() * (a2.array() > 0.0).cast<double>();
    const Eigen::VectorXd d1 = (W2.transpose() * d2).array() * (a1.array() > 0.0).cast<double>();

    int k = 0;
    auto add = [&](const Eigen::MatrixXd& G) {
      for (Eigen::Index j = 0; j < G.cols(); ++j)
        for (Eigen::Index i = 0; i < G.rows(); ++i) grad(k++) += G(i, j);
    };
    add(d1 * x.transpose());
    add(d1);
    add(d2 * h1.transpose());
    add(d2);
    add(dy * h2.transpose());
    add(Eigen::VectorXd::Constant(1, dy));
    return err * err;
  }

  nlohmann::json to_json() const {
    auto mat = [](const Eigen::MatrixXd& M) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index i = 0; i < M.rows(); ++i) {
        std::vector<double> r(M.cols());
        for (Eigen::Index j = 0; j < M.cols(); ++j) r[j] = M(i, j);
        rows.push_back(r);
      }
      return rows;
    };
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j;
    j["architecture"] = {{"layers", {kObservationDim, kHidden, kHidden, 1}},
                         {"hidden_activation", "relu"},
                         {"output_activation", "softplus"}};
    j["input_mean"] = vec(input_mean);
    j["input_std"] = vec(input_std);
    j["W1"] = mat(W1);
    j["b1"] = vec(b1);
    j["W2"] = mat(W2);
    j["b2"] = vec(b2);
    j["W3"] = mat(W3);
    j["b3"] = vec(b3);
    j["seed"] = seed;
    return j;
  }

  static Mlp from_json(const nlohmann::json& j) {
    Mlp m;
    auto mat = [](const nlohmann::json& rows, Eigen::MatrixXd& M) {
      if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != M.rows())
        throw DomainError("Mlp::from_json: bad matrix shape");
      for (Eigen::Index i = 0; i < M.rows(); ++i) {
        const auto& r = rows[i];
        if (static_cast<Eigen::Index>(r.size()) != M.cols())
          throw DomainError("Mlp::from_json: bad matrix shape");
        for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = r[j].get<double>();
      }
    };
    auto vec = [](const nlohmann::json& a, auto& v) {
      if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != v.size())
        throw DomainError("Mlp::from_json: bad vector length");
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = a[i].template get<double>();
    };
    mat(j.at("W1"), m.W1);
    vec(j.at("b1"), m.b1);
    mat(j.at("W2"), m.W2);
    vec(j.at("b2"), m.b2);
    mat(j.at("W3"), m.W3);
    vec(j.at("b3"), m.b3);
    vec(j.at("input_mean"), m.input_mean);
    vec(j.at("input_std"), m.input_std);
    m.seed = j.value("seed", std::uint64_t{0});
    return m;
  }
};

struct MlpTrainOptions {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 64;
  int epochs = 100;
  double validation_fraction = 0.1;
  int patience = 10;  // epochs without validation improvement; <= 0 disables
  std::uint64_t seed = 0;
};

struct MlpTrainResult {
  Mlp model;
  std::vector<double> train_loss;  // per-epoch mean squared error
  std::vector<double> val_loss;
  int best_epoch = -1;
  bool stopped_early = false;
  bool diverged = false;
  std::size_t train_size = 0;
  std::size_t val_size = 0;

  double validation_rmse() const {
    if (best_epoch < 0 || val_loss.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(val_loss[best_epoch]);
  }
};

inline double mean_squared_error(const Mlp& m, const Dataset& d, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (std::size_t i : idx) {
    const double e = m.forward(d[i].o) - d[i].t;
    s += e * e;
  }
  return s / static_cast<double>(idx.size());
}

/// Minibatch SGD with momentum on the squared error. The returned model is
/// the snapshot with the lowest validation loss (training loss when there is
/// no validation split).
inline MlpTrainResult train_mlp(const Dataset& data, const MlpTrainOptions& opt) {
  if (data.empty()) throw DomainError("train_mlp: empty dataset");
  if (opt.batch_size < 1 || opt.epochs < 1 || !(opt.learning_rate > 0.0))
    throw DomainError("train_mlp: invalid hyperparameters");
  for (const auto& r : data)
    if (!r.o.allFinite() || !std::isfinite(r.t)) throw DomainError("train_mlp: non-finite record");

  MlpTrainResult res;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = stream(opt.seed, 0x5b1);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(opt.validation_fraction * data.size()));
  if (data.size() < 2) n_val = 0;
  std::vector<std::size_t> val(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train(order.begin() + n_val, order.end());
  res.train_size = train.size();
  res.val_size = val.size();

  Mlp m = Mlp::random(opt.seed);
  Observation mean = Observation::Zero();
  for (std::size_t i : train) mean += data[i].o;
  mean /= static_cast<double>(train.size());
  Observation var = Observation::Zero();
  for (std::size_t i : train) var += (data[i].o - mean).array().square().matrix();
  var /= static_cast<double>(train.size());
  m.input_mean = mean;
  for (int k = 0; k < kObservationDim; ++k) m.input_std(k) = var(k) > 1e-12 ? std::sqrt(var(k)) : 1.0;
  double tmean = 0.0;
  for (std::size_t i : train) tmean += data[i].t;
  tmean /= static_cast<double>(train.size());
  m.b3(0) = tmean > 1e-3 ? std::log(std::expm1(tmean)) : -7.0;  // softplus^-1

  std::vector<Observation> x(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) x[i] = m.standardize(data[i].o);

  Eigen::VectorXd theta = m.parameters();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd grad(theta.size());
  const auto& monitor = val.empty() ? train : val;
  double best = std::numeric_limits<double>::infinity();
  Mlp best_model = m;
  int since_best = 0;
  Rng shuffle_rng = stream(opt.seed, 0x5b2);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), shuffle_rng);
    for (std::size_t start = 0; start < train.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(train.size(), start + opt.batch_size);
      grad.setZero();
      for (std::size_t b = start; b < stop; ++b)
        m.accumulate_gradient(x[train[b]], data[train[b]].t, grad);
      grad /= static_cast<double>(stop - start);
      velocity = opt.momentum * velocity - opt.learning_rate * grad;
      theta += velocity;
      m.set_parameters(theta);
    }
    const double tl = mean_squared_error(m, data, train);
    const double vl = mean_squared_error(m, data, monitor);
    if (!std::isfinite(tl) || !std::isfinite(vl)) {
      res.diverged = true;
      break;
    }
    res.train_loss.push_back(tl);
    res.val_loss.push_back(val.empty() ? std::numeric_limits<double>::quiet_NaN() : vl);
    if (vl < best) {
      best = vl;
      best_model = m;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (opt.patience > 0 && ++since_best >= opt.patience) {
      res.stopped_early = true;
      break;
    }
  }
  res.model = best_model;
  return res;
}

}  // namespace highmpc
