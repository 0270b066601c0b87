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

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "checks.hpp"
#include "highmpc/neural_policy.hpp"

namespace highmpc {
namespace {

Observation random_observation(Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Observation o;
  for (int i = 0; i < kObservationDim; ++i) o(i) = n(rng);
  return o;
}

TEST(Mlp, ZeroWeightsGiveLn2) {
  Mlp m;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(m.forward(random_observation(rng, 5.0)), std::log(2.0));
}

TEST(Mlp, OutputIsPositive) {
  Mlp m = Mlp::random(3);
  m.b3(0) = -40.0;
  Rng rng(2);
  for (int i = 0; i < 50; ++i) EXPECT_GT(m.forward(random_observation(rng, 3.0)), 0.0);
}

TEST(Mlp, HiddenPermutationLeavesOutputUnchanged) {
  const Mlp m = Mlp::random(4);
  std::vector<int> perm(Mlp::kHidden);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), Rng(5));
  Mlp p = m;
  for (int i = 0; i < Mlp::kHidden; ++i) {
    p.W1.row(i) = m.W1.row(perm[i]);
    p.b1(i) = m.b1(perm[i]);
    p.W2.col(i) = m.W2.col(perm[i]);
  }
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const Observation o = random_observation(rng);
    EXPECT_NEAR(p.forward(o), m.forward(o), 1e-12);
  }
}

TEST(Mlp, ParameterRoundTrip) {
  const Mlp m = Mlp::random(8);
  Mlp z;
  z.set_parameters(m.parameters());
  EXPECT_EQ(z.parameters(), m.parameters());
  EXPECT_THROW(z.set_parameters(Eigen::VectorXd::Zero(3)), DomainError);
}

TEST(Mlp, BackpropMatchesCentralDifferences) {
  const auto gap = checks::mlp_gradient_vs_fd(60);
  EXPECT_GE(gap.probes, 50);
  EXPECT_LE(gap.worst, 1e-4);
}

TEST(Mlp, JsonRoundTripIsBitwise) {
  Mlp m = Mlp::random(12);
  m.input_mean(3) = 0.1234567890123456789;
  m.input_std(5) = 3.0 / 7.0;
  const Mlp r = Mlp::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(r.parameters(), m.parameters());
  EXPECT_EQ(r.input_mean, m.input_mean);
  EXPECT_EQ(r.input_std, m.input_std);
  EXPECT_EQ(r.seed, m.seed);
  Rng rng(1);
  const Observation o = random_observation(rng);
  EXPECT_EQ(r.forward(o), m.forward(o));
}

TEST(Mlp, JsonRejectsWrongShapes) {
  nlohmann::json j = Mlp::random(1).to_json();
  j["W2"].erase(0);
  EXPECT_THROW(Mlp::from_json(j), DomainError);
  nlohmann::json k = Mlp::random(1).to_json();
  k["b1"].push_back(0.0);
  EXPECT_THROW(Mlp::from_json(k), DomainError);
}

TEST(Observation, QuaternionSignDoesNotMatter) {
  QuadState q = QuadState::hover_at(Vec3(1, 2, 3));
  q.q = Vec4(0.9, 0.1, 0.4, -0.1).normalized();
  QuadState flipped = q;
  flipped.q = -q.q;
  GateState g;
  g.p = Vec3(2, 0, 3);
  EXPECT_EQ(make_observation(q, g), make_observation(flipped, g));
  EXPECT_EQ(make_observation(q, g).head<3>(), Vec3(-1, 2, 0));
}

TEST(TrainMlp, MemorizesTinyDataset) {
  Dataset d;
  Rng rng(21);
  std::uniform_real_distribution<double> t(0.5, 2.0);
  for (int i = 0; i < 8; ++i) d.push_back(DataRecord{random_observation(rng), t(rng), i, 0});
  MlpTrainOptions o;
  o.validation_fraction = 0.0;
  o.batch_size = 8;
  o.epochs = 4000;
  o.learning_rate = 1e-2;
  o.patience = 0;
  const auto r = train_mlp(d, o);
  EXPECT_FALSE(r.diverged);
  EXPECT_LT(r.train_loss[r.best_epoch], 1e-6);
}

// lr 1e-2: at the default 1e-3 this target sits near 0.05 after 100 epochs.
TEST(TrainMlp, FitsLinearTargetIn100Epochs) {
  Dataset d;
  Rng rng(22);
  Observation a;
  a << 0.3, -0.2, 0.1, 0.0, 0.05, 0.0, -0.05, 0.2, 0.1, -0.1;
  for (int i = 0; i < 20000; ++i) {
    const Observation o = random_observation(rng);
    d.push_back(DataRecord{o, 1.5 + a.dot(o), i, 0});
  }
  MlpTrainOptions o;
  o.epochs = 100;
  o.learning_rate = 1e-2;
  o.patience = 0;
  const auto r = train_mlp(d, o);
  EXPECT_LT(r.validation_rmse(), 0.02);
  EXPECT_EQ(r.val_size, 2000u);
  EXPECT_LE(r.val_loss.back(), r.val_loss.front());
}

TEST(TrainMlp, DeterministicForSeed) {
  Dataset d;
  Rng rng(23);
  for (int i = 0; i < 200; ++i) d.push_back(DataRecord{random_observation(rng), 1.0, i, 0});
  MlpTrainOptions o;
  o.epochs = 5;
  o.seed = 4;
  const auto a = train_mlp(d, o), b = train_mlp(d, o);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
  EXPECT_EQ(a.val_loss, b.val_loss);
}

TEST(TrainMlp, RejectsBadInput) {
  EXPECT_THROW(train_mlp({}, MlpTrainOptions{}), DomainError);
  Dataset d(3);
  d[1].t = std::nan("");
  EXPECT_THROW(train_mlp(d, MlpTrainOptions{}), DomainError);
  MlpTrainOptions o;
  o.batch_size = 0;
  EXPECT_THROW(train_mlp(Dataset(3), o), DomainError);
}

}  // namespace
}  // namespace highmpc
