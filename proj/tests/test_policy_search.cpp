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
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "highmpc/policy_search.hpp"
#include "checks.hpp"

namespace highmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using checks::random_batch;

TEST(ExpTransform, ShiftInvariantAndNormalized) {
  const std::vector<double> r = {-3.0, -1.0, -2.5, -1.2};
  std::vector<double> shifted = r;
  for (auto& v : shifted) v += 17.0;
  const Eigen::VectorXd a = exp_transform(r, 10.0), b = exp_transform(shifted, 10.0);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_DOUBLE_EQ(a.maxCoeff(), 1.0);
  EXPECT_NEAR(a(0), std::exp(-20.0), 1e-20);
}

TEST(ExpTransform, NonFiniteRewardsGetZeroWeight) {
  const Eigen::VectorXd d = exp_transform({-1.0, -kInf, std::nan("")}, 3.0);
  EXPECT_EQ(d(1), 0.0);
  EXPECT_EQ(d(2), 0.0);
  EXPECT_THROW(exp_transform({-kInf, -kInf}, 3.0), NoViableSamples);
  EXPECT_THROW(exp_transform({1.0}, 0.0), DomainError);
}

// Uniform weights: sample mean and unbiased sample variance.
TEST(UpdateGaussian, UniformWeightsGiveSampleMoments) {
  std::vector<Eigen::VectorXd> z = {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 2.0),
                                    Eigen::VectorXd::Constant(1, 4.0)};
  const GaussianPolicy p = update_gaussian(z, Eigen::VectorXd::Ones(3), 0.0);
  EXPECT_NEAR(p.mean(0), 7.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.variance(0), 7.0 / 3.0, 1e-14);  // ((4/3)^2 + (1/3)^2 + (5/3)^2) / 2
}

TEST(UpdateGaussian, SingleSurvivorIsDegenerate) {
  std::vector<Eigen::VectorXd> z = {Eigen::VectorXd::Constant(2, 1.0), Eigen::VectorXd::Constant(2, 3.0)};
  UpdateInfo info;
  const GaussianPolicy p = update_gaussian(z, Eigen::Vector2d(0.0, 1.0), 1e-6, &info);
  EXPECT_TRUE(info.degenerate);
  EXPECT_EQ(p.mean, z[1]);
  EXPECT_EQ(p.variance, Eigen::VectorXd::Constant(2, 1e-6));
  EXPECT_THROW(update_gaussian(z, Eigen::Vector2d(0.0, 0.0)), NoViableSamples);
  EXPECT_THROW(update_gaussian(z, Eigen::Vector2d(-1.0, 2.0)), DomainError);
}

TEST(UpdateGaussian, MatchesNumericalMaximizerOn100Batches) {
  const auto gap = checks::gaussian_vs_oracle(100);
  EXPECT_EQ(gap.batches, 100);
  EXPECT_LE(gap.mean, 1e-6);
  EXPECT_LE(gap.covariance, 1e-6);
}

TEST(UpdateLinearGaussian, MatchesNumericalMaximizerOn100Batches) {
  const auto gap = checks::linear_gaussian_vs_oracle(100);
  EXPECT_EQ(gap.batches, 100);
  EXPECT_LE(gap.mean, 1e-6);
  EXPECT_LE(gap.covariance, 1e-6);
}

TEST(UpdateLinearGaussian, CovarianceIsPsdOnRandomBatches) {
  const RffSpec rff = RffSpec::random(3, 40, 2.0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = random_batch(5000 + trial, 60, 6, 3, 10.0);
    const LinearGaussianPolicy p = update_linear_gaussian(b.z, b.s, b.d, rff, 0.1, 1e-6);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.covariance);
    EXPECT_GE(es.eigenvalues().minCoeff(), 1e-6 - 1e-12);
    EXPECT_NO_THROW(p.validate());
    const GaussianPolicy g = update_gaussian(b.z, b.d, 1e-6);
    EXPECT_TRUE((g.variance.array() >= 1e-6).all());
  }
}

TEST(UpdateLinearGaussian, RejectsBadInput) {
  const RffSpec rff = RffSpec::random(3, 5, 1.0, 3);
  const auto b = random_batch(1, 10, 2, 3, 1.0);
  EXPECT_THROW(update_linear_gaussian(b.z, b.s, b.d, rff, 0.0), DomainError);
  auto s = b.s;
  s.pop_back();
  EXPECT_THROW(update_linear_gaussian(b.z, s, b.d, rff), DomainError);
}

TEST(Rff, BoundedAndReproducible) {
  const RffSpec a = RffSpec::random(3, 40, 0.1, 7), b = RffSpec::random(3, 40, 0.1, 7);
  EXPECT_EQ(a.projection, b.projection);
  EXPECT_EQ(a.phase, b.phase);
  Rng rng(1);
  std::normal_distribution<double> n;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d s(n(rng), n(rng), n(rng));
    EXPECT_LE(rff_features(s, a).cwiseAbs().maxCoeff(), 1.0);
  }
  EXPECT_THROW(rff_features(Eigen::Vector2d::Zero(), a), DomainError);
  EXPECT_THROW(RffSpec::random(3, 4, 0.0, 1), DomainError);
}

TEST(RepairDecisionVector, ProducesValidVectors) {
  Rng rng(3);
  std::normal_distribution<double> n(1.0, 1.5);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd z(6);
    for (int i = 0; i < 6; ++i) z(i) = n(rng);
    repair_decision_vector(z, 0.05, 2.95);
    for (int i = 0; i < 3; ++i) {
      EXPECT_GE(z(2 * i), 0.05 - 1e-5);
      EXPECT_LE(z(2 * i), 2.95);
      EXPECT_GE(z(2 * i + 1), 0.0);
      if (i > 0) {
        EXPECT_GT(z(2 * i), z(2 * i - 2));
      }
    }
    EXPECT_NO_THROW(DecisionVars::from_vector(z));
  }
  Eigen::VectorXd ok(4);
  ok << 0.5, 1.0, 1.5, 0.2;
  const Eigen::VectorXd before = ok;
  repair_decision_vector(ok, 0.05, 2.95);
  EXPECT_EQ(ok, before);
}

TEST(TraversalReward, ZeroErrorWhenStateSitsOnGate) {
  Trajectory t;
  t.states.assign(41, StateVector::Zero());
  std::vector<std::vector<GateState>> gates(2, std::vector<GateState>(41));
  gates[0][10].p = Vec3(1, 2, 3);
  gates[1][30].p = Vec3(4, 0, 3);
  t.states[10].head<3>() = Vec3(1, 2, 3);
  t.states[30].head<3>() = Vec3(4, 0, 2);
  const DecisionVars z({{0.5, 1.0}, {1.5, 1.0}});
  const TraversalReward r = traversal_reward(t, z, gates, 0.05, 0.1);
  EXPECT_DOUBLE_EQ(r.errors[0], 0.0);
  EXPECT_DOUBLE_EQ(r.errors[1], 1.0);
  EXPECT_DOUBLE_EQ(r.reward, -1.0 - 0.1 * 2.0);
  const TraversalReward far = traversal_reward(t, DecisionVars::single(5.0), {gates[0]}, 0.05, 0.1);
  EXPECT_TRUE(far.out_of_range);
  EXPECT_EQ(far.reward, -kInf);
}

// ---------------------------------------------------------------------------
// Search loops on toy rewards

SampleEvaluator quadratic_bowl(const Eigen::VectorXd& target) {
  return [target](int, const Eigen::VectorXd& z, const Eigen::VectorXd&) {
    return SampleOutcome{-(z - target).norm(), true};
  };
}

TEST(TrainGaussian, ConvergesOnToyBowl) {
  const Eigen::Vector2d target(1.0, -2.0);
  SearchOptions o;
  o.samples = 30;
  o.max_iterations = 40;
  o.stop_on_convergence = false;
  o.seed = 5;
  const auto r = train_gaussian(quadratic_bowl(target), GaussianPolicy{Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones()}, o);
  // covers at least 90% of the initial distance
  EXPECT_LT((r.policy.mean - target).norm(), 0.1 * target.norm());
  EXPECT_GT(r.curve.back().mean_reward, r.curve.front().mean_reward);
}

TEST(TrainGaussian, IdenticalAcrossWorkerCounts) {
  const Eigen::Vector2d target(1.0, -2.0);
  SearchOptions o;
  o.samples = 16;
  o.max_iterations = 8;
  o.seed = 9;
  const GaussianPolicy init{Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones()};
  o.workers = 1;
  const auto a = train_gaussian(quadratic_bowl(target), init, o);
  o.workers = 4;
  const auto b = train_gaussian(quadratic_bowl(target), init, o);
  EXPECT_EQ(a.policy.mean, b.policy.mean);
  EXPECT_EQ(a.policy.variance, b.policy.variance);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].mean_reward, b.curve[i].mean_reward);
}

TEST(TrainGaussian, AbortsWhenMostSolvesFail) {
  SearchOptions o;
  o.samples = 10;
  const SampleEvaluator fail = [](int, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return SampleOutcome{0.0, false};
  };
  EXPECT_THROW(train_gaussian(fail, GaussianPolicy{Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones()}, o),
               SearchAborted);
}

TEST(TrainGaussian, ConvergenceFlagFollowsPatience) {
  SearchOptions o;
  o.samples = 10;
  o.max_iterations = 50;
  o.tolerance = 1e9;  // every change counts as small
  o.patience = 3;
  const auto r = train_gaussian(quadratic_bowl(Eigen::Vector2d::Zero()),
                                GaussianPolicy{Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones()}, o);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.curve.size(), 4u);
  EXPECT_EQ(r.converged_iteration, 1);
}

TEST(TrainLinearGaussian, LearnsContextDependentTarget) {
  const RffSpec rff = RffSpec::random(1, 20, 1.0, 4);
  LinearGaussianPolicy init{Eigen::MatrixXd::Zero(20, 1), Eigen::MatrixXd::Identity(1, 1), rff};
  const SampleEvaluator eval = [](int, const Eigen::VectorXd& z, const Eigen::VectorXd& s) {
    return SampleOutcome{-std::abs(z(0) - std::sin(s(0))), true};
  };
  const ContextSampler rho = [](Rng& rng) {
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    return Eigen::VectorXd::Constant(1, u(rng));
  };
  SearchOptions o;
  o.samples = 200;
  o.max_iterations = 25;
  o.beta = 5.0;
  o.ridge = 1e-3;
  o.stop_on_convergence = false;
  const auto r = train_linear_gaussian(eval, rho, init, o);
  double err = 0.0;
  for (double s = -1.2; s <= 1.2; s += 0.3)
    err = std::max(err, std::abs(r.policy.mean(Eigen::VectorXd::Constant(1, s))(0) - std::sin(s)));
  EXPECT_LT(err, 0.15);
}

}  // namespace
}  // namespace highmpc
