// Copyright 2026 The ofo-sens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <random>

#include "ofo_sens/qp_core.hpp"
#include "test_support.hpp"

namespace ofo_sens {
namespace {

using testing::enumerate_qp;
using testing::random_qp;
using testing::vec;

ProjectionQp qp1d(double g, double c)
{
  ProjectionQp qp;
  qp.g_bar = Eigen::MatrixXd::Constant(1, 1, g);
  qp.c_bar = vec({c});
  qp.a_bar.resize(0, 1);
  qp.b_bar.resize(0);
  return qp;
}

TEST(SolveQp, UnconstrainedMinimizer)
{
  const QpSolution s = solve_qp(qp1d(2.0, 4.0));
  EXPECT_NEAR(s.w_star(0), -2.0, 1e-15);
  EXPECT_EQ(s.lambda_star.size(), 0);
  EXPECT_TRUE(s.active_set.empty());
}

TEST(SolveQp, ClampedAtLowerBound)
{
  ProjectionQp qp = qp1d(2.0, 4.0);
  qp.a_bar = Eigen::MatrixXd::Constant(1, 1, -1.0);
  qp.b_bar = vec({1.0});
  const QpSolution s = solve_qp(qp);

  // Grid search over [-1, 10] for the constrained minimizer.
  double best = -1.0, best_v = INFINITY;
  for (int i = 0; i <= 1100000; ++i) {
    const double w = -1.0 + 1e-5 * i;
    const double v = w * w + 4.0 * w;
    if (v < best_v) {
      best_v = v;
      best = w;
    }
  }
  EXPECT_NEAR(s.w_star(0), best, 1e-9);
  EXPECT_NEAR(s.w_star(0), -1.0, 1e-14);
  EXPECT_NEAR(s.lambda_star(0), 2.0, 1e-12);
  EXPECT_EQ(s.active_set, std::vector<int>{0});
}

TEST(SolveQp, TwoBoundsBothActive)
{
  ProjectionQp qp;
  qp.g_bar = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  qp.c_bar = vec({-2.0, -2.0});
  qp.a_bar = Eigen::MatrixXd::Identity(2, 2);
  qp.b_bar = vec({0.0, 0.0});
  const QpSolution s = solve_qp(qp);
  const auto oracle = enumerate_qp(qp);
  ASSERT_TRUE(oracle.has_value());
  EXPECT_LE((s.w_star - *oracle).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE(s.w_star.cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(s.lambda_star(0), 2.0, 1e-12);
  EXPECT_NEAR(s.lambda_star(1), 2.0, 1e-12);
}

TEST(SolveQp, InfeasibleConstraintsThrow)
{
  ProjectionQp qp = qp1d(2.0, 0.0);
  qp.a_bar = Eigen::MatrixXd(2, 1);
  qp.a_bar << 1.0, -1.0;
  qp.b_bar = vec({-1.0, -1.0});  // w <= -1 and w >= 1
  EXPECT_THROW(solve_qp(qp), Infeasible);
}

TEST(SolveQp, ZeroRowWithNegativeBoundIsInfeasible)
{
  ProjectionQp qp = qp1d(2.0, 0.0);
  qp.a_bar = Eigen::MatrixXd::Zero(1, 1);
  qp.b_bar = vec({-1.0});
  EXPECT_THROW(solve_qp(qp), Infeasible);
  qp.b_bar = vec({1.0});
  EXPECT_NO_THROW(solve_qp(qp));
}

TEST(SolveQp, RejectsIndefiniteAndAsymmetricG)
{
  ProjectionQp qp = qp1d(-1.0, 0.0);
  EXPECT_THROW(solve_qp(qp), NumericalFailure);
  ProjectionQp q2;
  q2.g_bar = Eigen::MatrixXd::Identity(2, 2);
  q2.g_bar(0, 1) = 0.5;
  q2.c_bar = vec({0.0, 0.0});
  q2.a_bar.resize(0, 2);
  q2.b_bar.resize(0);
  EXPECT_THROW(solve_qp(q2), NumericalFailure);
}

TEST(SolveQp, MatchesEnumerationOnRandomInstances)
{
  std::mt19937 rng(12345);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + t % 3;
    const int m = 1 + (t * 7) % 8;
    const ProjectionQp qp = random_qp(rng, n, m);
    const auto oracle = enumerate_qp(qp);
    ASSERT_TRUE(oracle.has_value()) << "instance " << t;
    const QpSolution s = solve_qp(qp);
    EXPECT_LE((s.w_star - *oracle).cwiseAbs().maxCoeff(), 1e-8) << "instance " << t;
    EXPECT_LE(s.kkt_residual, 1e-8) << "instance " << t;
    ++checked;
  }
  EXPECT_EQ(checked, 200);
}

TEST(SolveQp, NoFeasiblePointIsBetter)
{
  std::mt19937 rng(777);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    const int n = 1 + t % 3;
    const ProjectionQp qp = random_qp(rng, n, 2 + t % 6);
    const QpSolution s = solve_qp(qp);
    const double f_star = 0.5 * s.w_star.dot(qp.g_bar * s.w_star) + s.w_star.dot(qp.c_bar);
    int found = 0;
    while (found < 100) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) { v(i) = 3.0 * nd(rng); }
      if ((qp.a_bar * v - qp.b_bar).maxCoeff() > 0.0) { continue; }
      ++found;
      EXPECT_LE(f_star, 0.5 * v.dot(qp.g_bar * v) + v.dot(qp.c_bar) + 1e-12);
    }
  }
}

TEST(SolveQp, Deterministic)
{
  std::mt19937 rng(99);
  for (int t = 0; t < 20; ++t) {
    const ProjectionQp qp = random_qp(rng, 3, 6);
    const QpSolution a = solve_qp(qp);
    const QpSolution b = solve_qp(qp);
    ASSERT_EQ(a.w_star.size(), b.w_star.size());
    for (Eigen::Index i = 0; i < a.w_star.size(); ++i) { EXPECT_EQ(a.w_star(i), b.w_star(i)); }
    for (Eigen::Index i = 0; i < a.lambda_star.size(); ++i) { EXPECT_EQ(a.lambda_star(i), b.lambda_star(i)); }
    EXPECT_EQ(a.active_set, b.active_set);
  }
}

TEST(SolveQp, SolutionInvariants)
{
  std::mt19937 rng(4242);
  for (int t = 0; t < 50; ++t) {
    const ProjectionQp qp = random_qp(rng, 1 + t % 3, 1 + t % 8);
    const QpSolution s = solve_qp(qp);
    for (Eigen::Index i = 0; i < qp.num_constraints(); ++i) {
      const double slack = qp.a_bar.row(i).dot(s.w_star) - qp.b_bar(i);
      EXPECT_GE(s.lambda_star(i), -1e-12);
      EXPECT_LE(std::abs(s.lambda_star(i) * slack), 1e-8);
      const bool active = std::find(s.active_set.begin(), s.active_set.end(), i) != s.active_set.end();
      if (!active) {
        EXPECT_EQ(s.lambda_star(i), 0.0);
        EXPECT_LT(slack, -kActiveTol);
      }
    }
  }
}

TEST(KktResidual, ExactPointIsZero)
{
  const ProjectionQp qp = qp1d(2.0, 4.0);
  QpSolution s;
  s.w_star = vec({-2.0});
  s.lambda_star.resize(0);
  EXPECT_LE(kkt_residual(qp, s), 1e-15);
}

TEST(KktResidual, StationarityOffset)
{
  const ProjectionQp qp = qp1d(2.0, 4.0);
  QpSolution s;
  s.w_star = vec({-2.0 + 1e-3});
  s.lambda_star.resize(0);
  EXPECT_NEAR(kkt_residual(qp, s), 2e-3, 1e-15);
}

TEST(KktResidual, NegativeDual)
{
  ProjectionQp qp = qp1d(2.0, 4.0);
  qp.a_bar = Eigen::MatrixXd::Constant(1, 1, -1.0);
  qp.b_bar = vec({1.0});
  QpSolution s;
  s.w_star = vec({-1.0});
  s.lambda_star = vec({-0.5});
  EXPECT_GE(kkt_residual(qp, s), 0.5);
}

TEST(KktResidual, DimensionMismatchThrows)
{
  const ProjectionQp qp = qp1d(2.0, 4.0);
  QpSolution s;
  s.w_star = vec({1.0, 2.0});
  EXPECT_THROW(kkt_residual(qp, s), DimensionMismatch);
}

TEST(Nondegenerate, UnconstrainedIsVacuouslyFine)
{
  const ProjectionQp qp = qp1d(2.0, 4.0);
  const NondegeneracyReport r = check_nondegenerate(qp, solve_qp(qp));
  EXPECT_TRUE(r.strict_complementarity);
  EXPECT_TRUE(r.active_rows_independent);
}

TEST(Nondegenerate, ActiveBoundWithPositiveMultiplier)
{
  ProjectionQp qp = qp1d(2.0, 4.0);
  qp.a_bar = Eigen::MatrixXd::Constant(1, 1, -1.0);
  qp.b_bar = vec({1.0});
  const NondegeneracyReport r = check_nondegenerate(qp, solve_qp(qp));
  EXPECT_TRUE(r.strict_complementarity);
  EXPECT_TRUE(r.active_rows_independent);
}

TEST(Nondegenerate, WeaklyActiveConstraint)
{
  // Unconstrained minimizer sits exactly on the bound w <= 0.
  ProjectionQp qp = qp1d(2.0, 0.0);
  qp.a_bar = Eigen::MatrixXd::Constant(1, 1, 1.0);
  qp.b_bar = vec({0.0});
  const QpSolution s = solve_qp(qp);
  EXPECT_EQ(s.active_set, std::vector<int>{0});
  EXPECT_FALSE(check_nondegenerate(qp, s).strict_complementarity);
}

TEST(Nondegenerate, DependentActiveRows)
{
  ProjectionQp qp;
  qp.g_bar = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  qp.c_bar = vec({-2.0, -2.0});
  qp.a_bar = Eigen::MatrixXd(3, 2);
  qp.a_bar << 1, 0, 0, 1, 1, 1;
  qp.b_bar = vec({0.0, 0.0, 0.0});
  const QpSolution s = solve_qp(qp);
  EXPECT_LE(s.w_star.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_FALSE(check_nondegenerate(qp, s).ok());
}

}  // namespace
}  // namespace ofo_sens
