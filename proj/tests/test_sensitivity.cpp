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

#include <functional>

#include "ofo_sens/sensitivity.hpp"
#include "test_support.hpp"

namespace ofo_sens {
namespace {

using testing::toy_cfg;
using testing::toy_spec;
using testing::vec;

/// Central difference of a scalar function of one parameter.
double central(const std::function<double(double)> & f, double p, double h)
{
  return (f(p + h) - f(p - h)) / (2.0 * h);
}

double terminal_phi(
  const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec, const MismatchSchedule * m = nullptr)
{
  return run(plant, cfg, spec, m).back().phi;
}

StepState first_state(
  const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec, const MismatchSchedule * m = nullptr)
{
  const Trajectory t = run(plant, cfg, spec, m);
  return step_state(plant, cfg, spec, m, t.front());
}

TEST(StepJacobians, MetricTargetHasOnlyMetricDirectParts)
{
  const GasLiftPlant p = testing::default_gaslift();
  const StepState st = first_state(p, testing::gaslift_cfg(1), testing::gaslift_spec());
  const StepJacobians jac = step_param_jacobians(st, p, testing::gaslift_spec(), ParameterTarget::metric());
  ASSERT_EQ(jac.direct.size(), 15u);
  for (const auto & d : jac.direct) {
    EXPECT_EQ(d.d_a.size(), 0);
    EXPECT_EQ(d.d_b.size(), 0);
    EXPECT_EQ(d.d_c.size(), 0);
    EXPECT_EQ(d.d_g.sum(), d.d_g.cwiseAbs().sum());
  }
  EXPECT_EQ(jac.direct[1].d_g(0, 1), 2.0);
  EXPECT_EQ(jac.direct[1].d_g(1, 0), 2.0);
}

TEST(StepJacobians, MismatchOfSecondWell)
{
  const GasLiftPlant p = testing::default_gaslift();
  const ConstraintSpec spec = testing::gaslift_spec();
  const StepState st = first_state(p, testing::gaslift_cfg(1), spec);
  const StepJacobians jac = step_param_jacobians(st, p, spec, ParameterTarget::mismatch(1));
  ASSERT_EQ(jac.direct.size(), 1u);
  EXPECT_EQ(jac.direct[0].d_c, vec({0, -2, 0, 0, 0}));
  // Output rows of A_bar: alpha C(:, platform 1) in the column of well 2.
  EXPECT_EQ(jac.direct[0].d_a(10, 1), 400.0);
  EXPECT_EQ(jac.direct[0].d_a(11, 1), -400.0);
  EXPECT_EQ(jac.direct[0].d_a(12, 1), 0.0);
  EXPECT_EQ(jac.direct[0].d_a.col(0).cwiseAbs().sum(), 0.0);
}

TEST(StepJacobians, StatePartsMatchFiniteDifferencesOfTheAssembledQp)
{
  const GasLiftPlant p = testing::default_gaslift();
  const ConstraintSpec spec = testing::gaslift_spec();
  const Eigen::MatrixXd beta = testing::gaslift_beta(vec({0.001, -0.002, 0.0005, 0.003, -0.001}));
  const MismatchSchedule m = MismatchSchedule::constant(beta, 1, p.mismatch_pattern());
  const OfoConfig cfg = testing::gaslift_cfg(1);
  const StepState st = first_state(p, cfg, spec, &m);
  const StepJacobians jac = step_param_jacobians(st, p, spec, ParameterTarget::step_size());

  auto qp_at = [&](const Eigen::VectorXd & u) {
    const Eigen::VectorXd y = p.h(u);
    return assemble_projection(
      u, y, apply_mismatch(p.grad_h(u), beta, p.mismatch_pattern()), p.grad_phi_u(u, y), p.grad_phi_y(u, y), 400.0,
      Eigen::MatrixXd::Identity(5, 5), spec);
  };
  const double h = 0.05;
  for (int j = 0; j < 5; ++j) {
    Eigen::VectorXd up = cfg.u0, um = cfg.u0;
    up(j) += h;
    um(j) -= h;
    const ProjectionQp qp_p = qp_at(up), qp_m = qp_at(um);
    const auto & d = jac.state[static_cast<std::size_t>(j)];
    const Eigen::VectorXd db = (qp_p.b_bar - qp_m.b_bar) / (2.0 * h);
    const Eigen::VectorXd dc = (qp_p.c_bar - qp_m.c_bar) / (2.0 * h);
    const Eigen::MatrixXd da = (qp_p.a_bar - qp_m.a_bar) / (2.0 * h);
    EXPECT_LE((db - d.d_b).cwiseAbs().maxCoeff(), 1e-7) << "input " << j;
    EXPECT_LE((dc - d.d_c).cwiseAbs().maxCoeff(), 1e-9) << "input " << j;
    EXPECT_LE((da - d.d_a).cwiseAbs().maxCoeff(), 1e-8) << "input " << j;
  }
}

TEST(StepJacobians, ToyStatePartsAtTinyStep)
{
  const ConstraintSpec spec = toy_spec(5.0);
  const OfoConfig cfg = toy_cfg(0.01, 1.0, -0.63, 1);
  const StepState st = first_state(ToyPlant{}, cfg, spec);
  const StepJacobians jac = step_param_jacobians(st, ToyPlant{}, spec, ParameterTarget::step_size());
  const QpPerturbation & d = jac.state[0];
  auto qp_at = [&](double u) {
    const ToyEval e = toy_eval(u);
    return assemble_projection(
      vec({u}), vec({e.y}), testing::scalar_mat(e.grad_h), Eigen::RowVectorXd::Constant(1, e.grad_phi_u),
      Eigen::RowVectorXd::Constant(1, e.grad_phi_y), 0.01, testing::scalar_mat(1.0), spec);
  };
  const double h = 1e-6;
  const ProjectionQp p = qp_at(-0.63 + h), m = qp_at(-0.63 - h);
  EXPECT_LE(((p.b_bar - m.b_bar) / (2.0 * h) - d.d_b).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LE(((p.c_bar - m.c_bar) / (2.0 * h) - d.d_c).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LE(((p.a_bar - m.a_bar) / (2.0 * h) - d.d_a).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(StepSensitivity, UnconstrainedToyAtZero)
{
  // w = -dPhi/du / G, so K = -d2Phi/du2 / G = 3.2 / G at u = 0.
  for (double g : {1.0, 2.0, 8.0}) {
    const OfoConfig cfg = toy_cfg(0.01, g, 0.0, 1);
    const StepState st = first_state(ToyPlant{}, cfg, toy_spec(5.0));
    ASSERT_TRUE(st.sol.active_set.empty());
    const StepJacobians jac = step_param_jacobians(st, ToyPlant{}, toy_spec(5.0), ParameterTarget::step_size());
    const StepSensitivity s = step_sensitivity(differentiate_qp(st.qp, st.sol), jac, 1, 1);
    EXPECT_NEAR(s.k_mat(0, 0), 3.2 / g, 1e-12);
    EXPECT_NEAR(s.direct(0, 0), 0.0, 1e-15);
  }
}

TEST(Analyze, InitialInputAfterOneStep)
{
  const ConstraintSpec spec = toy_spec(5.0);
  const OfoConfig cfg = toy_cfg(0.01, 1.0, -0.63, 1);
  const Trajectory t = run(ToyPlant{}, cfg, spec);
  const SensitivityReport rep = analyze(ToyPlant{}, cfg, spec, nullptr, t, ParameterTarget::initial_input());
  const double fd = central(
    [&](double u0) { return terminal_phi(ToyPlant{}, toy_cfg(0.01, 1.0, u0, 1), spec); }, -0.63, 1e-6);
  EXPECT_NEAR(rep.total_dphi(0), fd, 1e-6);
}

TEST(Analyze, VanishesAtConvergence)
{
  const ConstraintSpec spec = toy_spec(5.0);
  const OfoConfig cfg = toy_cfg(0.02, 1.0, -0.63, 300);
  const Trajectory t = run(ToyPlant{}, cfg, spec);
  for (const auto & target : {ParameterTarget::step_size(), ParameterTarget::metric(), ParameterTarget::initial_input()}) {
    const SensitivityReport rep = analyze(ToyPlant{}, cfg, spec, nullptr, t, target);
    EXPECT_NEAR(rep.total_dphi(0), 0.0, 1e-8) << target.name();
  }
}

TEST(Analyze, ToyAgainstFiniteDifferences)
{
  const ConstraintSpec spec = toy_spec(5.0);
  const OfoConfig cfg = toy_cfg(0.01, 1.0, -0.63, 50);
  const Trajectory t = run(ToyPlant{}, cfg, spec);
  const double h = 1e-6;

  const SensitivityReport ra = analyze(ToyPlant{}, cfg, spec, nullptr, t, ParameterTarget::step_size());
  const double fa = central([&](double a) { return terminal_phi(ToyPlant{}, toy_cfg(a, 1.0, -0.63, 50), spec); }, 0.01, h);
  EXPECT_NEAR(ra.total_dphi(0), fa, std::max(1e-6, 1e-3 * std::abs(fa)));

  const SensitivityReport rg = analyze(ToyPlant{}, cfg, spec, nullptr, t, ParameterTarget::metric());
  const double fg = central([&](double g) { return terminal_phi(ToyPlant{}, toy_cfg(0.01, g, -0.63, 50), spec); }, 1.0, h);
  EXPECT_NEAR(rg.total_dphi(0), fg, std::max(1e-6, 1e-3 * std::abs(fg)));

  const SensitivityReport ru = analyze(ToyPlant{}, cfg, spec, nullptr, t, ParameterTarget::initial_input());
  const double fu = central([&](double u) { return terminal_phi(ToyPlant{}, toy_cfg(0.01, 1.0, u, 50), spec); }, -0.63, h);
  EXPECT_NEAR(ru.total_dphi(0), fu, std::max(1e-6, 1e-3 * std::abs(fu)));
}

TEST(Analyze, StepSizeAtSingleStepAgainstFiniteDifferences)
{
  const ConstraintSpec spec = toy_spec(5.0);
  const OfoConfig cfg = toy_cfg(0.01, 1.0, -0.63, 20);
  const Trajectory t = run(ToyPlant{}, cfg, spec);
  const SensitivityReport rep = analyze(ToyPlant{}, cfg, spec, nullptr, t, ParameterTarget::step_size());
  EXPECT_EQ(rep.per_timestep_totals(0, 0), 0.0);
  for (int s : {0, 7, 19}) {
    const double fd = central(
      [&](double a) {
        OfoConfig c = cfg;
        c.alpha[static_cast<std::size_t>(s)] = a;
        return terminal_phi(ToyPlant{}, c, spec);
      },
      0.01, 1e-6);
    EXPECT_NEAR(rep.instantaneous(s, 0), fd, std::max(1e-7, 1e-4 * std::abs(fd))) << "s=" << s;
  }
}

class GasLiftMismatch : public ::testing::Test
{
protected:
  GasLiftPlant plant = testing::default_gaslift();
  ConstraintSpec spec = testing::gaslift_spec();
  OfoConfig cfg = testing::gaslift_cfg(100);
  Eigen::MatrixXd beta = testing::gaslift_beta(vec({0.0, -0.004, -0.0005, -0.0001, -0.0007}));

  double phi_with(const std::vector<Eigen::MatrixXd> & b) const
  {
    const MismatchSchedule m(b, plant.mismatch_pattern());
    return terminal_phi(plant, cfg, spec, &m);
  }
};

TEST_F(GasLiftMismatch, UniformTotalsAgainstFiniteDifferences)
{
  const MismatchSchedule m = MismatchSchedule::constant(beta, cfg.horizon, plant.mismatch_pattern());
  const Trajectory t = run(plant, cfg, spec, &m);
  const SensitivityReport rep = analyze(plant, cfg, spec, &m, t, ParameterTarget::all_mismatch());
  ASSERT_EQ(rep.num_params, 5);
  const auto pattern = plant.mismatch_pattern();
  for (int i = 0; i < 5; ++i) {
    const auto e = pattern[static_cast<std::size_t>(i)];
    const double fd = central(
      [&](double v) {
        Eigen::MatrixXd b = beta;
        b(e.row, e.col) = v;
        return phi_with(std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(cfg.horizon), b));
      },
      beta(e.row, e.col), 1e-5);
    EXPECT_NEAR(rep.total_dphi(i), fd, std::max(1e-4, 1e-4 * std::abs(fd))) << "well " << i + 1;
  }
}

TEST_F(GasLiftMismatch, PerStepAgainstFiniteDifferences)
{
  const MismatchSchedule m = MismatchSchedule::constant(beta, cfg.horizon, plant.mismatch_pattern());
  const Trajectory t = run(plant, cfg, spec, &m);
  const SensitivityReport rep = analyze(plant, cfg, spec, &m, t, ParameterTarget::mismatch(1));
  ASSERT_EQ(rep.instantaneous.rows(), cfg.horizon);
  for (int s : {0, 25, 60, 99}) {
    const double fd = central(
      [&](double v) {
        std::vector<Eigen::MatrixXd> b(static_cast<std::size_t>(cfg.horizon), beta);
        b[static_cast<std::size_t>(s)](0, 1) = v;
        return phi_with(b);
      },
      beta(0, 1), 1e-5);
    EXPECT_NEAR(rep.instantaneous(s, 0), fd, std::max(1e-4, 1e-4 * std::abs(fd))) << "s=" << s;
  }
  // The uniform total is the sum of the single-step blocks.
  EXPECT_NEAR(rep.instantaneous.col(0).sum(), rep.total_dphi(0), 1e-9 * std::abs(rep.total_dphi(0)));
}

TEST(FirstOrderEstimate, ZeroAndLinear)
{
  const Eigen::VectorXd s = vec({718, 153, 287, 556});
  EXPECT_EQ(first_order_estimate(s, Eigen::VectorXd::Zero(4)), 0.0);
  const Eigen::VectorXd d = vec({-0.04, -0.005, -0.001, -0.007});
  EXPECT_NEAR(first_order_estimate(s, d), -33.664, 1e-12);
  EXPECT_NEAR(first_order_estimate(s, 2.0 * d), 2.0 * first_order_estimate(s, d), 1e-12);
  EXPECT_THROW(first_order_estimate(s, vec({1.0})), DimensionMismatch);
}

TEST(FirstOrderEstimate, UsesWorstCaseOverTime)
{
  SensitivityReport rep;
  rep.target = ParameterTarget::all_mismatch();
  rep.num_params = 2;
  rep.per_timestep_totals.resize(3, 2);
  rep.per_timestep_totals << 0, 0, -5, 1, 3, 2;
  rep.total_dphi = rep.per_timestep_totals.row(2);
  EXPECT_EQ(first_order_estimate(rep, vec({1.0, 1.0})), 7.0);
  EXPECT_EQ(first_order_estimate(rep, vec({1.0, 1.0}), Aggregation::Final), 5.0);
}

TEST(Heatmap, EarlyMismatchOutweighsLateMismatch)
{
  const GasLiftPlant p = testing::default_gaslift();
  const ConstraintSpec spec = testing::gaslift_spec();
  const OfoConfig cfg = testing::gaslift_cfg(500);
  const Trajectory t = run(p, cfg, spec);
  AnalyzeOptions opts;
  opts.record_instantaneous = true;
  const SensitivityReport rep = analyze(p, cfg, spec, nullptr, t, ParameterTarget::mismatch(1), opts);
  ASSERT_EQ(rep.heatmap.size(), 500u * 499u / 2u + 500u);
  EXPECT_GT(std::abs(rep.instantaneous(50, 0)), std::abs(rep.instantaneous(450, 0)));
  for (const auto & h : rep.heatmap) { EXPECT_LT(h.s, h.k); }
  const std::string csv = heatmap_csv(rep, p);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,s,target,value");
  EXPECT_NE(csv.find("\n500,499,mismatch_2,"), std::string::npos);
}

TEST(Analyze, FlagsDegenerateSteps)
{
  // A duplicated lower bound makes the saturated QP have dependent active rows.
  ConstraintSpec spec = toy_spec(2.0);
  spec.a_mat.conservativeResize(3, 1);
  spec.a_mat(2, 0) = -1.0;
  spec.b_vec.conservativeResize(3);
  spec.b_vec(2) = 2.0;
  const OfoConfig cfg = toy_cfg(0.01, 1.0, -0.63, 300);
  const Trajectory t = run(ToyPlant{}, cfg, spec);
  const auto first = first_degenerate_step(t);
  ASSERT_TRUE(first.has_value());
  const SensitivityReport rep = analyze(ToyPlant{}, cfg, spec, nullptr, t, ParameterTarget::step_size());
  EXPECT_TRUE(rep.unreliable);
  EXPECT_EQ(rep.first_unreliable_step, *first);
}

TEST(Analyze, RejectsMismatchOnToyPlant)
{
  const OfoConfig cfg = toy_cfg(0.01, 1.0, -0.63, 3);
  const Trajectory t = run(ToyPlant{}, cfg, toy_spec(5.0));
  EXPECT_THROW(analyze(ToyPlant{}, cfg, toy_spec(5.0), nullptr, t, ParameterTarget::all_mismatch()), ConfigError);
  EXPECT_THROW(param_label(ParameterTarget::mismatch(9), testing::default_gaslift(), 0), SparsityViolation);
}

TEST(SensitivityCsv, HeaderAndLabels)
{
  const OfoConfig cfg = toy_cfg(0.01, 1.0, -0.63, 3);
  const Trajectory t = run(ToyPlant{}, cfg, toy_spec(5.0));
  const SensitivityReport rep = analyze(ToyPlant{}, cfg, toy_spec(5.0), nullptr, t, ParameterTarget::metric());
  const std::string csv = sensitivity_total_csv(rep, ToyPlant{});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,target,param_index,value");
  EXPECT_NE(csv.find("\n0,g,1_1,0\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

}  // namespace
}  // namespace ofo_sens
