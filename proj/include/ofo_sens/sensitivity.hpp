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


#ifndef OFO_SENS_SENSITIVITY_HPP_
#define OFO_SENS_SENSITIVITY_HPP_

/**
 * @file
 * @brief Forward accumulation of closed-loop sensitivities.
 *
 * With D_s^k = du^k/dp_s and K^k = dw^k/du^k (through both u and y = h(u)),
 * \f[ D_s^{k+1} = (I + \alpha_k K^k) D_s^k, \qquad D_k^{k+1} = \alpha_k J^k, \f]
 * where J^k is the derivative of w^k with respect to the parameter block used at
 * step k. Objective rows follow as dPhi^k/dp_s = g^k D_s^k with
 * g^k = dPhi/du + dPhi/dy grad_h_true at u^k.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ofo_sens/csv.hpp"
#include "ofo_sens/errors.hpp"
#include "ofo_sens/ofo.hpp"
#include "ofo_sens/plants.hpp"
#include "ofo_sens/qp_core.hpp"
#include "ofo_sens/qp_diff.hpp"

namespace ofo_sens {

/// Which controller parameter the sensitivities are taken with respect to.
struct ParameterTarget
{
  enum class Kind { GradientMismatch, MetricG, StepSize, InitialInput };

  Kind kind = Kind::StepSize;
  int well = -1;  ///< 0-based input index for GradientMismatch; -1 selects every pattern entry

  static ParameterTarget mismatch(int well) { return {Kind::GradientMismatch, well}; }
  static ParameterTarget all_mismatch() { return {Kind::GradientMismatch, -1}; }
  static ParameterTarget metric() { return {Kind::MetricG, -1}; }
  static ParameterTarget step_size() { return {Kind::StepSize, -1}; }
  static ParameterTarget initial_input() { return {Kind::InitialInput, -1}; }

  std::string name() const
  {
    switch (kind) {
      case Kind::GradientMismatch: return "mismatch";
      case Kind::MetricG: return "g";
      case Kind::StepSize: return "alpha";
      case Kind::InitialInput: return "u0";
    }
    return "";
  }

  /// Each parameter of a per-step target has its own value at every step.
  bool per_step() const { return kind != Kind::InitialInput; }
};

/// Upper-triangle entries (l, m), l <= m, in row-major order.
inline std::vector<std::pair<int, int>> metric_entries(int n_u)
{
  std::vector<std::pair<int, int>> e;
  for (int l = 0; l < n_u; ++l) {
    for (int m = l; m < n_u; ++m) { e.emplace_back(l, m); }
  }
  return e;
}

/// Mismatch entries a target refers to, validated against the plant pattern.
inline MismatchPattern target_mismatch_entries(const ParameterTarget & t, const PlantModel & plant)
{
  const MismatchPattern pattern = plant.mismatch_pattern();
  if (pattern.empty()) {
    throw ConfigError("plant '" + plant.kind() + "' has no gradient-mismatch parameters");
  }
  if (t.well < 0) { return pattern; }
  for (const auto & e : pattern) {
    if (e.col == t.well) { return {e}; }
  }
  throw SparsityViolation("input " + std::to_string(t.well + 1) + " has no mismatch entry");
}

inline int num_params(const ParameterTarget & t, const PlantModel & plant)
{
  const int n = plant.num_inputs();
  switch (t.kind) {
    case ParameterTarget::Kind::GradientMismatch:
      return static_cast<int>(target_mismatch_entries(t, plant).size());
    case ParameterTarget::Kind::MetricG: return n * (n + 1) / 2;
    case ParameterTarget::Kind::StepSize: return 1;
    case ParameterTarget::Kind::InitialInput: return n;
  }
  return 0;
}

/// 1-based label of parameter p, e.g. the well number or the metric entry.
inline std::string param_label(const ParameterTarget & t, const PlantModel & plant, int p)
{
  switch (t.kind) {
    case ParameterTarget::Kind::GradientMismatch:
      return std::to_string(target_mismatch_entries(t, plant)[static_cast<std::size_t>(p)].col + 1);
    case ParameterTarget::Kind::MetricG: {
      const auto e = metric_entries(plant.num_inputs())[static_cast<std::size_t>(p)];
      return std::to_string(e.first + 1) + "_" + std::to_string(e.second + 1);
    }
    case ParameterTarget::Kind::StepSize: return "1";
    case ParameterTarget::Kind::InitialInput: return std::to_string(p + 1);
  }
  return "";
}

/// Everything known about step k of a trajectory.
struct StepState
{
  int k = 0;
  double alpha = 0.0;
  Eigen::MatrixXd metric;
  PlantEval eval;
  Eigen::MatrixXd grad_h_used;
  ProjectionQp qp;
  QpSolution sol;
  bool degenerate = false;
};

inline StepState step_state(
  const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec, const MismatchSchedule * mismatch,
  const TrajectoryRecord & rec)
{
  if (!rec.has_step) { throw DimensionMismatch("step_state: record has no step data"); }
  StepState st;
  st.k = rec.k;
  st.alpha = cfg.alpha_at(rec.k);
  st.metric = cfg.metric_at(rec.k);
  st.eval = evaluate(plant, rec.u, true);
  st.grad_h_used = used_gradient(plant, st.eval.grad_h, mismatch, rec.k);
  st.qp = assemble_projection(
    rec.u, st.eval.y, st.grad_h_used, st.eval.grad_phi_u, st.eval.grad_phi_y, st.alpha, st.metric, spec);
  st.sol.w_star = rec.w_star;
  st.sol.lambda_star = rec.lambda_star;
  st.sol.active_set = rec.active_set;
  st.sol.kkt_residual = kkt_residual(st.qp, st.sol);
  st.degenerate = rec.degenerate;
  return st;
}

/// QP data derivatives at one step: one perturbation per parameter and per input.
struct StepJacobians
{
  std::vector<QpPerturbation> direct;  ///< d(QP data)/dp_k, one per parameter column
  std::vector<QpPerturbation> state;   ///< d(QP data)/du_j including y = h(u), one per input
};

inline StepJacobians step_param_jacobians(
  const StepState & st, const PlantModel & plant, const ConstraintSpec & spec, const ParameterTarget & target)
{
  const PlantEval & e = st.eval;
  if (e.hess_h.empty() && plant.num_outputs() > 0) {
    throw MissingSecondDerivatives("step_param_jacobians: state lacks second derivatives");
  }
  const int n_u = plant.num_inputs();
  const int n_y = plant.num_outputs();
  const Eigen::Index n1 = spec.num_input_rows();
  const Eigen::Index n2 = spec.num_output_rows();
  const Eigen::Index m = n1 + n2;
  const Eigen::MatrixXd phi_yu = e.phi_uy.transpose();

  StepJacobians jac;
  jac.state.resize(static_cast<std::size_t>(n_u));
  for (int j = 0; j < n_u; ++j) {
    QpPerturbation & d = jac.state[static_cast<std::size_t>(j)];
    const Eigen::VectorXd dy = e.grad_h.col(j);
    Eigen::MatrixXd dgrad(n_y, n_u);
    for (int r = 0; r < n_y; ++r) { dgrad.row(r) = e.hess_h[static_cast<std::size_t>(r)].col(j).transpose(); }

    d.d_b = Eigen::VectorXd::Zero(m);
    if (n1 > 0) { d.d_b.head(n1) = -spec.a_mat.col(j); }
    if (n2 > 0) { d.d_b.tail(n2) = -spec.c_mat * dy; }

    d.d_a = Eigen::MatrixXd::Zero(m, n_u);
    if (n2 > 0) { d.d_a.bottomRows(n2) = st.alpha * spec.c_mat * dgrad; }

    const Eigen::VectorXd dphi_u = e.phi_uu.col(j) + e.phi_uy * dy;
    const Eigen::VectorXd dphi_y = phi_yu.col(j) + e.phi_yy * dy;
    d.d_c = 2.0 * (dphi_u + dgrad.transpose() * e.grad_phi_y.transpose() + st.grad_h_used.transpose() * dphi_y);
  }

  switch (target.kind) {
    case ParameterTarget::Kind::GradientMismatch: {
      for (const auto & me : target_mismatch_entries(target, plant)) {
        QpPerturbation d;
        d.d_a = Eigen::MatrixXd::Zero(m, n_u);
        if (n2 > 0) { d.d_a.block(n1, me.col, n2, 1) = st.alpha * spec.c_mat.col(me.row); }
        d.d_c = Eigen::VectorXd::Zero(n_u);
        d.d_c(me.col) = 2.0 * e.grad_phi_y(me.row);
        jac.direct.push_back(std::move(d));
      }
      break;
    }
    case ParameterTarget::Kind::MetricG: {
      for (const auto & [l, mm] : metric_entries(n_u)) {
        QpPerturbation d;
        d.d_g = Eigen::MatrixXd::Zero(n_u, n_u);
        d.d_g(l, mm) = 2.0;
        d.d_g(mm, l) = 2.0;
        jac.direct.push_back(std::move(d));
      }
      break;
    }
    case ParameterTarget::Kind::StepSize: {
      QpPerturbation d;
      d.d_a = Eigen::MatrixXd::Zero(m, n_u);
      if (n1 > 0) { d.d_a.topRows(n1) = spec.a_mat; }
      if (n2 > 0) { d.d_a.bottomRows(n2) = spec.c_mat * st.grad_h_used; }
      jac.direct.push_back(std::move(d));
      break;
    }
    case ParameterTarget::Kind::InitialInput: break;
  }
  return jac;
}

/// dw for one data perturbation, contracted from the full data Jacobians.
inline Eigen::VectorXd contract(const QpDerivatives & qd, const QpPerturbation & d)
{
  const Eigen::Index n = qd.dw_dc.rows();
  const Eigen::Index m = qd.dw_db.cols();
  Eigen::VectorXd dw = Eigen::VectorXd::Zero(n);
  if (d.d_b.size() > 0) { dw += qd.dw_db * d.d_b; }
  if (d.d_a.size() > 0) {
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index l = 0; l < n; ++l) {
        if (d.d_a(j, l) != 0.0) { dw += qd.dw_dA.col(j * n + l) * d.d_a(j, l); }
      }
    }
  }
  if (d.d_c.size() > 0) { dw += qd.dw_dc * d.d_c; }
  if (d.d_g.size() > 0) {
    for (Eigen::Index l = 0; l < n; ++l) {
      for (Eigen::Index mm = l; mm < n; ++mm) {
        if (d.d_g(l, mm) != 0.0) { dw += qd.dw_dG.col(l * n + mm) * d.d_g(l, mm); }
      }
    }
  }
  return dw;
}

/// The stack of du^k/dp_s blocks and its running sum.
class SensitivityAccumulator
{
public:
  SensitivityAccumulator(ParameterTarget target, int n_u, int n_p, bool cache_k = false)
      : target_(target), n_u_(n_u), n_p_(n_p), cache_k_(cache_k)
  {
    if (target_.kind == ParameterTarget::Kind::InitialInput) {
      blocks_.push_back(Eigen::MatrixXd::Identity(n_u, n_u));
      total_ = Eigen::MatrixXd::Identity(n_u, n_u);
    } else {
      total_ = Eigen::MatrixXd::Zero(n_u, n_p);
    }
  }

  const ParameterTarget & target() const { return target_; }
  int k() const { return k_; }
  int num_params() const { return n_p_; }

  /// du^k/dp_s for s = 0..k-1; a single block for the initial input.
  const std::vector<Eigen::MatrixXd> & du_dp() const { return blocks_; }

  /// du^k/dp with the same increment applied at every step.
  const Eigen::MatrixXd & total() const { return total_; }

  const std::vector<Eigen::MatrixXd> & k_matrices() const { return k_cache_; }

  bool unreliable() const { return first_unreliable_ >= 0; }
  int first_unreliable_step() const { return first_unreliable_; }
  bool broken() const { return broken_; }

  void mark_unreliable(int step)
  {
    if (first_unreliable_ < 0) { first_unreliable_ = step; }
  }

  /// The recursion cannot continue past a singular KKT system.
  void mark_broken(int step)
  {
    mark_unreliable(step);
    broken_ = true;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (auto & b : blocks_) { b.setConstant(nan); }
    total_.setConstant(nan);
  }

  /**
   * Advances from k to k + 1 with K = dw^k/du^k and the appended block
   * du^{k+1}/dp_k (ignored for the initial input).
   */
  void advance(const Eigen::MatrixXd & k_mat, double alpha, const Eigen::MatrixXd & appended)
  {
    if (!broken_) {
      const Eigen::MatrixXd step = Eigen::MatrixXd::Identity(n_u_, n_u_) + alpha * k_mat;
      for (auto & b : blocks_) { b = step * b; }
      total_ = step * total_;
      if (target_.per_step()) {
        blocks_.push_back(appended);
        total_ += appended;
      }
    } else if (target_.per_step()) {
      blocks_.push_back(Eigen::MatrixXd::Constant(n_u_, n_p_, std::numeric_limits<double>::quiet_NaN()));
    }
    if (cache_k_) { k_cache_.push_back(k_mat); }
    ++k_;
  }

private:
  ParameterTarget target_;
  int n_u_;
  int n_p_;
  bool cache_k_;
  int k_ = 0;
  std::vector<Eigen::MatrixXd> blocks_;
  Eigen::MatrixXd total_;
  std::vector<Eigen::MatrixXd> k_cache_;
  int first_unreliable_ = -1;
  bool broken_ = false;
};

/// K = dw/du and J = dw/dp_k at one step.
struct StepSensitivity
{
  Eigen::MatrixXd k_mat;
  Eigen::MatrixXd direct;
};

inline StepSensitivity step_sensitivity(const QpDerivatives & qd, const StepJacobians & jac, int n_u, int n_p)
{
  StepSensitivity out;
  out.k_mat.resize(n_u, n_u);
  for (int j = 0; j < n_u; ++j) { out.k_mat.col(j) = contract(qd, jac.state[static_cast<std::size_t>(j)]); }
  out.direct = Eigen::MatrixXd::Zero(n_u, n_p);
  for (std::size_t p = 0; p < jac.direct.size(); ++p) {
    out.direct.col(static_cast<Eigen::Index>(p)) = contract(qd, jac.direct[p]);
  }
  return out;
}

/// One step of the recursion; the step-size target also picks up w^k itself.
inline void accumulate_step(
  SensitivityAccumulator & acc, const QpDerivatives & qd, const StepJacobians & jac, double alpha_k,
  const Eigen::VectorXd & w_k)
{
  const int n_u = static_cast<int>(w_k.size());
  const StepSensitivity s = step_sensitivity(qd, jac, n_u, acc.num_params());
  Eigen::MatrixXd appended = alpha_k * s.direct;
  if (acc.target().kind == ParameterTarget::Kind::StepSize) { appended.col(0) += w_k; }
  acc.advance(s.k_mat, alpha_k, appended);
}

/// Gradient of Phi(u, h(u)) along the true plant.
inline Eigen::RowVectorXd composed_gradient(const PlantModel & plant, const Eigen::VectorXd & u)
{
  const Eigen::VectorXd y = plant.h(u);
  return plant.grad_phi_u(u, y) + plant.grad_phi_y(u, y) * plant.grad_h(u);
}

/// Objective rows at time k: one per stored block, plus the total.
struct ObjectiveRows
{
  std::vector<Eigen::RowVectorXd> rows;
  Eigen::RowVectorXd total;
};

inline ObjectiveRows objective_sensitivity(const SensitivityAccumulator & acc, const Eigen::RowVectorXd & g_k)
{
  ObjectiveRows out;
  out.rows.reserve(acc.du_dp().size());
  for (const auto & b : acc.du_dp()) { out.rows.push_back(g_k * b); }
  out.total = g_k * acc.total();
  return out;
}

inline ObjectiveRows objective_sensitivity(
  const SensitivityAccumulator & acc, const PlantModel & plant, const Trajectory & traj, int k)
{
  if (k != acc.k()) { throw DimensionMismatch("objective_sensitivity: accumulator is not at step k"); }
  return objective_sensitivity(acc, composed_gradient(plant, traj.at(static_cast<std::size_t>(k)).u));
}

struct HeatmapEntry
{
  int k;
  int s;
  Eigen::RowVectorXd value;
};

struct AnalyzeOptions
{
  bool record_instantaneous = false;  ///< keep dPhi^k/dp_s for every s < k <= T_F
  bool cache_k = false;
};

struct SensitivityReport
{
  ParameterTarget target;
  int num_params = 0;
  int horizon = 0;
  Eigen::RowVectorXd total_dphi;              ///< dPhi^{T_F}/dp with unit increments at every step
  Eigen::MatrixXd instantaneous;              ///< row s: dPhi^{T_F}/dp_s (one row for u0)
  Eigen::MatrixXd per_timestep_totals;        ///< row k: dPhi^k/dp, k = 0..T_F
  std::vector<HeatmapEntry> heatmap;
  std::vector<Eigen::MatrixXd> k_matrices;
  bool unreliable = false;
  int first_unreliable_step = -1;
};

/// Runs the recursion over a finished trajectory.
inline SensitivityReport analyze(
  const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec, const MismatchSchedule * mismatch,
  const Trajectory & traj, const ParameterTarget & target, const AnalyzeOptions & opts = {})
{
  if (static_cast<int>(traj.size()) != cfg.horizon + 1) {
    throw DimensionMismatch("analyze: trajectory length does not match the horizon");
  }
  if (!plant.has_second_derivatives()) {
    throw MissingSecondDerivatives("plant '" + plant.kind() + "' has no second derivatives");
  }
  const int n_u = plant.num_inputs();
  const int n_p = num_params(target, plant);
  SensitivityAccumulator acc(target, n_u, n_p, opts.cache_k);

  SensitivityReport rep;
  rep.target = target;
  rep.num_params = n_p;
  rep.horizon = cfg.horizon;
  rep.per_timestep_totals.resize(cfg.horizon + 1, n_p);

  auto record_rows = [&](int k) {
    const ObjectiveRows rows = objective_sensitivity(acc, plant, traj, k);
    rep.per_timestep_totals.row(k) = rows.total;
    if (opts.record_instantaneous && target.per_step()) {
      for (int s = 0; s < k; ++s) { rep.heatmap.push_back({k, s, rows.rows[static_cast<std::size_t>(s)]}); }
    }
    return rows;
  };

  record_rows(0);
  for (int k = 0; k < cfg.horizon; ++k) {
    const TrajectoryRecord & rec = traj[static_cast<std::size_t>(k)];
    if (rec.degenerate) { acc.mark_unreliable(k); }
    if (acc.broken()) {
      acc.advance(Eigen::MatrixXd::Zero(n_u, n_u), 0.0, Eigen::MatrixXd::Zero(n_u, n_p));
    } else {
      const StepState st = step_state(plant, cfg, spec, mismatch, rec);
      const StepJacobians jac = step_param_jacobians(st, plant, spec, target);
      try {
        const QpDerivatives qd = differentiate_qp(st.qp, st.sol);
        if (qd.weakly_active) { acc.mark_unreliable(k); }
        accumulate_step(acc, qd, jac, st.alpha, rec.w_star);
      } catch (const DegenerateKkt &) {
        acc.mark_broken(k);
        acc.advance(Eigen::MatrixXd::Zero(n_u, n_u), 0.0, Eigen::MatrixXd::Zero(n_u, n_p));
      }
    }
    const ObjectiveRows rows = record_rows(k + 1);
    if (k + 1 == cfg.horizon) {
      rep.instantaneous.resize(static_cast<Eigen::Index>(rows.rows.size()), n_p);
      for (std::size_t s = 0; s < rows.rows.size(); ++s) {
        rep.instantaneous.row(static_cast<Eigen::Index>(s)) = rows.rows[s];
      }
    }
  }
  rep.total_dphi = rep.per_timestep_totals.row(cfg.horizon);
  rep.k_matrices = acc.k_matrices();
  rep.unreliable = acc.unreliable();
  rep.first_unreliable_step = acc.first_unreliable_step();
  return rep;
}

/// Largest |dPhi^k/dp| over k for every parameter column.
inline Eigen::RowVectorXd worst_case_sensitivities(const SensitivityReport & rep)
{
  return rep.per_timestep_totals.cwiseAbs().colwise().maxCoeff();
}

enum class Aggregation { WorstCase, Final };

/// sum_i S_i * dbeta_i for given per-parameter sensitivities.
inline double first_order_estimate(const Eigen::VectorXd & sensitivities, const Eigen::VectorXd & delta_beta)
{
  if (sensitivities.size() != delta_beta.size()) {
    throw DimensionMismatch("first_order_estimate: sensitivities and delta_beta differ in length");
  }
  return sensitivities.dot(delta_beta);
}

/**
 * First-order change of Phi^{T_F} for a uniform mismatch change delta_beta, one
 * entry per mismatch parameter of the report. WorstCase uses max_k |dPhi^k/dbeta_i|.
 */
inline double first_order_estimate(
  const SensitivityReport & rep, const Eigen::VectorXd & delta_beta, Aggregation agg = Aggregation::WorstCase)
{
  if (rep.target.kind != ParameterTarget::Kind::GradientMismatch) {
    throw DimensionMismatch("first_order_estimate: report is not for mismatch parameters");
  }
  const Eigen::RowVectorXd s = agg == Aggregation::WorstCase ? worst_case_sensitivities(rep) : rep.total_dphi;
  return first_order_estimate(Eigen::VectorXd(s.transpose()), delta_beta);
}

/// `k,target,param_index,value` for every k and parameter.
inline std::string sensitivity_total_csv(const SensitivityReport & rep, const PlantModel & plant)
{
  std::string out = csv_row({"k", "target", "param_index", "value"});
  for (Eigen::Index k = 0; k < rep.per_timestep_totals.rows(); ++k) {
    for (int p = 0; p < rep.num_params; ++p) {
      out += csv_row(
        {std::to_string(k), rep.target.name(), param_label(rep.target, plant, p),
         format_double(rep.per_timestep_totals(k, p))});
    }
  }
  return out;
}

/// `k,s,target,value` for parameter column p, s < k only.
inline std::string heatmap_csv(const SensitivityReport & rep, const PlantModel & plant, int p = 0)
{
  std::string out = csv_row({"k", "s", "target", "value"});
  const std::string label = rep.target.name() + "_" + param_label(rep.target, plant, p);
  for (const auto & h : rep.heatmap) {
    out += csv_row({std::to_string(h.k), std::to_string(h.s), label, format_double(h.value(p))});
  }
  return out;
}

}  // namespace ofo_sens

#endif  // OFO_SENS_SENSITIVITY_HPP_
