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


#ifndef OFO_SENS_OFO_HPP_
#define OFO_SENS_OFO_HPP_

/**
 * @file
 * @brief Closed-loop online feedback optimization with projected gradient steps.
 *
 * At every step the controller measures y = h(u), projects the negative gradient
 * onto the linearized feasible set by solving a small QP for w, and applies
 * u <- u + alpha * w.
 */

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ofo_sens/csv.hpp"
#include "ofo_sens/errors.hpp"
#include "ofo_sens/plants.hpp"
#include "ofo_sens/qp_core.hpp"

namespace ofo_sens {

/// Step sizes, metric and start point of one closed-loop run.
struct OfoConfig
{
  std::vector<double> alpha;                        ///< one entry per step, length = horizon
  Eigen::MatrixXd metric_g;                         ///< used at steps without a schedule entry
  std::vector<Eigen::MatrixXd> metric_schedule;     ///< optional per-step metric
  Eigen::VectorXd u0;
  int horizon = 1;

  static OfoConfig constant(double alpha, Eigen::MatrixXd g, Eigen::VectorXd u0, int horizon)
  {
    OfoConfig c;
    c.alpha.assign(static_cast<std::size_t>(std::max(horizon, 0)), alpha);
    c.metric_g = std::move(g);
    c.u0 = std::move(u0);
    c.horizon = horizon;
    return c;
  }

  double alpha_at(int k) const { return alpha.at(static_cast<std::size_t>(k)); }

  const Eigen::MatrixXd & metric_at(int k) const
  {
    if (!metric_schedule.empty()) { return metric_schedule.at(static_cast<std::size_t>(k)); }
    return metric_g;
  }

  void validate(int n_u) const
  {
    if (horizon < 1) { throw ConfigError("horizon must be at least 1"); }
    if (static_cast<int>(alpha.size()) != horizon) { throw ConfigError("alpha schedule length must equal horizon"); }
    for (double a : alpha) {
      if (!(a > 0.0) || !std::isfinite(a)) { throw ConfigError("alpha must be positive"); }
    }
    if (u0.size() != n_u) { throw ConfigError("u0 has wrong dimension"); }
    if (!u0.allFinite()) { throw ConfigError("u0 must be finite"); }
    check_metric(metric_g, n_u);
    if (!metric_schedule.empty()) {
      if (static_cast<int>(metric_schedule.size()) != horizon) {
        throw ConfigError("metric schedule length must equal horizon");
      }
      for (const auto & g : metric_schedule) { check_metric(g, n_u); }
    }
  }

  static void check_metric(const Eigen::MatrixXd & g, int n_u)
  {
    if (g.rows() != n_u || g.cols() != n_u) { throw ConfigError("metric G must be n_u x n_u"); }
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) { throw ConfigError("metric G must be symmetric"); }
    if (Eigen::LLT<Eigen::MatrixXd>(g).info() != Eigen::Success) {
      throw ConfigError("metric G must be positive definite");
    }
  }
};

/// State at step k and the projection solved there. The last record has no step data.
struct TrajectoryRecord
{
  int k = 0;
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  double phi = 0.0;
  bool has_step = false;
  Eigen::VectorXd w_star;
  Eigen::VectorXd lambda_star;
  std::vector<int> active_set;
  bool degenerate = false;
};

using Trajectory = std::vector<TrajectoryRecord>;

/**
 * @brief Builds the projection QP for one step.
 *
 * A_bar = alpha [A; C grad_h_used], b_bar = [b - A u; d - C y], G_bar = 2 G and
 * c_bar = 2 (grad_phi_u^T + grad_h_used^T grad_phi_y^T).
 */
inline ProjectionQp assemble_projection(
  const Eigen::VectorXd & u, const Eigen::VectorXd & y, const Eigen::MatrixXd & grad_h_used,
  const Eigen::RowVectorXd & grad_phi_u, const Eigen::RowVectorXd & grad_phi_y, double alpha,
  const Eigen::MatrixXd & metric_g, const ConstraintSpec & spec)
{
  const Eigen::Index n_u = u.size();
  const Eigen::Index n_y = y.size();
  if (grad_h_used.rows() != n_y || grad_h_used.cols() != n_u || grad_phi_u.size() != n_u ||
      grad_phi_y.size() != n_y || metric_g.rows() != n_u || metric_g.cols() != n_u) {
    throw DimensionMismatch("assemble_projection: inconsistent dimensions");
  }
  spec.check_dimensions(static_cast<int>(n_u), static_cast<int>(n_y));
  if (!(alpha > 0.0)) { throw DimensionMismatch("assemble_projection: alpha must be positive"); }

  const Eigen::Index n1 = spec.num_input_rows();
  const Eigen::Index n2 = spec.num_output_rows();
  ProjectionQp qp;
  qp.g_bar = 2.0 * metric_g;
  qp.c_bar = 2.0 * (grad_phi_u.transpose() + grad_h_used.transpose() * grad_phi_y.transpose());
  qp.a_bar.resize(n1 + n2, n_u);
  qp.b_bar.resize(n1 + n2);
  if (n1 > 0) {
    qp.a_bar.topRows(n1) = alpha * spec.a_mat;
    qp.b_bar.head(n1) = spec.b_vec - spec.a_mat * u;
  }
  if (n2 > 0) {
    qp.a_bar.bottomRows(n2) = alpha * spec.c_mat * grad_h_used;
    qp.b_bar.tail(n2) = spec.d_vec - spec.c_mat * y;
  }
  return qp;
}

/// Controller-side gradient at step k: true Jacobian plus the scheduled mismatch.
inline Eigen::MatrixXd used_gradient(
  const PlantModel & plant, const Eigen::MatrixXd & grad_h_true, const MismatchSchedule * mismatch, int k)
{
  if (mismatch == nullptr || mismatch->empty()) { return grad_h_true; }
  return apply_mismatch(
    grad_h_true, mismatch->at(k, plant.num_outputs(), plant.num_inputs()), plant.mismatch_pattern());
}

struct StepResult
{
  TrajectoryRecord record;
  Eigen::VectorXd u_next;
};

/// One closed-loop step at input u and time k.
inline StepResult ofo_step(
  const Eigen::VectorXd & u, const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec,
  const MismatchSchedule * mismatch, int k)
{
  const PlantEval e = evaluate(plant, u, false);
  const Eigen::MatrixXd used = used_gradient(plant, e.grad_h, mismatch, k);
  const double alpha = cfg.alpha_at(k);
  const ProjectionQp qp =
    assemble_projection(u, e.y, used, e.grad_phi_u, e.grad_phi_y, alpha, cfg.metric_at(k), spec);
  const QpSolution sol = solve_qp(qp);

  StepResult out;
  out.record.k = k;
  out.record.u = u;
  out.record.y = e.y;
  out.record.phi = e.phi;
  out.record.has_step = true;
  out.record.w_star = sol.w_star;
  out.record.lambda_star = sol.lambda_star;
  out.record.active_set = sol.active_set;
  out.record.degenerate = !check_nondegenerate(qp, sol).ok();
  out.u_next = u + alpha * sol.w_star;

  if (spec.num_input_rows() > 0) {
    const double viol = (spec.a_mat * out.u_next - spec.b_vec).maxCoeff();
    if (viol > 1e-8 * (1.0 + spec.b_vec.cwiseAbs().maxCoeff())) {
      throw NumericalFailure("input constraints violated after the step");
    }
  }
  return out;
}

/// Runs exactly cfg.horizon steps and returns horizon + 1 records.
inline Trajectory run(
  const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec,
  const MismatchSchedule * mismatch = nullptr)
{
  cfg.validate(plant.num_inputs());
  spec.check_dimensions(plant.num_inputs(), plant.num_outputs());
  Trajectory traj;
  traj.reserve(static_cast<std::size_t>(cfg.horizon) + 1);
  Eigen::VectorXd u = cfg.u0;
  for (int k = 0; k < cfg.horizon; ++k) {
    StepResult step;
    try {
      step = ofo_step(u, plant, cfg, spec, mismatch, k);
    } catch (const StepError &) {
      throw;
    } catch (const Error & e) {
      throw StepError(k, e.what());
    }
    traj.push_back(std::move(step.record));
    u = std::move(step.u_next);
  }
  TrajectoryRecord last;
  last.k = cfg.horizon;
  last.u = u;
  last.y = plant.h(u);
  last.phi = plant.phi(u, last.y);
  traj.push_back(std::move(last));
  return traj;
}

/// Header k,u_1..,y_1..,phi,degenerate with 17 significant digits.
inline std::string trajectory_csv(const Trajectory & traj)
{
  std::string out;
  if (traj.empty()) { return out; }
  std::vector<std::string> header{"k"};
  for (Eigen::Index i = 0; i < traj.front().u.size(); ++i) { header.push_back("u_" + std::to_string(i + 1)); }
  for (Eigen::Index i = 0; i < traj.front().y.size(); ++i) { header.push_back("y_" + std::to_string(i + 1)); }
  header.push_back("phi");
  header.push_back("degenerate");
  out += csv_row(header);
  for (const auto & r : traj) {
    std::vector<std::string> row{std::to_string(r.k)};
    for (Eigen::Index i = 0; i < r.u.size(); ++i) { row.push_back(format_double(r.u(i))); }
    for (Eigen::Index i = 0; i < r.y.size(); ++i) { row.push_back(format_double(r.y(i))); }
    row.push_back(format_double(r.phi));
    row.push_back(r.degenerate ? "1" : "0");
    out += csv_row(row);
  }
  return out;
}

/// First step whose QP was degenerate, if any.
inline std::optional<int> first_degenerate_step(const Trajectory & traj)
{
  for (const auto & r : traj) {
    if (r.has_step && r.degenerate) { return r.k; }
  }
  return std::nullopt;
}

}  // namespace ofo_sens

#endif  // OFO_SENS_OFO_HPP_
