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

#ifndef OFO_SENS_QP_DIFF_HPP_
#define OFO_SENS_QP_DIFF_HPP_

/**
 * @file
 * @brief Derivatives of the QP minimizer with respect to the problem data.
 *
 * Differentiating the KKT conditions at a non-degenerate solution gives the linear
 * system
 * \f[
 * \begin{bmatrix} \bar G & \bar A^T \\ D(\lambda)\bar A & D(\bar A w - \bar b) \end{bmatrix}
 * \begin{bmatrix} dw \\ d\lambda \end{bmatrix} =
 * -\begin{bmatrix} d\bar G w + d\bar c + d\bar A^T \lambda \\
 *                  D(\lambda) d\bar A w - D(\lambda) d\bar b \end{bmatrix}.
 * \f]
 * The left-hand side is factorized once and shared by every perturbation.
 */

#include <Eigen/Dense>
#include <Eigen/LU>

#include <vector>

#include "ofo_sens/errors.hpp"
#include "ofo_sens/qp_core.hpp"

namespace ofo_sens {

/// First-order change of the QP data. Empty members stand for zero.
struct QpPerturbation
{
  Eigen::MatrixXd d_g;
  Eigen::VectorXd d_c;
  Eigen::MatrixXd d_a;
  Eigen::VectorXd d_b;
};

/**
 * Jacobians of w* with respect to each scalar entry of the QP data.
 *
 * Column layout: dw_db column j is b_bar(j); dw_dA column j*n_u+l is a_bar(j,l);
 * dw_dG column l*n_u+m is the symmetric perturbation of g_bar(l,m) and g_bar(m,l).
 */
struct QpDerivatives
{
  Eigen::MatrixXd dw_db;
  Eigen::MatrixXd dw_dA;
  Eigen::MatrixXd dw_dc;
  Eigen::MatrixXd dw_dG;
  /// A tight constraint with a vanishing multiplier was treated as inactive.
  bool weakly_active = false;
};

/// Factorized linearized KKT system at one solution.
class KktSystem
{
public:
  KktSystem(const ProjectionQp & qp, const QpSolution & sol)
      : n_(qp.num_vars()), m_(qp.num_constraints()), w_(sol.w_star), lam_(sol.lambda_star)
  {
    const Eigen::Index n = qp.num_vars();
    const Eigen::Index m = qp.num_constraints();
    if (sol.w_star.size() != n || sol.lambda_star.size() != m) {
      throw DimensionMismatch("KktSystem: solution does not match problem");
    }
    strong_.assign(static_cast<std::size_t>(m), false);
    for (int i : sol.active_set) {
      if (sol.lambda_star(i) > kDualTol) {
        strong_[static_cast<std::size_t>(i)] = true;
      } else {
        weakly_active_ = true;
      }
    }

    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + m, n + m);
    k.topLeftCorner(n, n) = qp.g_bar;
    if (m > 0) { k.topRightCorner(n, m) = qp.a_bar.transpose(); }
    row_scale_ = Eigen::VectorXd::Ones(n + m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (strong_[static_cast<std::size_t>(i)]) {
        // lambda_i a_i dw + (a_i w - b_i) dlambda_i with the slack exactly zero
        k.block(n + i, 0, 1, n) = sol.lambda_star(i) * qp.a_bar.row(i);
      } else {
        // inactive, or weakly active and treated as inactive: dlambda_i = 0
        k(n + i, n + i) = 1.0;
      }
    }
    for (Eigen::Index r = 0; r < n + m; ++r) {
      const double s = k.row(r).cwiseAbs().maxCoeff();
      if (s > 0.0) { row_scale_(r) = 1.0 / s; }
    }
    k = row_scale_.asDiagonal() * k;
    lu_.setThreshold(1e-12);
    lu_.compute(k);
    if (!lu_.isInvertible()) {
      throw DegenerateKkt("linearized KKT system is singular (dependent active rows)");
    }
  }

  bool weakly_active() const { return weakly_active_; }

  bool strongly_active(Eigen::Index i) const { return strong_[static_cast<std::size_t>(i)]; }

  /// dw for one perturbation of the data.
  Eigen::VectorXd solve(const QpPerturbation & d) const
  {
    return solve_many(rhs(d)).topRows(n_);
  }

  /// Right-hand side column for one perturbation (unscaled).
  Eigen::VectorXd rhs(const QpPerturbation & d) const
  {
    const Eigen::Index n = n_;
    const Eigen::Index m = m_;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n + m);
    Eigen::VectorXd top = Eigen::VectorXd::Zero(n);
    if (d.d_g.size() > 0) { top += d.d_g * w_; }
    if (d.d_c.size() > 0) { top += d.d_c; }
    if (d.d_a.size() > 0 && m > 0) { top += d.d_a.transpose() * lam_; }
    out.head(n) = -top;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!strong_[static_cast<std::size_t>(i)]) { continue; }
      double v = 0.0;
      if (d.d_a.size() > 0) { v += d.d_a.row(i).dot(w_); }
      if (d.d_b.size() > 0) { v -= d.d_b(i); }
      out(n + i) = -lam_(i) * v;
    }
    return out;
  }

  /// Solves for several right-hand sides at once; returns [dw; dlambda] per column.
  Eigen::MatrixXd solve_many(const Eigen::MatrixXd & rhs_cols) const
  {
    return lu_.solve(row_scale_.asDiagonal() * rhs_cols);
  }

private:
  Eigen::Index n_;
  Eigen::Index m_;
  Eigen::VectorXd w_;
  Eigen::VectorXd lam_;
  std::vector<bool> strong_;
  bool weakly_active_ = false;
  Eigen::VectorXd row_scale_;
  Eigen::FullPivLU<Eigen::MatrixXd> lu_;
};

/// Full set of data Jacobians of w*. Throws DegenerateKkt at singular points.
inline QpDerivatives differentiate_qp(const ProjectionQp & qp, const QpSolution & sol)
{
  const KktSystem kkt(qp, sol);
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index m = qp.num_constraints();
  const Eigen::VectorXd & w = sol.w_star;
  const Eigen::VectorXd & lam = sol.lambda_star;

  const Eigen::Index cols = m + m * n + n + n * n;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + m, cols);
  Eigen::Index c = 0;

  for (Eigen::Index j = 0; j < m; ++j, ++c) {
    if (kkt.strongly_active(j)) { rhs(n + j, c) = lam(j); }
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index l = 0; l < n; ++l, ++c) {
      // unit entry (j, l) of a_bar: top gets -lambda_j e_l, row j gets -lambda_j w_l
      rhs(l, c) = -lam(j);
      if (kkt.strongly_active(j)) { rhs(n + j, c) = -lam(j) * w(l); }
    }
  }
  for (Eigen::Index l = 0; l < n; ++l, ++c) {
    rhs(l, c) = -1.0;
  }
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index mm = 0; mm < n; ++mm, ++c) {
      rhs(l, c) -= w(mm);
      if (l != mm) { rhs(mm, c) -= w(l); }
    }
  }

  const Eigen::MatrixXd sol_cols = kkt.solve_many(rhs).topRows(n);
  QpDerivatives out;
  out.dw_db = sol_cols.leftCols(m);
  out.dw_dA = sol_cols.middleCols(m, m * n);
  out.dw_dc = sol_cols.middleCols(m + m * n, n);
  out.dw_dG = sol_cols.rightCols(n * n);
  out.weakly_active = kkt.weakly_active();
  return out;
}

/// The constant dropped from the projection objective: v^T G^{-1} v with v = c_bar / 2.
inline double projection_constant(const ProjectionQp & qp)
{
  const Eigen::VectorXd v = 0.5 * qp.c_bar;
  return v.dot((0.5 * qp.g_bar).llt().solve(v));
}

/// \f$ \tfrac12 w^T \bar G w + w^T \bar c + \bar M \f$.
inline double projection_objective(const ProjectionQp & qp, const Eigen::VectorXd & w, double m_bar)
{
  if (w.size() != qp.num_vars()) { throw DimensionMismatch("projection_objective: bad w"); }
  return 0.5 * w.dot(qp.g_bar * w) + w.dot(qp.c_bar) + m_bar;
}

}  // namespace ofo_sens

#endif  // OFO_SENS_QP_DIFF_HPP_
