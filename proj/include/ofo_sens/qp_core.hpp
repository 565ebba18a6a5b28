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

#ifndef OFO_SENS_QP_CORE_HPP_
#define OFO_SENS_QP_CORE_HPP_

/**
 * @file
 * @brief Small dense strictly convex QP solver.
 *
 * Solves
 * \f[
 *   \min_w \tfrac12 w^T \bar G w + w^T \bar c \quad \text{s.t.} \quad \bar A w \le \bar b
 * \f]
 * exactly with a dual active-set method (Goldfarb-Idnani) on a Cholesky factor of
 * \f$ \bar G \f$, and certifies the returned point against the KKT conditions.
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ofo_sens/errors.hpp"

namespace ofo_sens {

/// Tight constraints with slack above -kActiveTol belong to the active set.
inline constexpr double kActiveTol = 1e-9;
/// Multipliers at or below this are weakly active.
inline constexpr double kDualTol = 1e-10;

/// One timestep's projection problem.
struct ProjectionQp
{
  Eigen::MatrixXd g_bar;  ///< symmetric positive definite, n_u x n_u
  Eigen::VectorXd c_bar;  ///< n_u
  Eigen::MatrixXd a_bar;  ///< n_bar x n_u
  Eigen::VectorXd b_bar;  ///< n_bar

  Eigen::Index num_vars() const { return g_bar.rows(); }
  Eigen::Index num_constraints() const { return a_bar.rows(); }

  /// Throws DimensionMismatch or NumericalFailure if the data is malformed.
  void validate() const
  {
    const Eigen::Index n = g_bar.rows();
    if (g_bar.cols() != n || c_bar.size() != n) {
      throw DimensionMismatch("ProjectionQp: g_bar must be square and match c_bar");
    }
    if (a_bar.rows() != b_bar.size() || (a_bar.rows() > 0 && a_bar.cols() != n)) {
      throw DimensionMismatch("ProjectionQp: a_bar/b_bar shape mismatch");
    }
    if (!g_bar.allFinite() || !c_bar.allFinite() || !a_bar.allFinite() || !b_bar.allFinite()) {
      throw NumericalFailure("ProjectionQp: non-finite data");
    }
    const double scale = std::max(1.0, g_bar.cwiseAbs().maxCoeff());
    if ((g_bar - g_bar.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw NumericalFailure("ProjectionQp: g_bar is not symmetric");
    }
  }
};

struct QpSolution
{
  Eigen::VectorXd w_star;
  Eigen::VectorXd lambda_star;
  std::vector<int> active_set;  ///< ascending constraint indices
  double kkt_residual = 0.0;
  int iterations = 0;
};

struct NondegeneracyReport
{
  bool strict_complementarity = true;
  bool active_rows_independent = true;

  bool ok() const { return strict_complementarity && active_rows_independent; }
};

/// Max violation over stationarity, primal feasibility, complementarity and dual sign.
inline double kkt_residual(const ProjectionQp & qp, const QpSolution & sol)
{
  const Eigen::Index m = qp.num_constraints();
  if (sol.w_star.size() != qp.num_vars() || sol.lambda_star.size() != m) {
    throw DimensionMismatch("kkt_residual: solution does not match problem");
  }
  Eigen::VectorXd stat = qp.g_bar * sol.w_star + qp.c_bar;
  if (m > 0) { stat += qp.a_bar.transpose() * sol.lambda_star; }
  double res = stat.size() > 0 ? stat.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double slack = qp.a_bar.row(i).dot(sol.w_star) - qp.b_bar(i);
    res = std::max(res, slack);
    res = std::max(res, std::abs(sol.lambda_star(i) * slack));
    res = std::max(res, -sol.lambda_star(i));
  }
  return res;
}

namespace detail {

// Linear algebra of the Goldfarb-Idnani iteration, recomputed from scratch for the
// current working set. Problems here have at most a handful of variables, so this
// is cheaper to get right than rank-one updates of the factors.
class WorkingSet
{
public:
  WorkingSet(const Eigen::LLT<Eigen::MatrixXd> & llt, const Eigen::MatrixXd & normals)
      : llt_(llt), normals_(normals)
  {}

  void set(const std::vector<int> & idx)
  {
    idx_ = idx;
    const Eigen::Index n = normals_.rows();
    const auto q = static_cast<Eigen::Index>(idx.size());
    n_act_.resize(n, q);
    for (Eigen::Index j = 0; j < q; ++j) { n_act_.col(j) = normals_.col(idx[j]); }
    ginv_n_ = llt_.solve(n_act_);
    if (q > 0) {
      const Eigen::MatrixXd m = n_act_.transpose() * ginv_n_;
      m_llt_.compute(m);
      if (m_llt_.info() != Eigen::Success) {
        throw NumericalFailure("solve_qp: working set became linearly dependent");
      }
    }
  }

  // Primal direction z = H n_p and dual direction r = N^* n_p.
  void directions(const Eigen::VectorXd & np, Eigen::VectorXd & z, Eigen::VectorXd & r) const
  {
    z = llt_.solve(np);
    if (idx_.empty()) {
      r.resize(0);
      return;
    }
    r = m_llt_.solve(n_act_.transpose() * z);
    z -= ginv_n_ * r;
  }

  const std::vector<int> & indices() const { return idx_; }

private:
  const Eigen::LLT<Eigen::MatrixXd> & llt_;
  const Eigen::MatrixXd & normals_;
  std::vector<int> idx_;
  Eigen::MatrixXd n_act_;
  Eigen::MatrixXd ginv_n_;
  Eigen::LLT<Eigen::MatrixXd> m_llt_;
};

}  // namespace detail

/**
 * @brief Solve the projection QP exactly.
 *
 * Rows of \f$ \bar A \f$ are normalized internally so that feasibility tolerances are
 * scale free; multipliers are reported for the original rows. Ties between equally
 * violated constraints go to the lowest index.
 *
 * Throws Infeasible when no w satisfies the constraints and NumericalFailure when the
 * Cholesky factorization fails or the iteration does not terminate.
 */
inline QpSolution solve_qp(const ProjectionQp & qp)
{
  qp.validate();
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index m = qp.num_constraints();

  Eigen::LLT<Eigen::MatrixXd> llt(qp.g_bar);
  if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0) {
    throw NumericalFailure("solve_qp: g_bar is not positive definite");
  }

  Eigen::VectorXd row_norm(m);
  Eigen::MatrixXd normals(n, m);
  Eigen::VectorXd rhs(m);
  std::vector<bool> usable(static_cast<std::size_t>(m), true);
  const double a_scale = m > 0 ? std::max(1.0, qp.a_bar.cwiseAbs().maxCoeff()) : 1.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    row_norm(i) = qp.a_bar.row(i).norm();
    if (row_norm(i) <= 1e-14 * a_scale) {
      // 0 * w <= b_i: either always satisfied or never.
      if (qp.b_bar(i) < -kActiveTol) { throw Infeasible("solve_qp: zero row with negative bound"); }
      usable[static_cast<std::size_t>(i)] = false;
      row_norm(i) = 1.0;
      normals.col(i).setZero();
      rhs(i) = 0.0;
      continue;
    }
    normals.col(i) = qp.a_bar.row(i).transpose() / row_norm(i);
    rhs(i) = qp.b_bar(i) / row_norm(i);
  }

  Eigen::VectorXd x = -llt.solve(qp.c_bar);
  detail::WorkingSet ws(llt, normals);
  std::vector<int> active;
  std::vector<double> mu;
  ws.set(active);

  const int max_iter = 50 * static_cast<int>(m + n) + 100;
  int iter = 0;
  Eigen::VectorXd z, r;

  while (true) {
    // Most violated constraint outside the working set.
    int p = -1;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!usable[static_cast<std::size_t>(i)]) { continue; }
      if (std::find(active.begin(), active.end(), static_cast<int>(i)) != active.end()) { continue; }
      const double v = normals.col(i).dot(x) - rhs(i);
      const double tol = 1e-13 * (1.0 + std::abs(rhs(i)) + x.cwiseAbs().maxCoeff());
      if (v > tol && v > worst) {
        worst = v;
        p = static_cast<int>(i);
      }
    }
    if (p < 0) { break; }

    double mu_p = 0.0;
    const Eigen::VectorXd np = normals.col(p);
    while (true) {
      if (++iter > max_iter) { throw NumericalFailure("solve_qp: iteration limit reached"); }
      ws.directions(np, z, r);

      // Partial step: first working constraint whose multiplier reaches zero.
      double t1 = std::numeric_limits<double>::infinity();
      int drop = -1;
      for (std::size_t j = 0; j < active.size(); ++j) {
        if (r(static_cast<Eigen::Index>(j)) > 0.0) {
          const double t = mu[j] / r(static_cast<Eigen::Index>(j));
          if (t < t1) {
            t1 = t;
            drop = static_cast<int>(j);
          }
        }
      }

      const double curv = np.dot(z);
      const double ref = np.dot(llt.solve(np));
      const bool dependent = curv <= 1e-13 * ref;
      const double t2 = dependent ? std::numeric_limits<double>::infinity()
                                  : (normals.col(p).dot(x) - rhs(p)) / curv;

      if (dependent && drop < 0) { throw Infeasible("solve_qp: constraints are inconsistent"); }

      const double t = std::min(t1, t2);
      if (!dependent) { x -= t * z; }
      for (std::size_t j = 0; j < active.size(); ++j) { mu[j] -= t * r(static_cast<Eigen::Index>(j)); }
      mu_p += t;

      if (!dependent && t2 <= t1) {
        active.push_back(p);
        mu.push_back(mu_p);
        ws.set(active);
        break;
      }
      active.erase(active.begin() + drop);
      mu.erase(mu.begin() + drop);
      ws.set(active);
    }
  }

  // Polish on the final working set: N^T x = rhs, x = -G^{-1}(c + N mu).
  Eigen::VectorXd mu_n = Eigen::VectorXd::Zero(m);
  if (!active.empty()) {
    const auto q = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd na(n, q);
    Eigen::VectorXd ra(q);
    for (Eigen::Index j = 0; j < q; ++j) {
      na.col(j) = normals.col(active[static_cast<std::size_t>(j)]);
      ra(j) = rhs(active[static_cast<std::size_t>(j)]);
    }
    const Eigen::MatrixXd ginv_na = llt.solve(na);
    const Eigen::VectorXd ginv_c = llt.solve(qp.c_bar);
    const Eigen::MatrixXd mm = na.transpose() * ginv_na;
    const Eigen::VectorXd mu_a = mm.llt().solve(-ra - na.transpose() * ginv_c);
    x = -ginv_c - ginv_na * mu_a;
    for (Eigen::Index j = 0; j < q; ++j) { mu_n(active[static_cast<std::size_t>(j)]) = mu_a(j); }
  } else {
    x = -llt.solve(qp.c_bar);
  }

  QpSolution sol;
  sol.w_star = x;
  sol.lambda_star = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    sol.lambda_star(i) = std::max(0.0, mu_n(i)) / row_norm(i);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const bool in_working = std::find(active.begin(), active.end(), static_cast<int>(i)) != active.end();
    const double slack = qp.a_bar.row(i).dot(x) - qp.b_bar(i);
    if (in_working || slack >= -kActiveTol) { sol.active_set.push_back(static_cast<int>(i)); }
  }
  sol.iterations = iter;
  sol.kkt_residual = kkt_residual(qp, sol);
  return sol;
}

/**
 * Strict complementarity: every active constraint has lambda_i > tol.
 * Independence: active rows of a_bar have smallest singular value > tol.
 */
inline NondegeneracyReport check_nondegenerate(
  const ProjectionQp & qp, const QpSolution & sol, double tol = kDualTol)
{
  NondegeneracyReport rep;
  if (sol.active_set.empty()) { return rep; }
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(sol.active_set.size()), qp.num_vars());
  for (std::size_t j = 0; j < sol.active_set.size(); ++j) {
    const int i = sol.active_set[j];
    if (!(sol.lambda_star(i) > tol)) { rep.strict_complementarity = false; }
    rows.row(static_cast<Eigen::Index>(j)) = qp.a_bar.row(i);
  }
  if (rows.rows() > rows.cols()) {
    rep.active_rows_independent = false;
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows);
    rep.active_rows_independent = svd.singularValues().minCoeff() > tol;
  }
  return rep;
}

}  // namespace ofo_sens

#endif  // OFO_SENS_QP_CORE_HPP_
