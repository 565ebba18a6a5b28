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

#ifndef OFO_SENS_PLANTS_HPP_
#define OFO_SENS_PLANTS_HPP_

/**
 * @file
 * @brief Steady-state plant models y = h(u) with cost Phi(u, y).
 */

#include <Eigen/Dense>

#include <algorithm>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ofo_sens/errors.hpp"

namespace ofo_sens {

/// Entry (row, col) of grad_h that a mismatch parameter perturbs.
struct MismatchEntry
{
  int row;
  int col;

  bool operator==(const MismatchEntry &) const = default;
};

/// Allowed mismatch entries, one per mismatch parameter (indexed by input).
using MismatchPattern = std::vector<MismatchEntry>;

/**
 * @brief Abstract steady-state plant.
 *
 * Hessians of h are returned per output: hess_h(u)[r](l, j) = d^2 h_r / du_l du_j.
 * Second derivatives of Phi are phi_uu (n_u x n_u), phi_uy (n_u x n_y) and
 * phi_yy (n_y x n_y).
 */
class PlantModel
{
public:
  virtual ~PlantModel() = default;

  virtual int num_inputs() const = 0;
  virtual int num_outputs() const = 0;
  virtual std::string kind() const = 0;

  virtual Eigen::VectorXd h(const Eigen::VectorXd & u) const = 0;
  virtual Eigen::MatrixXd grad_h(const Eigen::VectorXd & u) const = 0;
  virtual std::vector<Eigen::MatrixXd> hess_h(const Eigen::VectorXd & u) const = 0;

  virtual double phi(const Eigen::VectorXd & u, const Eigen::VectorXd & y) const = 0;
  virtual Eigen::RowVectorXd grad_phi_u(const Eigen::VectorXd & u, const Eigen::VectorXd & y) const = 0;
  virtual Eigen::RowVectorXd grad_phi_y(const Eigen::VectorXd & u, const Eigen::VectorXd & y) const = 0;
  virtual Eigen::MatrixXd phi_uu(const Eigen::VectorXd & u, const Eigen::VectorXd & y) const = 0;
  virtual Eigen::MatrixXd phi_uy(const Eigen::VectorXd & u, const Eigen::VectorXd & y) const = 0;
  virtual Eigen::MatrixXd phi_yy(const Eigen::VectorXd & u, const Eigen::VectorXd & y) const = 0;

  virtual bool has_second_derivatives() const { return true; }

  /// Empty when the plant has no gradient-mismatch parameterization.
  virtual MismatchPattern mismatch_pattern() const { return {}; }
};

/// Everything the controller and the sensitivity recursion need at one input.
struct PlantEval
{
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  double phi = 0.0;
  Eigen::MatrixXd grad_h;
  std::vector<Eigen::MatrixXd> hess_h;
  Eigen::RowVectorXd grad_phi_u;
  Eigen::RowVectorXd grad_phi_y;
  Eigen::MatrixXd phi_uu;
  Eigen::MatrixXd phi_uy;
  Eigen::MatrixXd phi_yy;

  /// d Phi(u, h(u)) / du along the true plant.
  Eigen::RowVectorXd composed_gradient() const { return grad_phi_u + grad_phi_y * grad_h; }
};

inline PlantEval evaluate(const PlantModel & plant, const Eigen::VectorXd & u, bool second_order = true)
{
  if (u.size() != plant.num_inputs()) { throw DimensionMismatch("evaluate: u has wrong size"); }
  PlantEval e;
  e.u = u;
  e.y = plant.h(u);
  e.phi = plant.phi(u, e.y);
  e.grad_h = plant.grad_h(u);
  e.grad_phi_u = plant.grad_phi_u(u, e.y);
  e.grad_phi_y = plant.grad_phi_y(u, e.y);
  if (second_order) {
    if (!plant.has_second_derivatives()) {
      throw MissingSecondDerivatives("plant '" + plant.kind() + "' has no second derivatives");
    }
    e.hess_h = plant.hess_h(u);
    e.phi_uu = plant.phi_uu(u, e.y);
    e.phi_uy = plant.phi_uy(u, e.y);
    e.phi_yy = plant.phi_yy(u, e.y);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Toy plant: y = u^2 + 4u, Phi = 0.1 (u^2 y - 4 u y + 5 u) + 5.

struct ToyEval
{
  double y;
  double phi;
  double grad_h;
  double grad_phi_u;
  double grad_phi_y;
};

inline ToyEval toy_eval(double u)
{
  const double y = u * u + 4.0 * u;
  return {
    y,
    0.1 * (u * u * y - 4.0 * u * y + 5.0 * u) + 5.0,
    2.0 * u + 4.0,
    0.1 * (2.0 * u * y - 4.0 * y + 5.0),
    0.1 * (u * u - 4.0 * u),
  };
}

class ToyPlant final : public PlantModel
{
public:
  int num_inputs() const override { return 1; }
  int num_outputs() const override { return 1; }
  std::string kind() const override { return "toy"; }

  Eigen::VectorXd h(const Eigen::VectorXd & u) const override
  {
    return Eigen::VectorXd::Constant(1, toy_eval(u(0)).y);
  }
  Eigen::MatrixXd grad_h(const Eigen::VectorXd & u) const override
  {
    return Eigen::MatrixXd::Constant(1, 1, 2.0 * u(0) + 4.0);
  }
  std::vector<Eigen::MatrixXd> hess_h(const Eigen::VectorXd &) const override
  {
    return {Eigen::MatrixXd::Constant(1, 1, 2.0)};
  }

  double phi(const Eigen::VectorXd & u, const Eigen::VectorXd & y) const override
  {
    const double a = u(0), b = y(0);
    return 0.1 * (a * a * b - 4.0 * a * b + 5.0 * a) + 5.0;
  }
  Eigen::RowVectorXd grad_phi_u(const Eigen::VectorXd & u, const Eigen::VectorXd & y) const override
  {
    return Eigen::RowVectorXd::Constant(1, 0.1 * (2.0 * u(0) * y(0) - 4.0 * y(0) + 5.0));
  }
  Eigen::RowVectorXd grad_phi_y(const Eigen::VectorXd & u, const Eigen::VectorXd &) const override
  {
    return Eigen::RowVectorXd::Constant(1, 0.1 * (u(0) * u(0) - 4.0 * u(0)));
  }
  Eigen::MatrixXd phi_uu(const Eigen::VectorXd &, const Eigen::VectorXd & y) const override
  {
    return Eigen::MatrixXd::Constant(1, 1, 0.2 * y(0));
  }
  Eigen::MatrixXd phi_uy(const Eigen::VectorXd & u, const Eigen::VectorXd &) const override
  {
    return Eigen::MatrixXd::Constant(1, 1, 0.1 * (2.0 * u(0) - 4.0));
  }
  Eigen::MatrixXd phi_yy(const Eigen::VectorXd &, const Eigen::VectorXd &) const override
  {
    return Eigen::MatrixXd::Zero(1, 1);
  }
};

// ---------------------------------------------------------------------------
// Gas-lift plant: each well's oil rate is a quartic in its injected gas, wells feed
// platforms, Phi = -(sum of platform outputs).

class GasLiftPlant final : public PlantModel
{
public:
  /**
   * @param coeffs one row per well, columns s_0..s_4 with f_i(u) = sum_j s_j u_i^j
   * @param platform_of_well 1-based platform index of each well
   */
  GasLiftPlant(Eigen::MatrixXd coeffs, std::vector<int> platform_of_well)
      : coeffs_(std::move(coeffs)), platform_(std::move(platform_of_well))
  {
    if (coeffs_.cols() != 5) { throw DimensionMismatch("GasLiftPlant: need 5 coefficients per well"); }
    if (static_cast<Eigen::Index>(platform_.size()) != coeffs_.rows() || platform_.empty()) {
      throw DimensionMismatch("GasLiftPlant: platform_of_well must list every well");
    }
    if (*std::min_element(platform_.begin(), platform_.end()) < 1) {
      throw DimensionMismatch("GasLiftPlant: platforms are numbered from 1");
    }
    num_platforms_ = *std::max_element(platform_.begin(), platform_.end());
  }

  int num_inputs() const override { return static_cast<int>(coeffs_.rows()); }
  int num_outputs() const override { return num_platforms_; }
  std::string kind() const override { return "gaslift"; }

  const Eigen::MatrixXd & coeffs() const { return coeffs_; }
  const std::vector<int> & platform_of_well() const { return platform_; }

  double well_rate(int i, double u) const
  {
    const auto s = coeffs_.row(i);
    return (((s(4) * u + s(3)) * u + s(2)) * u + s(1)) * u + s(0);
  }
  double well_slope(int i, double u) const
  {
    const auto s = coeffs_.row(i);
    return ((4.0 * s(4) * u + 3.0 * s(3)) * u + 2.0 * s(2)) * u + s(1);
  }
  double well_curvature(int i, double u) const
  {
    const auto s = coeffs_.row(i);
    return (12.0 * s(4) * u + 6.0 * s(3)) * u + 2.0 * s(2);
  }

  Eigen::VectorXd h(const Eigen::VectorXd & u) const override
  {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(num_platforms_);
    for (int i = 0; i < num_inputs(); ++i) { y(platform_[i] - 1) += well_rate(i, u(i)); }
    return y;
  }
  Eigen::MatrixXd grad_h(const Eigen::VectorXd & u) const override
  {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(num_platforms_, num_inputs());
    for (int i = 0; i < num_inputs(); ++i) { g(platform_[i] - 1, i) = well_slope(i, u(i)); }
    return g;
  }
  std::vector<Eigen::MatrixXd> hess_h(const Eigen::VectorXd & u) const override
  {
    std::vector<Eigen::MatrixXd> hs(
      static_cast<std::size_t>(num_platforms_), Eigen::MatrixXd::Zero(num_inputs(), num_inputs()));
    for (int i = 0; i < num_inputs(); ++i) {
      hs[static_cast<std::size_t>(platform_[i] - 1)](i, i) = well_curvature(i, u(i));
    }
    return hs;
  }

  double phi(const Eigen::VectorXd &, const Eigen::VectorXd & y) const override { return -y.sum(); }
  Eigen::RowVectorXd grad_phi_u(const Eigen::VectorXd &, const Eigen::VectorXd &) const override
  {
    return Eigen::RowVectorXd::Zero(num_inputs());
  }
  Eigen::RowVectorXd grad_phi_y(const Eigen::VectorXd &, const Eigen::VectorXd &) const override
  {
    return Eigen::RowVectorXd::Constant(num_platforms_, -1.0);
  }
  Eigen::MatrixXd phi_uu(const Eigen::VectorXd &, const Eigen::VectorXd &) const override
  {
    return Eigen::MatrixXd::Zero(num_inputs(), num_inputs());
  }
  Eigen::MatrixXd phi_uy(const Eigen::VectorXd &, const Eigen::VectorXd &) const override
  {
    return Eigen::MatrixXd::Zero(num_inputs(), num_platforms_);
  }
  Eigen::MatrixXd phi_yy(const Eigen::VectorXd &, const Eigen::VectorXd &) const override
  {
    return Eigen::MatrixXd::Zero(num_platforms_, num_platforms_);
  }

  /// Well i may only mismatch the slope it contributes to its own platform.
  MismatchPattern mismatch_pattern() const override
  {
    MismatchPattern p;
    for (int i = 0; i < num_inputs(); ++i) { p.push_back({platform_[i] - 1, i}); }
    return p;
  }

private:
  Eigen::MatrixXd coeffs_;
  std::vector<int> platform_;
  int num_platforms_ = 0;
};

struct GasLiftEval
{
  Eigen::VectorXd y;
  double phi;
  Eigen::MatrixXd grad_h;
  std::vector<Eigen::MatrixXd> hess_h;
};

inline GasLiftEval gaslift_eval(const GasLiftPlant & plant, const Eigen::VectorXd & u)
{
  GasLiftEval e{plant.h(u), 0.0, plant.grad_h(u), plant.hess_h(u)};
  e.phi = plant.phi(u, e.y);
  return e;
}

// ---------------------------------------------------------------------------

inline bool in_pattern(const MismatchPattern & pattern, int row, int col)
{
  return std::find(pattern.begin(), pattern.end(), MismatchEntry{row, col}) != pattern.end();
}

/// Throws SparsityViolation if beta has a nonzero outside the pattern.
inline void check_pattern(const Eigen::MatrixXd & beta, const MismatchPattern & pattern)
{
  for (Eigen::Index r = 0; r < beta.rows(); ++r) {
    for (Eigen::Index c = 0; c < beta.cols(); ++c) {
      if (beta(r, c) != 0.0 && !in_pattern(pattern, static_cast<int>(r), static_cast<int>(c))) {
        throw SparsityViolation(
          "mismatch entry (" + std::to_string(r + 1) + "," + std::to_string(c + 1) + ") is off-pattern");
      }
    }
  }
}

/// grad_h_true + beta_k, after checking beta_k against the pattern.
inline Eigen::MatrixXd apply_mismatch(
  const Eigen::MatrixXd & grad_h_true, const Eigen::MatrixXd & beta_k, const MismatchPattern & pattern)
{
  if (beta_k.rows() != grad_h_true.rows() || beta_k.cols() != grad_h_true.cols()) {
    throw DimensionMismatch("apply_mismatch: beta has wrong shape");
  }
  check_pattern(beta_k, pattern);
  return grad_h_true + beta_k;
}

/// Time-indexed additive gradient mismatch beta_k, k = 0..horizon-1.
class MismatchSchedule
{
public:
  MismatchSchedule() = default;

  MismatchSchedule(std::vector<Eigen::MatrixXd> beta, const MismatchPattern & pattern)
      : beta_(std::move(beta))
  {
    for (const auto & b : beta_) { check_pattern(b, pattern); }
  }

  static MismatchSchedule zeros(int n_y, int n_u, int horizon)
  {
    MismatchSchedule s;
    s.beta_.assign(static_cast<std::size_t>(horizon), Eigen::MatrixXd::Zero(n_y, n_u));
    return s;
  }

  static MismatchSchedule constant(const Eigen::MatrixXd & beta, int horizon, const MismatchPattern & pattern)
  {
    return MismatchSchedule(std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(horizon), beta), pattern);
  }

  int horizon() const { return static_cast<int>(beta_.size()); }
  bool empty() const { return beta_.empty(); }

  /// beta_k; steps beyond the stored horizon carry no mismatch.
  Eigen::MatrixXd at(int k, int n_y, int n_u) const
  {
    if (k >= 0 && k < horizon()) { return beta_[static_cast<std::size_t>(k)]; }
    return Eigen::MatrixXd::Zero(n_y, n_u);
  }

  Eigen::MatrixXd & mutable_at(int k) { return beta_.at(static_cast<std::size_t>(k)); }
  const std::vector<Eigen::MatrixXd> & values() const { return beta_; }

private:
  std::vector<Eigen::MatrixXd> beta_;
};

/// Input polytope A u <= b and output polytope C y <= d.
struct ConstraintSpec
{
  Eigen::MatrixXd a_mat;
  Eigen::VectorXd b_vec;
  Eigen::MatrixXd c_mat;
  Eigen::VectorXd d_vec;

  Eigen::Index num_input_rows() const { return a_mat.rows(); }
  Eigen::Index num_output_rows() const { return c_mat.rows(); }

  void check_dimensions(int n_u, int n_y) const
  {
    if (a_mat.rows() != b_vec.size() || (a_mat.rows() > 0 && a_mat.cols() != n_u)) {
      throw DimensionMismatch("ConstraintSpec: A must be n_c1 x n_u and match b");
    }
    if (c_mat.rows() != d_vec.size() || (c_mat.rows() > 0 && c_mat.cols() != n_y)) {
      throw DimensionMismatch("ConstraintSpec: C must be n_c2 x n_y and match d");
    }
  }

  /// Config-time check: dimensions, and u0 strictly inside the input polytope.
  void validate(const PlantModel & plant, const Eigen::VectorXd & u0) const
  {
    check_dimensions(plant.num_inputs(), plant.num_outputs());
    if (u0.size() != plant.num_inputs()) { throw ConfigError("u0 has wrong dimension"); }
    if (a_mat.rows() > 0 && ((a_mat * u0 - b_vec).array() >= 0.0).any()) {
      throw ConfigError("u0 is not strictly inside the input constraints");
    }
  }

  /// Rows of C h(u0) <= d that do not hold; such starts are allowed but reported.
  std::vector<int> violated_output_rows(const PlantModel & plant, const Eigen::VectorXd & u0) const
  {
    std::vector<int> rows;
    if (c_mat.rows() == 0) { return rows; }
    const Eigen::VectorXd s = c_mat * plant.h(u0) - d_vec;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) >= 0.0) { rows.push_back(static_cast<int>(i)); }
    }
    return rows;
  }
};

/// Box [lo, hi] on every input as A u <= b rows (upper, then lower, per input).
inline void append_box(Eigen::MatrixXd & a, Eigen::VectorXd & b, const Eigen::VectorXd & lo, const Eigen::VectorXd & hi)
{
  const Eigen::Index n = lo.size();
  const Eigen::Index r0 = a.rows();
  a.conservativeResize(r0 + 2 * n, n);
  b.conservativeResize(r0 + 2 * n);
  a.bottomRows(2 * n).setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    a(r0 + 2 * i, i) = 1.0;
    b(r0 + 2 * i) = hi(i);
    a(r0 + 2 * i + 1, i) = -1.0;
    b(r0 + 2 * i + 1) = -lo(i);
  }
}

}  // namespace ofo_sens

#endif  // OFO_SENS_PLANTS_HPP_
