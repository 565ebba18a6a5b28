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


#ifndef OFO_SENS_FD_ORACLE_HPP_
#define OFO_SENS_FD_ORACLE_HPP_

/**
 * @file
 * @brief Finite-difference derivatives of the whole closed loop by re-running it.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ofo_sens/errors.hpp"
#include "ofo_sens/ofo.hpp"
#include "ofo_sens/plants.hpp"
#include "ofo_sens/sensitivity.hpp"

namespace ofo_sens {

struct FdScheme
{
  enum class Kind { Forward, Central };

  Kind kind = Kind::Central;
  double step = 1e-6;

  void validate() const
  {
    if (!(step > 0.0) || !std::isfinite(step)) { throw PerturbationInvalid("finite-difference step must be positive"); }
  }
};

/// Step the experiments use when none is given.
inline double default_fd_step(const ParameterTarget & t)
{
  switch (t.kind) {
    case ParameterTarget::Kind::StepSize: return 1e-4;
    case ParameterTarget::Kind::MetricG: return 5e-2;
    case ParameterTarget::Kind::InitialInput: return 5e-3;
    case ParameterTarget::Kind::GradientMismatch: return 1e-5;
  }
  return 1e-6;
}

/// A perturbed copy of the run inputs.
struct PerturbedRun
{
  OfoConfig cfg;
  MismatchSchedule mismatch;
  bool has_mismatch = false;
};

/**
 * Adds delta to parameter p of the target, at step s only or at every step when
 * s is empty. Throws PerturbationInvalid for a non-positive alpha, an indefinite G
 * or an infeasible u0.
 */
inline PerturbedRun perturb(
  const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec, const MismatchSchedule * mismatch,
  const ParameterTarget & target, int p, std::optional<int> s, double delta)
{
  PerturbedRun r{cfg, {}, false};
  if (mismatch != nullptr && !mismatch->empty()) {
    r.mismatch = *mismatch;
    r.has_mismatch = true;
  }
  const int T = cfg.horizon;
  auto steps = [&]() {
    std::vector<int> ks;
    if (s) {
      if (*s >= 0 && *s < T) { ks.push_back(*s); }
    } else {
      for (int k = 0; k < T; ++k) { ks.push_back(k); }
    }
    return ks;
  };

  switch (target.kind) {
    case ParameterTarget::Kind::StepSize:
      for (int k : steps()) {
        r.cfg.alpha[static_cast<std::size_t>(k)] += delta;
        if (!(r.cfg.alpha[static_cast<std::size_t>(k)] > 0.0)) {
          throw PerturbationInvalid("alpha becomes non-positive; shrink the step or use the forward scheme");
        }
      }
      break;
    case ParameterTarget::Kind::MetricG: {
      const auto [l, m] = metric_entries(plant.num_inputs()).at(static_cast<std::size_t>(p));
      if (r.cfg.metric_schedule.empty()) {
        r.cfg.metric_schedule.assign(static_cast<std::size_t>(T), cfg.metric_g);
      }
      for (int k : steps()) {
        Eigen::MatrixXd & g = r.cfg.metric_schedule[static_cast<std::size_t>(k)];
        g(l, m) += delta;
        if (l != m) { g(m, l) += delta; }
        if (Eigen::LLT<Eigen::MatrixXd>(g).info() != Eigen::Success) {
          throw PerturbationInvalid("metric G is no longer positive definite");
        }
      }
      break;
    }
    case ParameterTarget::Kind::InitialInput:
      r.cfg.u0(p) += delta;
      if (spec.num_input_rows() > 0 && (spec.a_mat * r.cfg.u0 - spec.b_vec).maxCoeff() > 0.0) {
        throw PerturbationInvalid("perturbed u0 leaves the input constraints");
      }
      break;
    case ParameterTarget::Kind::GradientMismatch: {
      const MismatchEntry e = target_mismatch_entries(target, plant).at(static_cast<std::size_t>(p));
      if (!r.has_mismatch) {
        r.mismatch = MismatchSchedule::zeros(plant.num_outputs(), plant.num_inputs(), T);
        r.has_mismatch = true;
      }
      if (r.mismatch.horizon() < T) {
        throw PerturbationInvalid("mismatch schedule is shorter than the horizon");
      }
      for (int k : steps()) { r.mismatch.mutable_at(k)(e.row, e.col) += delta; }
      break;
    }
  }
  return r;
}

struct FdProbe
{
  double value = 0.0;
  bool activeset_changed = false;
};

inline bool same_active_sets(const Trajectory & a, const Trajectory & b)
{
  if (a.size() != b.size()) { return false; }
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].active_set != b[k].active_set) { return false; }
  }
  return true;
}

/**
 * dPhi^{k_eval}/dp for parameter p of the target perturbed at step s (or at all
 * steps). k_eval defaults to the horizon.
 */
inline FdProbe fd_objective_sensitivity(
  const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec, const MismatchSchedule * mismatch,
  const ParameterTarget & target, int p, std::optional<int> s, const FdScheme & scheme, int k_eval = -1)
{
  scheme.validate();
  if (k_eval < 0) { k_eval = cfg.horizon; }
  if (k_eval > cfg.horizon) { throw DimensionMismatch("fd_objective_sensitivity: k_eval beyond the horizon"); }
  if (s && target.per_step() && *s >= k_eval) { return {0.0, false}; }
  if (p < 0 || p >= num_params(target, plant)) { throw DimensionMismatch("fd_objective_sensitivity: bad parameter index"); }

  const double h = scheme.step;
  auto eval = [&](double delta, Trajectory & traj) {
    const PerturbedRun r = perturb(plant, cfg, spec, mismatch, target, p, s, delta);
    traj = run(plant, r.cfg, spec, r.has_mismatch ? &r.mismatch : nullptr);
    return traj[static_cast<std::size_t>(k_eval)].phi;
  };

  Trajectory plus, minus;
  FdProbe out;
  if (scheme.kind == FdScheme::Kind::Central) {
    const double fp = eval(h, plus);
    const double fm = eval(-h, minus);
    out.value = (fp - fm) / (2.0 * h);
  } else {
    const double fp = eval(h, plus);
    const double f0 = eval(0.0, minus);
    out.value = (fp - f0) / h;
  }
  out.activeset_changed = !same_active_sets(plus, minus);
  return out;
}

/// Every parameter column of the target at once.
inline std::vector<FdProbe> fd_objective_sensitivities(
  const PlantModel & plant, const OfoConfig & cfg, const ConstraintSpec & spec, const MismatchSchedule * mismatch,
  const ParameterTarget & target, std::optional<int> s, const FdScheme & scheme, int k_eval = -1)
{
  std::vector<FdProbe> out;
  const int n_p = num_params(target, plant);
  for (int p = 0; p < n_p; ++p) {
    out.push_back(fd_objective_sensitivity(plant, cfg, spec, mismatch, target, p, s, scheme, k_eval));
  }
  return out;
}

struct EntryComparison
{
  double analytic = 0.0;
  double fd = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  bool excluded = false;
  std::string excluded_reason;
  bool passed = true;
};

struct ComparisonReport
{
  std::vector<EntryComparison> entries;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  int worst_index = -1;
  int num_failed = 0;
  int num_excluded = 0;

  bool passed() const { return num_failed == 0; }
};

/**
 * Entry i passes when |analytic - fd| <= max(abs_tol, rel_tol |fd|). Entries with
 * a non-empty exclusion reason are skipped and counted.
 */
inline ComparisonReport compare_reports(
  const std::vector<double> & analytic, const std::vector<double> & fd, double abs_tol, double rel_tol,
  const std::vector<std::string> & excluded_reason = {})
{
  if (analytic.size() != fd.size() || (!excluded_reason.empty() && excluded_reason.size() != fd.size())) {
    throw ShapeMismatch("compare_reports: analytic and finite-difference shapes differ");
  }
  ComparisonReport rep;
  double worst_ratio = -1.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    EntryComparison e;
    e.analytic = analytic[i];
    e.fd = fd[i];
    e.abs_err = std::abs(analytic[i] - fd[i]);
    e.rel_err = fd[i] != 0.0 ? e.abs_err / std::abs(fd[i]) : (e.abs_err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    if (!excluded_reason.empty() && !excluded_reason[i].empty()) {
      e.excluded = true;
      e.excluded_reason = excluded_reason[i];
      ++rep.num_excluded;
    } else {
      const double tol = std::max(abs_tol, rel_tol * std::abs(fd[i]));
      e.passed = e.abs_err <= tol && std::isfinite(e.analytic);
      if (!e.passed) { ++rep.num_failed; }
      rep.max_abs_err = std::max(rep.max_abs_err, e.abs_err);
      if (std::abs(fd[i]) > abs_tol) { rep.max_rel_err = std::max(rep.max_rel_err, e.rel_err); }
      const double ratio = std::isfinite(e.analytic) ? e.abs_err / tol : std::numeric_limits<double>::infinity();
      if (ratio > worst_ratio) {
        worst_ratio = ratio;
        rep.worst_index = static_cast<int>(i);
      }
    }
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

/// Row-major flattening of matching analytic and finite-difference matrices.
inline ComparisonReport compare_reports(
  const Eigen::MatrixXd & analytic, const Eigen::MatrixXd & fd, double abs_tol, double rel_tol)
{
  if (analytic.rows() != fd.rows() || analytic.cols() != fd.cols()) {
    throw ShapeMismatch("compare_reports: analytic and finite-difference shapes differ");
  }
  std::vector<double> a, f;
  for (Eigen::Index r = 0; r < fd.rows(); ++r) {
    for (Eigen::Index c = 0; c < fd.cols(); ++c) {
      a.push_back(analytic(r, c));
      f.push_back(fd(r, c));
    }
  }
  return compare_reports(a, f, abs_tol, rel_tol);
}

}  // namespace ofo_sens

#endif  // OFO_SENS_FD_ORACLE_HPP_
