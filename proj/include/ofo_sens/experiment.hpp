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


#ifndef OFO_SENS_EXPERIMENT_HPP_
#define OFO_SENS_EXPERIMENT_HPP_

/**
 * @file
 * @brief Sweeps and analytic-versus-finite-difference validation built on a config.
 */

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ofo_sens/config.hpp"
#include "ofo_sens/csv.hpp"
#include "ofo_sens/fd_oracle.hpp"
#include "ofo_sens/ofo.hpp"
#include "ofo_sens/sensitivity.hpp"

namespace ofo_sens {

inline constexpr double kValidationAbsTol = 1e-6;
inline constexpr double kValidationRelTol = 1e-3;

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the lowest-index failure.
inline void parallel_for(int n, int jobs, const std::function<void(int)> & fn)
{
  jobs = std::max(1, std::min(jobs, n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
  auto work = [&](int t) {
    for (int i = t; i < n; i += jobs) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) { pool.emplace_back(work, t); }
    for (auto & th : pool) { th.join(); }
  }
  for (const auto & e : errors) {
    if (e) { std::rethrow_exception(e); }
  }
}

inline ParameterTarget target_from_name(const std::string & name)
{
  if (name == "alpha") { return ParameterTarget::step_size(); }
  if (name == "g") { return ParameterTarget::metric(); }
  if (name == "u0") { return ParameterTarget::initial_input(); }
  if (name == "mismatch") { return ParameterTarget::all_mismatch(); }
  throw ConfigError("unknown parameter '" + name + "'");
}

/// Targets written by `run` when the config lists none.
inline std::vector<std::string> default_targets(const PlantModel & plant)
{
  if (plant.mismatch_pattern().empty()) { return {"alpha", "g", "u0"}; }
  return {"mismatch", "alpha", "g", "u0"};
}

/// min, min + step, ... up to max, with max itself appended when the grid misses it.
inline std::vector<double> sweep_values(double min, double max, double step)
{
  std::vector<double> v;
  const auto n = static_cast<long long>(std::floor((max - min) / step + 1e-9));
  for (long long i = 0; i <= n; ++i) { v.push_back(min + static_cast<double>(i) * step); }
  if (max - v.back() > 1e-12 * std::max(1.0, std::abs(max))) { v.push_back(max); }
  return v;
}

/// A copy of the config at one sweep value and horizon.
inline ExperimentConfig at_grid_point(const ExperimentConfig & base, const std::string & param, double value, int horizon)
{
  ExperimentConfig c = base;
  c.horizon = horizon;
  if (!c.alpha_scalar) {
    c.alpha.resize(static_cast<std::size_t>(horizon), c.alpha.empty() ? 0.0 : c.alpha.back());
  }
  if (param == "alpha") {
    c.alpha = {value};
    c.alpha_scalar = true;
  } else if (param == "g") {
    c.metric_g = value * Eigen::MatrixXd::Identity(base.metric_g.rows(), base.metric_g.cols());
  } else if (param == "u0") {
    c.u0.setConstant(value);
  }
  return c;
}

struct ValidationRow
{
  std::string parameter;
  int horizon = 0;
  double grid_value = std::numeric_limits<double>::quiet_NaN();
  std::string param_index;
  std::optional<int> s;  ///< empty for the uniform (total) derivative
  double analytic = 0.0;
  double fd = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  std::string excluded_reason;
  bool passed = true;

  /// Grid coordinates are folded into the target field.
  std::string target_field() const
  {
    std::string t = parameter + ":T=" + std::to_string(horizon);
    if (!std::isnan(grid_value)) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.12g", grid_value);
      t += ":p=";
      t += buf;
    }
    return t;
  }
};

struct ValidationOptions
{
  FdScheme scheme;
  bool step_from_config = true;  ///< use the config's fd_step or the per-parameter default
  int jobs = 1;
};

/// Analytic and finite-difference derivatives at one configuration.
inline std::vector<ValidationRow> validate_point(
  const ExperimentConfig & cfg, const std::string & param, double grid_value, FdScheme scheme)
{
  const auto plant = cfg.make_plant();
  const ParameterTarget target = target_from_name(param);
  if (target.kind == ParameterTarget::Kind::GradientMismatch && plant->mismatch_pattern().empty()) {
    throw ConfigError("plant '" + plant->kind() + "' has no mismatch parameters");
  }
  const OfoConfig ofo = cfg.ofo();
  const MismatchSchedule ms = cfg.mismatch_schedule(*plant);
  const MismatchSchedule * msp = ms.empty() ? nullptr : &ms;
  cfg.constraints.validate(*plant, cfg.u0);

  const Trajectory traj = run(*plant, ofo, cfg.constraints, msp);
  const SensitivityReport rep = analyze(*plant, ofo, cfg.constraints, msp, traj, target);

  std::vector<std::optional<int>> probes{std::nullopt};
  if (target.kind == ParameterTarget::Kind::GradientMismatch) {
    std::vector<int> steps = cfg.sweep.steps;
    if (steps.empty()) {
      const int T = ofo.horizon;
      steps = {0, T / 4, T / 2, (3 * T) / 4, T - 1};
    }
    for (int s : steps) {
      if (s >= 0 && s < ofo.horizon) { probes.emplace_back(s); }
    }
  }

  std::vector<ValidationRow> rows;
  for (const auto & s : probes) {
    for (int p = 0; p < rep.num_params; ++p) {
      ValidationRow r;
      r.parameter = param;
      r.horizon = ofo.horizon;
      r.grid_value = grid_value;
      r.param_index = param_label(target, *plant, p);
      r.s = s;
      r.analytic = s ? rep.instantaneous(*s, p) : rep.total_dphi(p);
      try {
        const FdProbe fd = fd_objective_sensitivity(*plant, ofo, cfg.constraints, msp, target, p, s, scheme);
        r.fd = fd.value;
        if (fd.activeset_changed) { r.excluded_reason = "activeset_changed"; }
      } catch (const PerturbationInvalid &) {
        r.fd = std::numeric_limits<double>::quiet_NaN();
        r.excluded_reason = "perturbation_invalid";
      }
      if (rep.unreliable && r.excluded_reason.empty()) { r.excluded_reason = "degenerate"; }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

struct ValidationResult
{
  std::vector<ValidationRow> rows;
  ComparisonReport comparison;

  bool passed() const { return comparison.passed(); }
};

inline FdScheme scheme_for(const ExperimentConfig & cfg, const std::string & param, const ValidationOptions & opts)
{
  FdScheme s = opts.scheme;
  if (opts.step_from_config) { s.step = cfg.sweep.fd_step.value_or(default_fd_step(target_from_name(param))); }
  return s;
}

/**
 * Validates `param` over the config's sweep grid for each horizon, or at the
 * nominal point when the config has no grid for it.
 */
inline ValidationResult run_validation(const ExperimentConfig & cfg, const std::string & param, const ValidationOptions & opts)
{
  const FdScheme scheme = scheme_for(cfg, param, opts);
  std::vector<int> horizons = cfg.sweep.horizons;
  if (horizons.empty()) { horizons = {cfg.horizon}; }

  struct Point
  {
    ExperimentConfig cfg;
    double value;
  };
  std::vector<Point> points;
  const bool gridded = cfg.sweep.parameter == param && param != "mismatch";
  for (int T : horizons) {
    if (gridded) {
      for (double v : sweep_values(cfg.sweep.min, cfg.sweep.max, cfg.sweep.step)) {
        points.push_back({at_grid_point(cfg, param, v, T), v});
      }
    } else {
      points.push_back({at_grid_point(cfg, "", 0.0, T), std::numeric_limits<double>::quiet_NaN()});
    }
  }

  std::vector<std::vector<ValidationRow>> per_point(points.size());
  parallel_for(static_cast<int>(points.size()), opts.jobs, [&](int i) {
    const auto & pt = points[static_cast<std::size_t>(i)];
    per_point[static_cast<std::size_t>(i)] = validate_point(pt.cfg, param, pt.value, scheme);
  });

  ValidationResult res;
  for (auto & rows : per_point) {
    for (auto & r : rows) { res.rows.push_back(std::move(r)); }
  }
  std::vector<double> a, f;
  std::vector<std::string> ex;
  for (const auto & r : res.rows) {
    a.push_back(r.analytic);
    f.push_back(r.fd);
    ex.push_back(r.excluded_reason);
  }
  res.comparison = compare_reports(a, f, kValidationAbsTol, kValidationRelTol, ex);
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto & e = res.comparison.entries[i];
    res.rows[i].abs_err = e.abs_err;
    res.rows[i].rel_err = e.rel_err;
    res.rows[i].passed = e.passed;
  }
  return res;
}

/// `target,param_index,s,analytic,fd,abs_err,rel_err,excluded_reason`
inline std::string validation_csv(const std::vector<ValidationRow> & rows)
{
  std::string out = csv_row({"target", "param_index", "s", "analytic", "fd", "abs_err", "rel_err", "excluded_reason"});
  for (const auto & r : rows) {
    out += csv_row(
      {r.target_field(), r.param_index, r.s ? std::to_string(*r.s) : "all", format_double(r.analytic),
       format_double(r.fd), format_double(r.abs_err), format_double(r.rel_err), r.excluded_reason});
  }
  return out;
}

struct SweepRow
{
  int horizon;
  double value;
  double phi;
  std::string param_index;
  double dphi;
};

/// Analytic total derivative and final objective at every grid point.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig & cfg, int jobs)
{
  if (cfg.sweep.parameter.empty() || cfg.sweep.parameter == "mismatch") {
    throw ConfigError("sweep needs a [sweep] section over alpha, g or u0");
  }
  const std::string param = cfg.sweep.parameter;
  std::vector<int> horizons = cfg.sweep.horizons;
  if (horizons.empty()) { horizons = {cfg.horizon}; }
  std::vector<std::pair<int, double>> grid;
  for (int T : horizons) {
    for (double v : sweep_values(cfg.sweep.min, cfg.sweep.max, cfg.sweep.step)) { grid.emplace_back(T, v); }
  }
  std::vector<std::vector<SweepRow>> per(grid.size());
  parallel_for(static_cast<int>(grid.size()), jobs, [&](int i) {
    const auto [T, v] = grid[static_cast<std::size_t>(i)];
    const ExperimentConfig pc = at_grid_point(cfg, param, v, T);
    const auto plant = pc.make_plant();
    pc.constraints.validate(*plant, pc.u0);
    const OfoConfig ofo = pc.ofo();
    const MismatchSchedule ms = pc.mismatch_schedule(*plant);
    const MismatchSchedule * msp = ms.empty() ? nullptr : &ms;
    const Trajectory traj = run(*plant, ofo, pc.constraints, msp);
    const ParameterTarget target = target_from_name(param);
    const SensitivityReport rep = analyze(*plant, ofo, pc.constraints, msp, traj, target);
    for (int p = 0; p < rep.num_params; ++p) {
      per[static_cast<std::size_t>(i)].push_back({T, v, traj.back().phi, param_label(target, *plant, p), rep.total_dphi(p)});
    }
  });
  std::vector<SweepRow> rows;
  for (auto & r : per) { rows.insert(rows.end(), r.begin(), r.end()); }
  return rows;
}

inline std::string sweep_csv(const std::string & param, const std::vector<SweepRow> & rows)
{
  std::string out = csv_row({"horizon", "parameter", "value", "phi", "param_index", "dphi"});
  for (const auto & r : rows) {
    out += csv_row({std::to_string(r.horizon), param, format_double(r.value), format_double(r.phi), r.param_index,
                    format_double(r.dphi)});
  }
  return out;
}

}  // namespace ofo_sens

#endif  // OFO_SENS_EXPERIMENT_HPP_
