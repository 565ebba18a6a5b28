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


// Command-line experiment runner: run, validate, heatmap and sweep.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ofo_sens/config.hpp"
#include "ofo_sens/csv.hpp"
#include "ofo_sens/errors.hpp"
#include "ofo_sens/experiment.hpp"
#include "ofo_sens/fd_oracle.hpp"
#include "ofo_sens/ofo.hpp"
#include "ofo_sens/sensitivity.hpp"

namespace fs = std::filesystem;
using namespace ofo_sens;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitValidation = 4;

struct Options
{
  std::string config;
  std::string out;
  std::string param;
  std::string scheme;
  std::optional<double> h;
  std::string record;
  int jobs = 1;
  int well = 0;
};

fs::path output_dir(const ExperimentConfig & cfg, const Options & o)
{
  return o.out.empty() ? fs::path(cfg.outputs.directory) : fs::path(o.out);
}

bool record_instantaneous(const ExperimentConfig & cfg, const Options & o)
{
  if (!o.record.empty() && o.record != "instantaneous") {
    throw ConfigError("--record accepts only 'instantaneous'");
  }
  return cfg.outputs.record_instantaneous || o.record == "instantaneous";
}

int heatmap_column(const SensitivityReport & rep, const PlantModel & plant, int well)
{
  if (rep.target.kind != ParameterTarget::Kind::GradientMismatch) { return 0; }
  const auto entries = target_mismatch_entries(rep.target, plant);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    if (entries[p].col == well - 1) { return static_cast<int>(p); }
  }
  throw ConfigError("well " + std::to_string(well) + " has no mismatch parameter");
}

int cmd_run(const Options & o)
{
  const ExperimentConfig cfg = load_config(o.config);
  const bool record = record_instantaneous(cfg, o);
  const auto plant = cfg.make_plant();
  const OfoConfig ofo = cfg.ofo();
  const MismatchSchedule ms = cfg.mismatch_schedule(*plant);
  const MismatchSchedule * msp = ms.empty() ? nullptr : &ms;
  for (int r : cfg.constraints.violated_output_rows(*plant, cfg.u0)) {
    std::fprintf(stderr, "note: initial output violates constraint row %d\n", r + 1);
  }

  const Trajectory traj = run(*plant, ofo, cfg.constraints, msp);
  std::vector<std::string> targets = cfg.outputs.targets.empty() ? default_targets(*plant) : cfg.outputs.targets;

  std::string totals;
  std::string heatmap;
  bool unreliable = false;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    AnalyzeOptions ao;
    ao.record_instantaneous = record && i == 0;
    const ParameterTarget t = target_from_name(targets[i]);
    const SensitivityReport rep = analyze(*plant, ofo, cfg.constraints, msp, traj, t, ao);
    unreliable = unreliable || rep.unreliable;
    std::string csv = sensitivity_total_csv(rep, *plant);
    totals += i == 0 ? csv : csv.substr(csv.find('\n') + 1);
    if (ao.record_instantaneous) { heatmap = heatmap_csv(rep, *plant, heatmap_column(rep, *plant, cfg.outputs.heatmap_well)); }
  }

  const fs::path dir = output_dir(cfg, o);
  write_file_atomic(dir / "trajectory.csv", trajectory_csv(traj));
  write_file_atomic(dir / "sensitivity_total.csv", totals);
  if (record) { write_file_atomic(dir / "heatmap.csv", heatmap); }

  const double sign = plant->kind() == "gaslift" ? -1.0 : 1.0;
  std::printf("steps: %d\n", ofo.horizon);
  std::printf("final phi: %s\n", format_double(traj.back().phi).c_str());
  if (sign < 0) { std::printf("final production: %s\n", format_double(-traj.back().phi).c_str()); }
  if (const auto k = first_degenerate_step(traj)) { std::printf("degenerate QP first at step %d\n", *k); }
  if (unreliable) { std::printf("warning: sensitivities past a degenerate step are unreliable\n"); }
  std::printf("wrote %s\n", dir.string().c_str());
  return kExitOk;
}

int cmd_validate(const Options & o)
{
  const ExperimentConfig cfg = load_config(o.config);
  const std::string param = o.param.empty() ? cfg.sweep.parameter : o.param;
  if (param.empty()) { throw ConfigError("validate needs --param or a [sweep] parameter"); }
  (void)target_from_name(param);
  const auto plant = cfg.make_plant();
  if (param == "mismatch" && plant->mismatch_pattern().empty()) {
    throw ConfigError("plant '" + plant->kind() + "' has no mismatch parameters");
  }
  ValidationOptions vo;
  vo.jobs = o.jobs;
  const std::string scheme = o.scheme.empty() ? cfg.sweep.scheme : o.scheme;
  if (scheme == "central") {
    vo.scheme.kind = FdScheme::Kind::Central;
  } else if (scheme == "forward") {
    vo.scheme.kind = FdScheme::Kind::Forward;
  } else {
    throw ConfigError("--scheme must be central or forward");
  }
  if (o.h) {
    if (!(*o.h > 0.0)) { throw ConfigError("--h must be positive"); }
    vo.scheme.step = *o.h;
    vo.step_from_config = false;
  }

  const ValidationResult res = run_validation(cfg, param, vo);
  const fs::path dir = output_dir(cfg, o);
  write_file_atomic(dir / "validation.csv", validation_csv(res.rows));

  const auto & c = res.comparison;
  const int checked = static_cast<int>(res.rows.size()) - c.num_excluded;
  std::printf("parameter: %s\n", param.c_str());
  std::printf("entries: %zu checked: %d excluded: %d failed: %d\n", res.rows.size(), checked, c.num_excluded, c.num_failed);
  std::printf("max abs err: %s\n", format_double(c.max_abs_err).c_str());
  std::printf("max rel err: %s\n", format_double(c.max_rel_err).c_str());
  if (c.worst_index >= 0) {
    const auto & w = res.rows[static_cast<std::size_t>(c.worst_index)];
    std::printf("worst: %s param %s s %s analytic %s fd %s\n", w.target_field().c_str(), w.param_index.c_str(),
                w.s ? std::to_string(*w.s).c_str() : "all", format_double(w.analytic).c_str(), format_double(w.fd).c_str());
  }
  std::printf("%s\n", res.passed() ? "PASS" : "FAIL");
  return res.passed() ? kExitOk : kExitValidation;
}

int cmd_heatmap(const Options & o)
{
  const ExperimentConfig cfg = load_config(o.config);
  if (!record_instantaneous(cfg, o)) {
    throw ConfigError("heatmap needs instantaneous recording (--record instantaneous)");
  }
  const auto plant = cfg.make_plant();
  if (plant->mismatch_pattern().empty()) { throw ConfigError("heatmap needs a plant with mismatch parameters"); }
  const int well = o.well > 0 ? o.well : cfg.outputs.heatmap_well;
  if (well < 1 || well > plant->num_inputs()) { throw ConfigError("--well out of range"); }

  const OfoConfig ofo = cfg.ofo();
  const MismatchSchedule ms = cfg.mismatch_schedule(*plant);
  const MismatchSchedule * msp = ms.empty() ? nullptr : &ms;
  const Trajectory traj = run(*plant, ofo, cfg.constraints, msp);
  AnalyzeOptions ao;
  ao.record_instantaneous = true;
  const ParameterTarget t = ParameterTarget::mismatch(well - 1);
  const SensitivityReport rep = analyze(*plant, ofo, cfg.constraints, msp, traj, t, ao);

  const fs::path dir = output_dir(cfg, o);
  write_file_atomic(dir / "heatmap.csv", heatmap_csv(rep, *plant, 0));

  // Probe points (k, s): first step, middle of the run, late in the run.
  const std::vector<std::pair<int, int>> probes{{1, 0}, {240, 99}, {500, 299}};
  for (std::size_t q = 0; q < probes.size(); ++q) {
    const auto [k, s] = probes[q];
    if (k > ofo.horizon) {
      std::printf("Q%zu k=%d s=%d outside horizon\n", q + 1, k, s);
      continue;
    }
    const auto offset = static_cast<std::size_t>(k) * static_cast<std::size_t>(k - 1) / 2 + static_cast<std::size_t>(s);
    std::printf("Q%zu k=%d s=%d value=%s\n", q + 1, k, s, format_double(rep.heatmap[offset].value(0)).c_str());
  }
  std::printf("wrote %s\n", (dir / "heatmap.csv").string().c_str());
  return kExitOk;
}

int cmd_sweep(const Options & o)
{
  const ExperimentConfig cfg = load_config(o.config);
  const std::vector<SweepRow> rows = run_sweep(cfg, o.jobs);
  const fs::path dir = output_dir(cfg, o);
  write_file_atomic(dir / "sweep.csv", sweep_csv(cfg.sweep.parameter, rows));
  std::printf("points: %zu\nwrote %s\n", rows.size(), (dir / "sweep.csv").string().c_str());
  return kExitOk;
}

int dispatch(const std::function<int()> & fn)
{
  try {
    return fn();
  } catch (const ConfigError & e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const SparsityViolation & e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DimensionMismatch & e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const PerturbationInvalid & e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const StepError & e) {
    std::fprintf(stderr, "numerical failure at step %d: %s\n", e.step(), e.what());
    return kExitNumerical;
  } catch (const Error & e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const fs::filesystem_error & e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Online feedback optimization with closed-form sensitivities"};
  app.set_help_flag("--help", "print this help message and exit");
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App * sub) {
    sub->add_option("--config", o.config, "experiment config file")->required();
    sub->add_option("--out", o.out, "output directory (overrides the config)");
    sub->add_option("--jobs", o.jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
    sub->add_option("--record", o.record, "extra recording: instantaneous");
  };

  auto * run_cmd = app.add_subcommand("run", "run the closed loop and write trajectory and sensitivities");
  common(run_cmd);
  auto * val_cmd = app.add_subcommand("validate", "compare analytic sensitivities with finite differences");
  common(val_cmd);
  val_cmd->add_option("--param", o.param, "alpha, g, u0 or mismatch");
  val_cmd->add_option("--scheme", o.scheme, "central or forward");
  val_cmd->add_option("--h", o.h, "finite-difference step");
  auto * heat_cmd = app.add_subcommand("heatmap", "instantaneous mismatch sensitivities over (k, s)");
  common(heat_cmd);
  heat_cmd->add_option("--well", o.well, "1-based well index");
  auto * sweep_cmd = app.add_subcommand("sweep", "analytic sensitivities over the configured grid");
  common(sweep_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (run_cmd->parsed()) { return dispatch([&] { return cmd_run(o); }); }
  if (val_cmd->parsed()) { return dispatch([&] { return cmd_validate(o); }); }
  if (heat_cmd->parsed()) { return dispatch([&] { return cmd_heatmap(o); }); }
  if (sweep_cmd->parsed()) { return dispatch([&] { return cmd_sweep(o); }); }
  return kExitConfig;
}
