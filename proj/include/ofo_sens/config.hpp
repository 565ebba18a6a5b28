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


#ifndef OFO_SENS_CONFIG_HPP_
#define OFO_SENS_CONFIG_HPP_

/**
 * @file
 * @brief Experiment configuration: plant, constraints, controller, mismatch, sweep
 * and output settings, read from and written to the TOML subset in toml_lite.hpp.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "ofo_sens/csv.hpp"
#include "ofo_sens/errors.hpp"
#include "ofo_sens/ofo.hpp"
#include "ofo_sens/plants.hpp"
#include "ofo_sens/toml_lite.hpp"

namespace ofo_sens {

struct PlantConfig
{
  std::string kind = "toy";
  Eigen::MatrixXd coeffs;
  std::vector<int> platform_of_well;
};

struct MismatchConfig
{
  std::string mode = "none";  ///< none, constant or file
  Eigen::MatrixXd beta;       ///< constant mode: n_y x n_u, applied at every step
  std::string file;           ///< file mode: CSV with header k,row,col,value
};

struct SweepConfig
{
  std::string parameter;  ///< alpha, g, u0 or mismatch; empty when no sweep is configured
  double min = 0.0;
  double max = 0.0;
  double step = 0.0;
  std::vector<int> horizons;
  std::string scheme = "central";
  std::optional<double> fd_step;
  std::vector<int> steps;  ///< per-step probes for mismatch validation (0-based)
};

struct OutputsConfig
{
  std::string directory = "out";
  bool record_instantaneous = false;
  std::vector<std::string> targets;
  int heatmap_well = 1;  ///< 1-based
};

struct ExperimentConfig
{
  PlantConfig plant;
  ConstraintSpec constraints;
  std::vector<double> alpha;
  bool alpha_scalar = true;
  Eigen::MatrixXd metric_g;
  Eigen::VectorXd u0;
  int horizon = 1;
  MismatchConfig mismatch;
  SweepConfig sweep;
  OutputsConfig outputs;
  std::filesystem::path base_dir;

  std::unique_ptr<PlantModel> make_plant() const
  {
    if (plant.kind == "toy") { return std::make_unique<ToyPlant>(); }
    if (plant.kind == "gaslift") {
      try {
        return std::make_unique<GasLiftPlant>(plant.coeffs, plant.platform_of_well);
      } catch (const Error & e) {
        throw ConfigError(e.what());
      }
    }
    throw ConfigError("unknown plant kind '" + plant.kind + "'");
  }

  OfoConfig ofo() const
  {
    OfoConfig c;
    c.alpha = alpha_scalar ? std::vector<double>(static_cast<std::size_t>(std::max(horizon, 0)), alpha.at(0)) : alpha;
    c.metric_g = metric_g;
    c.u0 = u0;
    c.horizon = horizon;
    return c;
  }

  /// The schedule to run with; empty when the mode is none.
  MismatchSchedule mismatch_schedule(const PlantModel & p) const
  {
    const int n_y = p.num_outputs();
    const int n_u = p.num_inputs();
    if (mismatch.mode == "none") { return {}; }
    if (p.mismatch_pattern().empty()) { throw ConfigError("plant '" + p.kind() + "' does not support mismatch"); }
    try {
      if (mismatch.mode == "constant") {
        if (mismatch.beta.rows() != n_y || mismatch.beta.cols() != n_u) {
          throw ConfigError("mismatch beta must be n_y x n_u");
        }
        return MismatchSchedule::constant(mismatch.beta, horizon, p.mismatch_pattern());
      }
      if (mismatch.mode == "file") {
        const auto rows = parse_csv(read_file(base_dir / mismatch.file));
        std::vector<Eigen::MatrixXd> beta(static_cast<std::size_t>(horizon), Eigen::MatrixXd::Zero(n_y, n_u));
        for (std::size_t i = 1; i < rows.size(); ++i) {
          if (rows[i].size() != 4) { throw ConfigError("mismatch file: expected k,row,col,value"); }
          const int k = std::stoi(rows[i][0]);
          const int r = std::stoi(rows[i][1]) - 1;
          const int c = std::stoi(rows[i][2]) - 1;
          if (k < 0 || k >= horizon || r < 0 || r >= n_y || c < 0 || c >= n_u) {
            throw ConfigError("mismatch file: index out of range on line " + std::to_string(i + 1));
          }
          beta[static_cast<std::size_t>(k)](r, c) = std::stod(rows[i][3]);
        }
        return MismatchSchedule(std::move(beta), p.mismatch_pattern());
      }
    } catch (const SparsityViolation & e) {
      throw ConfigError(e.what());
    } catch (const std::invalid_argument &) {
      throw ConfigError("mismatch file: malformed number");
    } catch (const std::out_of_range &) {
      throw ConfigError("mismatch file: number out of range");
    }
    throw ConfigError("unknown mismatch mode '" + mismatch.mode + "'");
  }

  void validate() const
  {
    const auto p = make_plant();
    try {
      ofo().validate(p->num_inputs());
      constraints.validate(*p, u0);
    } catch (const ConfigError &) {
      throw;
    } catch (const Error & e) {
      throw ConfigError(e.what());
    }
    (void)mismatch_schedule(*p);
    if (!sweep.parameter.empty()) {
      static const std::vector<std::string> known{"alpha", "g", "u0", "mismatch"};
      if (std::find(known.begin(), known.end(), sweep.parameter) == known.end()) {
        throw ConfigError("unknown sweep parameter '" + sweep.parameter + "'");
      }
      if (sweep.parameter != "mismatch") {
        if (!(sweep.min < sweep.max)) { throw ConfigError("sweep min must be below max"); }
        if (!(sweep.step > 0.0)) { throw ConfigError("sweep step must be positive"); }
      }
      for (int h : sweep.horizons) {
        if (h < 1) { throw ConfigError("sweep horizons must be positive"); }
      }
      if (sweep.scheme != "central" && sweep.scheme != "forward") { throw ConfigError("scheme must be central or forward"); }
      if (sweep.fd_step && !(*sweep.fd_step > 0.0)) { throw ConfigError("fd_step must be positive"); }
    }
    if (!p->mismatch_pattern().empty() && (outputs.heatmap_well < 1 || outputs.heatmap_well > p->num_inputs())) {
      throw ConfigError("heatmap_well out of range");
    }
  }
};

namespace detail {

inline double as_double(const toml::Value & v, const std::string & key)
{
  if (const auto * d = std::get_if<double>(&v.data)) { return *d; }
  if (const auto * i = std::get_if<long long>(&v.data)) { return static_cast<double>(*i); }
  throw ConfigError("'" + key + "' must be a number");
}

inline long long as_int(const toml::Value & v, const std::string & key)
{
  if (const auto * i = std::get_if<long long>(&v.data)) { return *i; }
  throw ConfigError("'" + key + "' must be an integer");
}

inline const toml::Array & as_array(const toml::Value & v, const std::string & key)
{
  if (const auto * a = std::get_if<toml::Array>(&v.data)) { return *a; }
  throw ConfigError("'" + key + "' must be an array");
}

inline Eigen::VectorXd as_vector(const toml::Value & v, const std::string & key)
{
  const auto & a = as_array(v, key);
  Eigen::VectorXd out(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) { out(static_cast<Eigen::Index>(i)) = as_double(a[i], key); }
  return out;
}

inline Eigen::MatrixXd as_matrix(const toml::Value & v, const std::string & key)
{
  const auto & rows = as_array(v, key);
  if (rows.empty()) { return {}; }
  const std::size_t cols = as_array(rows[0], key).size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto & row = as_array(rows[r], key);
    if (row.size() != cols) { throw ConfigError("'" + key + "' has ragged rows"); }
    for (std::size_t c = 0; c < cols; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = as_double(row[c], key);
    }
  }
  return out;
}

inline std::string as_string(const toml::Value & v, const std::string & key)
{
  if (const auto * s = std::get_if<std::string>(&v.data)) { return *s; }
  throw ConfigError("'" + key + "' must be a string");
}

inline bool as_bool(const toml::Value & v, const std::string & key)
{
  if (const auto * b = std::get_if<bool>(&v.data)) { return *b; }
  throw ConfigError("'" + key + "' must be true or false");
}

inline toml::Value vec_value(const Eigen::VectorXd & v)
{
  toml::Array a;
  for (Eigen::Index i = 0; i < v.size(); ++i) { a.push_back({v(i)}); }
  return {a};
}

inline toml::Value mat_value(const Eigen::MatrixXd & m)
{
  toml::Array rows;
  for (Eigen::Index r = 0; r < m.rows(); ++r) { rows.push_back(vec_value(m.row(r).transpose())); }
  return {rows};
}

template <class T>
toml::Value list_value(const std::vector<T> & xs)
{
  toml::Array a;
  for (const auto & x : xs) {
    if constexpr (std::is_same_v<T, int>) {
      a.push_back({static_cast<long long>(x)});
    } else {
      a.push_back({x});
    }
  }
  return {a};
}

class SectionReader
{
public:
  SectionReader(const toml::Document & doc, const std::string & name, bool required)
      : name_(name), sec_(doc.find(name))
  {
    if (required && sec_ == nullptr) { throw ConfigError("missing section [" + name + "]"); }
  }

  bool present() const { return sec_ != nullptr; }

  const toml::Value * get(const std::string & key) const
  {
    if (sec_ == nullptr) { return nullptr; }
    used_.push_back(key);
    return sec_->find(key);
  }

  const toml::Value & need(const std::string & key) const
  {
    const auto * v = get(key);
    if (v == nullptr) { throw ConfigError("missing key '" + key + "' in [" + name_ + "]"); }
    return *v;
  }

  void reject_unknown() const
  {
    if (sec_ == nullptr) { return; }
    for (const auto & [k, _] : sec_->entries) {
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) {
        throw ConfigError("unknown key '" + k + "' in [" + name_ + "]");
      }
    }
  }

  std::string key(const std::string & k) const { return name_ + "." + k; }

private:
  std::string name_;
  const toml::Section * sec_;
  mutable std::vector<std::string> used_;
};

}  // namespace detail

/// Builds a config from parsed TOML; base_dir anchors relative file references.
inline ExperimentConfig config_from_document(const toml::Document & doc, const std::filesystem::path & base_dir = {})
{
  using namespace detail;
  static const std::vector<std::string> known{"", "plant", "constraints", "ofo", "mismatch", "sweep", "outputs"};
  for (const auto & [name, sec] : doc.sections) {
    if (std::find(known.begin(), known.end(), name) == known.end()) { throw ConfigError("unknown section [" + name + "]"); }
    if (name.empty() && !sec.entries.empty()) { throw ConfigError("keys must live inside a section"); }
  }

  ExperimentConfig c;
  c.base_dir = base_dir;

  SectionReader plant(doc, "plant", true);
  c.plant.kind = as_string(plant.need("kind"), plant.key("kind"));
  if (c.plant.kind == "gaslift") {
    c.plant.coeffs = as_matrix(plant.need("coeffs"), plant.key("coeffs"));
    for (const auto & v : as_array(plant.need("platform_of_well"), plant.key("platform_of_well"))) {
      c.plant.platform_of_well.push_back(static_cast<int>(as_int(v, plant.key("platform_of_well"))));
    }
  }
  plant.reject_unknown();

  SectionReader con(doc, "constraints", true);
  c.constraints.a_mat = as_matrix(con.need("a"), con.key("a"));
  c.constraints.b_vec = as_vector(con.need("b"), con.key("b"));
  c.constraints.c_mat = as_matrix(con.need("c"), con.key("c"));
  c.constraints.d_vec = as_vector(con.need("d"), con.key("d"));
  con.reject_unknown();

  SectionReader ofo(doc, "ofo", true);
  const toml::Value & alpha = ofo.need("alpha");
  if (alpha.is_array()) {
    c.alpha_scalar = false;
    const Eigen::VectorXd a = as_vector(alpha, ofo.key("alpha"));
    c.alpha.assign(a.data(), a.data() + a.size());
  } else {
    c.alpha = {as_double(alpha, ofo.key("alpha"))};
  }
  c.metric_g = as_matrix(ofo.need("metric_g"), ofo.key("metric_g"));
  c.u0 = as_vector(ofo.need("u0"), ofo.key("u0"));
  c.horizon = static_cast<int>(as_int(ofo.need("horizon"), ofo.key("horizon")));
  ofo.reject_unknown();

  SectionReader mm(doc, "mismatch", false);
  if (const auto * v = mm.get("mode")) { c.mismatch.mode = as_string(*v, mm.key("mode")); }
  if (const auto * v = mm.get("beta")) { c.mismatch.beta = as_matrix(*v, mm.key("beta")); }
  if (const auto * v = mm.get("file")) { c.mismatch.file = as_string(*v, mm.key("file")); }
  mm.reject_unknown();
  if (c.mismatch.mode == "file" && !std::filesystem::exists(base_dir / c.mismatch.file)) {
    throw ConfigError("mismatch file '" + c.mismatch.file + "' does not exist");
  }

  SectionReader sw(doc, "sweep", false);
  if (sw.present()) {
    c.sweep.parameter = as_string(sw.need("parameter"), sw.key("parameter"));
    if (const auto * v = sw.get("min")) { c.sweep.min = as_double(*v, sw.key("min")); }
    if (const auto * v = sw.get("max")) { c.sweep.max = as_double(*v, sw.key("max")); }
    if (const auto * v = sw.get("step")) { c.sweep.step = as_double(*v, sw.key("step")); }
    if (const auto * v = sw.get("horizons")) {
      for (const auto & h : as_array(*v, sw.key("horizons"))) {
        c.sweep.horizons.push_back(static_cast<int>(as_int(h, sw.key("horizons"))));
      }
    }
    if (const auto * v = sw.get("scheme")) { c.sweep.scheme = as_string(*v, sw.key("scheme")); }
    if (const auto * v = sw.get("fd_step")) { c.sweep.fd_step = as_double(*v, sw.key("fd_step")); }
    if (const auto * v = sw.get("steps")) {
      for (const auto & s : as_array(*v, sw.key("steps"))) {
        c.sweep.steps.push_back(static_cast<int>(as_int(s, sw.key("steps"))));
      }
    }
    sw.reject_unknown();
  }

  SectionReader out(doc, "outputs", false);
  if (const auto * v = out.get("directory")) { c.outputs.directory = as_string(*v, out.key("directory")); }
  if (const auto * v = out.get("record_instantaneous")) {
    c.outputs.record_instantaneous = as_bool(*v, out.key("record_instantaneous"));
  }
  if (const auto * v = out.get("targets")) {
    for (const auto & t : as_array(*v, out.key("targets"))) { c.outputs.targets.push_back(as_string(t, out.key("targets"))); }
  }
  if (const auto * v = out.get("heatmap_well")) {
    c.outputs.heatmap_well = static_cast<int>(as_int(*v, out.key("heatmap_well")));
  }
  out.reject_unknown();
  return c;
}

inline toml::Document config_to_document(const ExperimentConfig & c)
{
  using namespace detail;
  toml::Document doc;
  auto & plant = doc.get_or_add("plant");
  plant.set("kind", {c.plant.kind});
  if (c.plant.kind == "gaslift") {
    plant.set("coeffs", mat_value(c.plant.coeffs));
    plant.set("platform_of_well", list_value(c.plant.platform_of_well));
  }
  auto & con = doc.get_or_add("constraints");
  con.set("a", mat_value(c.constraints.a_mat));
  con.set("b", vec_value(c.constraints.b_vec));
  con.set("c", mat_value(c.constraints.c_mat));
  con.set("d", vec_value(c.constraints.d_vec));
  auto & ofo = doc.get_or_add("ofo");
  if (c.alpha_scalar) {
    ofo.set("alpha", {c.alpha.at(0)});
  } else {
    ofo.set("alpha", list_value(c.alpha));
  }
  ofo.set("metric_g", mat_value(c.metric_g));
  ofo.set("u0", vec_value(c.u0));
  ofo.set("horizon", {static_cast<long long>(c.horizon)});
  if (c.mismatch.mode != "none" || c.mismatch.beta.size() > 0 || !c.mismatch.file.empty()) {
    auto & mm = doc.get_or_add("mismatch");
    mm.set("mode", {c.mismatch.mode});
    if (c.mismatch.beta.size() > 0) { mm.set("beta", mat_value(c.mismatch.beta)); }
    if (!c.mismatch.file.empty()) { mm.set("file", {c.mismatch.file}); }
  }
  if (!c.sweep.parameter.empty()) {
    auto & sw = doc.get_or_add("sweep");
    sw.set("parameter", {c.sweep.parameter});
    sw.set("min", {c.sweep.min});
    sw.set("max", {c.sweep.max});
    sw.set("step", {c.sweep.step});
    sw.set("horizons", list_value(c.sweep.horizons));
    sw.set("scheme", {c.sweep.scheme});
    if (c.sweep.fd_step) { sw.set("fd_step", {*c.sweep.fd_step}); }
    if (!c.sweep.steps.empty()) { sw.set("steps", list_value(c.sweep.steps)); }
  }
  auto & out = doc.get_or_add("outputs");
  out.set("directory", {c.outputs.directory});
  out.set("record_instantaneous", {c.outputs.record_instantaneous});
  if (!c.outputs.targets.empty()) { out.set("targets", list_value(c.outputs.targets)); }
  out.set("heatmap_well", {static_cast<long long>(c.outputs.heatmap_well)});
  return doc;
}

inline ExperimentConfig parse_config(const std::string & text, const std::filesystem::path & base_dir = {})
{
  return config_from_document(toml::parse(text), base_dir);
}

inline std::string serialize_config(const ExperimentConfig & c)
{
  return toml::serialize(config_to_document(c));
}

/// Reads and validates a config file.
inline ExperimentConfig load_config(const std::filesystem::path & path)
{
  if (!std::filesystem::is_regular_file(path)) { throw ConfigError("config file '" + path.string() + "' not found"); }
  ExperimentConfig c = parse_config(read_file(path), path.parent_path());
  c.validate();
  return c;
}

}  // namespace ofo_sens

#endif  // OFO_SENS_CONFIG_HPP_
