// Copyright 2026 The bohmflux Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Configuration-driven experiment runner: JSON config in, CSV/JSON data and
// a digest manifest out.

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bohmflux/digest.hpp"
#include "bohmflux/ensemble_stats.hpp"
#include "bohmflux/error.hpp"
#include "bohmflux/grid_state.hpp"
#include "bohmflux/hamiltonian.hpp"
#include "bohmflux/oracles.hpp"
#include "bohmflux/pipeline.hpp"
#include "bohmflux/propagator.hpp"
#include "bohmflux/trajectories.hpp"

#ifndef BOHMFLUX_VERSION
#define BOHMFLUX_VERSION "0.0.0"
#endif

namespace bohmflux {

using json = nlohmann::json;

inline constexpr const char* kOutputDirEnv = "BOHMFLUX_OUTPUT_DIR";

enum class EnsembleMode { kMonteCarlo, kQuadrature, kExplicit };

struct InitialStateConfig {
  double sigma_x = std::sqrt(0.5);
  double sigma_y = std::sqrt(0.5);
  double k = 0.0;
  SpinPreset spin = SpinPreset::kScalar;
};

struct EnsembleConfig {
  EnsembleMode mode = EnsembleMode::kMonteCarlo;
  std::size_t n = 0;
  std::optional<std::uint64_t> master_seed;
  std::size_t quadrature_points = 48;
  std::array<double, 2> quadrature_half_width{6.0, 6.0};
  std::vector<std::array<double, 2>> initial_conditions;
  std::vector<std::array<double, 2>> tracked;
  bool ledgers = true;
};

struct OutputConfig {
  std::optional<std::filesystem::path> directory;
  bool trajectories = true;
  std::size_t trajectory_limit = 200;
  bool ledgers = true;
  bool report = true;
  bool u_of_y = true;
  bool snapshots = false;
};

struct ComparisonConfig {
  bool oracle = true;
  std::map<std::string, double> tolerances;

  double tolerance(const std::string& name, double fallback) const {
    auto it = tolerances.find(name);
    return it == tolerances.end() ? fallback : it->second;
  }
};

struct ExperimentConfig {
  std::string name = "experiment";
  HamiltonianSpec hamiltonian;
  PresetParams params;
  InitialStateConfig initial;
  Grid grid{256, 8.0};
  PropagationPlan plan;
  EnsembleConfig ensemble;
  OutputConfig outputs;
  ComparisonConfig comparison;
  json source;  // parsed document, used for the config hash

  static ExperimentConfig from_json(const json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
        allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing " + where + "." + key);
  return get_or<T>(j, key, T{}, where);
}

inline std::array<double, 2> pair_or_scalar(const json& j, const char* key,
                                            std::array<double, 2> fallback,
                                            const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (v.is_number()) return {v.get<double>(), v.get<double>()};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
    return {v[0].get<double>(), v[1].get<double>()};
  }
  throw ConfigError(where + "." + key + " must be a number or a pair of numbers");
}

inline std::vector<std::array<double, 2>> point_list(const json& j, const char* key,
                                                     const std::string& where) {
  std::vector<std::array<double, 2>> out;
  if (!j.contains(key)) return out;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(where + "." + key + " must be a list of [x, y] pairs");
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ConfigError(where + "." + key + " must be a list of [x, y] pairs");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  using detail::check_keys;
  using detail::get_or;
  using detail::require;
  ExperimentConfig c;
  c.source = doc;
  check_keys(doc, {"name", "description", "hamiltonian", "initial_state", "grid", "plan", "ensemble",
                   "outputs", "comparison"},
             "config");
  c.name = get_or<std::string>(doc, "name", "experiment", "config");
  if (c.name.empty() || c.name.find('/') != std::string::npos) {
    throw ConfigError("config.name must be a non-empty plain name");
  }

  const json ham = doc.value("hamiltonian", json::object());
  check_keys(ham, {"preset", "lambda", "drive_speed", "drive_duration", "mass_x", "mass_y",
                   "v_system", "v_env", "v_int", "p_coupling", "system_in_dynamics",
                   "environment_in_dynamics"},
             "hamiltonian");
  const auto preset = parse_preset(require<std::string>(ham, "preset", "hamiltonian"));
  c.params.lambda = get_or(ham, "lambda", c.params.lambda, "hamiltonian");
  c.params.drive_speed = get_or(ham, "drive_speed", c.params.drive_speed, "hamiltonian");
  c.params.drive_duration = get_or(ham, "drive_duration", c.params.drive_duration, "hamiltonian");
  c.hamiltonian = expand_preset(preset, c.params);
  const bool custom = preset == HamiltonianPreset::kCustom;
  for (const char* key : {"v_system", "v_env", "v_int", "p_coupling", "system_in_dynamics",
                          "environment_in_dynamics"}) {
    if (!custom && ham.contains(key)) {
      throw ConfigError(std::string("hamiltonian.") + key + " is only allowed with preset custom");
    }
  }
  HamiltonianSpec& h = c.hamiltonian;
  h.mass_x = get_or(ham, "mass_x", h.mass_x, "hamiltonian");
  h.mass_y = get_or(ham, "mass_y", h.mass_y, "hamiltonian");
  if (custom) {
    if (ham.contains("v_system")) h.v_system = Expression::parse(require<std::string>(ham, "v_system", "hamiltonian"));
    if (ham.contains("v_env")) h.v_env = Expression::parse(require<std::string>(ham, "v_env", "hamiltonian"));
    if (ham.contains("v_int")) h.v_int = Expression::parse(require<std::string>(ham, "v_int", "hamiltonian"));
    h.p_coupling = get_or(ham, "p_coupling", 0.0, "hamiltonian");
    h.system_in_dynamics = get_or(ham, "system_in_dynamics", true, "hamiltonian");
    h.environment_in_dynamics = get_or(ham, "environment_in_dynamics", true, "hamiltonian");
    if (ham.contains("drive_speed") || ham.contains("drive_duration")) {
      h.spin_drive = SpinDrive{c.params.drive_speed, c.params.drive_duration};
    }
  }
  h.validate();

  const json ini = doc.value("initial_state", json::object());
  check_keys(ini, {"sigma_x", "sigma_y", "k", "spin"}, "initial_state");
  c.initial.sigma_x = get_or(ini, "sigma_x", c.initial.sigma_x, "initial_state");
  c.initial.sigma_y = get_or(ini, "sigma_y", c.initial.sigma_y, "initial_state");
  c.initial.k = get_or(ini, "k", c.initial.k, "initial_state");
  const auto spin = get_or<std::string>(ini, "spin", "scalar", "initial_state");
  if (spin == "scalar") c.initial.spin = SpinPreset::kScalar;
  else if (spin == "steering") c.initial.spin = SpinPreset::kSteering;
  else throw ConfigError("initial_state.spin must be 'scalar' or 'steering'");
  if (h.spin_drive && c.initial.spin != SpinPreset::kSteering) {
    throw ConfigError("a spin drive needs initial_state.spin = 'steering'");
  }

  const json grid = require<json>(doc, "grid", "config");
  check_keys(grid, {"points", "half_width"}, "grid");
  std::array<std::size_t, 2> pts{};
  const json& p = grid.contains("points") ? grid.at("points") : json();
  if (p.is_number_unsigned()) pts = {p.get<std::size_t>(), p.get<std::size_t>()};
  else if (p.is_array() && p.size() == 2 && p[0].is_number_unsigned() && p[1].is_number_unsigned()) {
    pts = {p[0].get<std::size_t>(), p[1].get<std::size_t>()};
  } else {
    throw ConfigError("grid.points must be a positive integer or a pair of them");
  }
  if (!grid.contains("half_width")) throw ConfigError("missing grid.half_width");
  const auto hw = detail::pair_or_scalar(grid, "half_width", {0.0, 0.0}, "grid");
  c.grid = Grid(Axis{pts[0], hw[0]}, Axis{pts[1], hw[1]});

  const json plan = require<json>(doc, "plan", "config");
  check_keys(plan, {"dt", "t_final", "snapshot_stride"}, "plan");
  c.plan.dt = require<double>(plan, "dt", "plan");
  c.plan.t_final = require<double>(plan, "t_final", "plan");
  const auto stride = get_or<long long>(plan, "snapshot_stride", 1, "plan");
  if (stride < 1) throw ConfigError("plan.snapshot_stride must be >= 1");
  c.plan.snapshot_stride = static_cast<std::size_t>(stride);
  c.plan.validate();

  const json ens = require<json>(doc, "ensemble", "config");
  check_keys(ens, {"mode", "n", "master_seed", "quadrature_points", "quadrature_half_width",
                   "initial_conditions", "tracked", "ledgers"},
             "ensemble");
  const auto mode = require<std::string>(ens, "mode", "ensemble");
  EnsembleConfig& e = c.ensemble;
  if (mode == "monte_carlo") e.mode = EnsembleMode::kMonteCarlo;
  else if (mode == "quadrature") e.mode = EnsembleMode::kQuadrature;
  else if (mode == "explicit") e.mode = EnsembleMode::kExplicit;
  else throw ConfigError("ensemble.mode must be monte_carlo, quadrature or explicit");
  if (ens.contains("master_seed")) e.master_seed = require<std::uint64_t>(ens, "master_seed", "ensemble");
  e.n = get_or<std::size_t>(ens, "n", 0, "ensemble");
  e.quadrature_points = get_or<std::size_t>(ens, "quadrature_points", e.quadrature_points, "ensemble");
  e.quadrature_half_width = detail::pair_or_scalar(ens, "quadrature_half_width", e.quadrature_half_width, "ensemble");
  e.initial_conditions = detail::point_list(ens, "initial_conditions", "ensemble");
  e.tracked = detail::point_list(ens, "tracked", "ensemble");
  e.ledgers = get_or(ens, "ledgers", true, "ensemble");
  if (e.mode == EnsembleMode::kMonteCarlo) {
    if (e.n == 0) throw ConfigError("ensemble.n must be positive in monte_carlo mode");
    if (!e.master_seed) throw ConfigError("ensemble.master_seed is required in monte_carlo mode");
  }
  if (e.mode == EnsembleMode::kExplicit && e.initial_conditions.empty()) {
    throw ConfigError("ensemble.initial_conditions is required in explicit mode");
  }

  const json out = doc.value("outputs", json::object());
  check_keys(out, {"directory", "trajectories", "trajectory_limit", "ledgers", "report", "u_of_y",
                   "snapshots"},
             "outputs");
  if (out.contains("directory")) c.outputs.directory = require<std::string>(out, "directory", "outputs");
  c.outputs.trajectories = get_or(out, "trajectories", true, "outputs");
  c.outputs.trajectory_limit = get_or<std::size_t>(out, "trajectory_limit", 200, "outputs");
  c.outputs.ledgers = get_or(out, "ledgers", true, "outputs");
  c.outputs.report = get_or(out, "report", true, "outputs");
  c.outputs.u_of_y = get_or(out, "u_of_y", true, "outputs");
  c.outputs.snapshots = get_or(out, "snapshots", false, "outputs");

  const json cmp = doc.value("comparison", json::object());
  check_keys(cmp, {"oracle", "tolerances"}, "comparison");
  c.comparison.oracle = get_or(cmp, "oracle", true, "comparison");
  if (cmp.contains("tolerances")) {
    const json& tol = cmp.at("tolerances");
    if (!tol.is_object()) throw ConfigError("comparison.tolerances must be an object");
    for (const auto& [key, value] : tol.items()) {
      if (!value.is_number() || !(value.get<double>() > 0.0)) {
        throw ConfigError("comparison.tolerances." + key + " must be a positive number");
      }
      c.comparison.tolerances[key] = value.get<double>();
    }
  }
  return c;
}

inline ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

// ---------------------------------------------------------------------------
// Checks

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

inline json to_json(const CheckResult& c) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"name", c.name}, {"value", num(c.value)}, {"tolerance", num(c.tolerance)},
          {"passed", c.passed}, {"detail", c.detail}};
}

inline CheckResult upper_bound_check(std::string name, double value, double tolerance,
                                     std::string detail = {}) {
  return {std::move(name), value, tolerance, std::isfinite(value) && value <= tolerance,
          std::move(detail)};
}

/// Per-snapshot comparison data gathered while the pipeline streams.
struct OracleTrace {
  std::vector<std::pair<double, double>> qp_infidelity;  // (t, 1 - |<num|exact>|^2)
  std::vector<std::pair<double, double>> pp_density_l1;  // (t, L1 distance)
};

namespace detail {

inline bool near_integer_time(double t, double tol = 1e-9) {
  return t > 0.5 && std::abs(t - std::round(t)) < tol;
}

inline double max_over_time(const std::vector<double>& v, const std::vector<double>& times,
                            double t_min = -1.0) {
  double m = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (times[k] >= t_min && std::isfinite(v[k])) m = std::max(m, std::abs(v[k]));
  }
  return m;
}

inline std::size_t time_index(const std::vector<double>& times, double t) {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (std::abs(times[k] - t) < 1e-9) return k;
  }
  return times.size();
}

inline void quadratic_pair_checks(const ExperimentConfig& cfg, const PipelineResult& r,
                                  const OracleTrace& trace, std::vector<CheckResult>& out) {
  using Q = QuadraticPairOracle;
  const auto& tol = cfg.comparison;
  double infid = 0.0;
  for (const auto& [t, v] : trace.qp_infidelity) infid = std::max(infid, v);
  if (!trace.qp_infidelity.empty()) {
    out.push_back(upper_bound_check("state_infidelity", infid, tol.tolerance("state_infidelity", 1e-6),
                                    "max over integer snapshot times"));
  }
  double traj = 0.0, u0 = 0.0, u = 0.0, dint = 0.0, dent = 0.0;
  bool closure = true;
  std::optional<double> cum11;
  const bool quadrature_main = cfg.ensemble.mode == EnsembleMode::kQuadrature;
  for (std::size_t e = 0; e < r.ensembles.size(); ++e) {
    // Quadrature nodes reach far into the tails; they are checked through the
    // ensemble identities instead.
    if (e == 0 && quadrature_main) continue;
    const auto& run = r.ensembles[e];
    const auto& set = run.trajectories;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.excluded[i]) continue;
      const double x0 = set.samples[i].x0, y0 = set.samples[i].y0;
      for (std::size_t k = 0; k < r.times.size(); ++k) {
        const double t = r.times[k];
        traj = std::max(traj, std::abs(set.positions[i][k][1] - Q::Y(t, x0, y0)));
      }
      if (run.ledgers.empty() || run.ledgers[i].size() == 0) continue;
      const EnergyLedger& L = run.ledgers[i];
      u0 = std::max(u0, std::abs(L.u[0] - 0.375));
      for (std::size_t k = 0; k < L.size(); ++k) {
        const double t = L.times[k], Y = Q::Y(t, x0, y0), Yd = Q::Ydot(t, x0, y0);
        u = std::max(u, std::abs(L.u[k] - Q::u(t, Y)));
        dint = std::max(dint, std::abs(L.du_int[k] - Q::du_int(t, Y)));
        dent = std::max(dent, std::abs(L.du_ent[k] - Q::du_ent(t, Y, Yd)));
      }
      closure = closure && L.closure_ok;
      const std::size_t k2 = time_index(L.times, 2.0);
      if (x0 == 1.0 && y0 == 1.0 && k2 < L.size()) cum11 = std::abs(L.cum_int[k2] - Q::cum_int(2.0, 1.0, 1.0));
    }
  }
  if (quadrature_main && r.ensembles.size() < 2) return;
  out.push_back(upper_bound_check("trajectory_max_error", traj, tol.tolerance("trajectory_max_error", 1e-3)));
  out.push_back(upper_bound_check("u_initial", u0, tol.tolerance("u_initial", 1e-6)));
  out.push_back(upper_bound_check("u_max_error", u, tol.tolerance("u_max_error", 1e-3)));
  out.push_back(upper_bound_check("du_int_max_error", dint, tol.tolerance("du_int_max_error", 1e-3)));
  out.push_back(upper_bound_check("du_ent_max_error", dent, tol.tolerance("du_ent_max_error", 1e-3)));
  out.push_back({"ledger_closure", closure ? 0.0 : 1.0, 0.0, closure, "all ledgers within 5e-4 (1 + |du|)"});
  if (cum11) {
    out.push_back(upper_bound_check("cum_int_t2_x1_y1", *cum11, tol.tolerance("cum_int_t2_x1_y1", 2e-3)));
  }
}

inline void ensemble_identity_checks(const ExperimentConfig& cfg, const PipelineResult& r,
                                     const EnsembleReport& rep, std::vector<CheckResult>& out) {
  const auto& tol = cfg.comparison;
  const double lim = tol.tolerance("identity_residual", 1e-3);
  const bool mc = rep.monte_carlo;
  auto bound = [&](const std::vector<double>& se, std::size_t k) { return mc ? lim + 3.0 * se[k] : lim; };
  double worst16 = 0.0, worst18 = 0.0;
  bool ok16 = true, ok18 = true;
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    worst16 = std::max(worst16, rep.res16[k]);
    ok16 = ok16 && rep.res16[k] <= bound(rep.se_u, k);
    worst18 = std::max(worst18, rep.res18[k]);
    ok18 = ok18 && rep.res18[k] <= bound(rep.se_du_ent, k) + (mc ? 3.0 * rep.se_du_int[k] : 0.0);
  }
  out.push_back({"identity_mean_u_vs_expectation", worst16, lim, ok16, "max over time"});
  out.push_back(upper_bound_check("identity_external_flow", detail::max_over_time(rep.res17, rep.times), lim));
  out.push_back({"identity_total_flow", worst18, lim, ok18, "max over time"});
  (void)r;
}

}  // namespace detail

inline std::vector<CheckResult> preset_checks(const ExperimentConfig& cfg, const PipelineResult& r,
                                              const std::optional<EnsembleReport>& rep,
                                              const OracleTrace& trace) {
  std::vector<CheckResult> out;
  const auto& tol = cfg.comparison;
  out.push_back(upper_bound_check("norm_drift", r.evolution.max_norm_drift, tol.tolerance("norm_drift", 1e-9)));
  for (const auto& run : r.ensembles) {
    const auto& set = run.trajectories;
    if (set.total_evaluations > 0) {
      const double frac = static_cast<double>(set.capped_evaluations) / static_cast<double>(set.total_evaluations);
      out.push_back(upper_bound_check("node_cap_fraction_" + run.label, frac, tol.tolerance("node_cap_fraction", 1e-4)));
    }
    if (!run.equivariance.empty()) {
      double worst = 0.0;
      bool ok = true;
      for (const auto& e : run.equivariance) {
        worst = std::max(worst, e.statistic / e.budget);
        ok = ok && e.passed();
      }
      out.push_back({"equivariance_" + run.label, worst, 1.0, ok, "max of statistic / budget over snapshots"});
    }
  }
  if (rep && cfg.ensemble.mode != EnsembleMode::kExplicit) detail::ensemble_identity_checks(cfg, r, *rep, out);

  switch (cfg.hamiltonian.preset) {
    case HamiltonianPreset::kQuadraticPair: {
      detail::quadratic_pair_checks(cfg, r, trace, out);
      if (rep && cfg.ensemble.mode == EnsembleMode::kQuadrature) {
        const std::size_t k2 = detail::time_index(rep->times, 2.0);
        if (k2 < rep->times.size()) {
          out.push_back(upper_bound_check("mean_delta_u_t2", std::abs(rep->mean_delta_u[k2] - QuadraticPairOracle::mean_delta_u(2.0)), tol.tolerance("mean_delta_u_t2", 1e-3)));
          out.push_back(upper_bound_check("mean_delta_ent_t2", std::abs(rep->mean_delta_ent[k2]), tol.tolerance("mean_delta_ent_t2", 1e-3)));
        }
        const std::size_t k3 = detail::time_index(rep->times, 3.0);
        if (k3 < rep->times.size()) {
          const double ratio = rep->var_int[k3] / rep->var_ent[k3];
          const double reference = 28.28;
          out.push_back({"variance_ratio_t3", ratio, 20.0, ratio > 20.0 && std::abs(ratio / reference - 1.0) < 0.05,
                         "var_int / var_ent at t = 3; must exceed 20 and lie within 5% of 28.28"});
        }
      }
      break;
    }
    case HamiltonianPreset::kPPCoupling: {
      const PPCouplingOracle o{cfg.params.lambda};
      double l1 = 0.0;
      for (const auto& [t, v] : trace.pp_density_l1) l1 = std::max(l1, v);
      out.push_back(upper_bound_check("density_l1", l1, tol.tolerance("density_l1", 1e-4)));
      double hs = 0.0, rel = 0.0;
      for (const auto& obs : r.observables) {
        hs = std::max(hs, std::abs(obs.expectation_hs - PPCouplingOracle::expectation_hs()));
        const double lt = o.lambda * obs.time;
        if (lt >= 0.1 - 1e-12 && lt <= 2.0 + 1e-12) {
          rel = std::max(rel, std::abs(obs.commutator_rate / o.lambda - o.avg_ent_rate(obs.time)) / o.avg_ent_rate(obs.time));
        }
      }
      out.push_back(upper_bound_check("expectation_hs_constant", hs, tol.tolerance("expectation_hs_constant", 1e-3)));
      out.push_back(upper_bound_check("commutator_rate_relative", rel, tol.tolerance("commutator_rate_relative", 1e-3)));
      {
        double worst = 0.0;
        bool ok = true;
        const double rtol = tol.tolerance("estimator_agreement", 1e-3);
        for (const auto& obs : r.observables) {
          const double diff = std::abs(obs.commutator_rate - obs.slice_ent_rate);
          worst = std::max(worst, diff);
          ok = ok && diff <= rtol * std::max(1.0, std::abs(obs.commutator_rate));
        }
        out.push_back({"estimator_agreement", worst, rtol, ok,
                       "commutator vs slice-flow estimator, relative to max(1, |rate|)"});
      }
      if (rep) {
        double worst = 0.0;
        bool ok = true;
        const double rtol = tol.tolerance("estimator_agreement", 1e-3);
        for (std::size_t k = 0; k < rep->times.size(); ++k) {
          const double c = r.observables[k].commutator_rate;
          const double diff = std::abs(rep->mean_du_ent[k] - c);
          const double allow = rtol * std::max(1.0, std::abs(c)) + (rep->monte_carlo ? 3.0 * rep->se_du_ent[k] : 0.0);
          worst = std::max(worst, diff);
          ok = ok && diff <= allow;
        }
        out.push_back({"trajectory_estimator_agreement", worst, rtol, ok,
                       "ensemble mean du_ent vs commutator estimator"});
      }
      break;
    }
    case HamiltonianPreset::kSpinSteering: {
      const SpinSteeringOracle o{cfg.initial.sigma_x, cfg.initial.sigma_y, cfg.initial.k,
                                 cfg.params.drive_speed, cfg.hamiltonian.mass_x};
      const double t_end = std::min(cfg.params.drive_duration, cfg.plan.t_final);
      const std::size_t ke = detail::time_index(r.times, t_end);
      const double btol = tol.tolerance("branch_tolerance", 0.05);
      for (const auto& run : r.ensembles) {
        if (run.u.empty() || ke >= r.times.size()) continue;
        std::size_t upper = 0, converged = 0, counted = 0;
        double worst = 0.0;
        for (std::size_t i = 0; i < run.u.size(); ++i) {
          const double u = run.u[i][ke];
          if (!std::isfinite(u)) continue;
          ++counted;
          const double lo = std::abs(u - o.e0()) / o.delta(), hi = std::abs(u - o.ek()) / o.delta();
          worst = std::max(worst, std::min(lo, hi));
          if (std::min(lo, hi) <= btol) ++converged;
          if (hi < lo) ++upper;
        }
        if (counted == 0) continue;
        if (!run.monte_carlo) {
          out.push_back(upper_bound_check("branch_convergence_" + run.label, worst, btol,
                                          "distance to nearest branch in units of the splitting"));
        } else {
          const double frac = static_cast<double>(upper) / static_cast<double>(counted);
          const double allow = 3.0 / std::sqrt(static_cast<double>(counted));
          out.push_back(upper_bound_check("upper_branch_fraction_" + run.label, std::abs(frac - 0.5), allow,
                                          "fraction " + std::to_string(frac) + ", converged " +
                                              std::to_string(converged) + " of " + std::to_string(counted)));
        }
      }
      break;
    }
    case HamiltonianPreset::kFreeProduct:
    case HamiltonianPreset::kCustom:
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output writers

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

struct SelectedTrajectory {
  std::size_t ensemble;
  std::size_t index;
  std::size_t sample_id;
};

inline std::vector<SelectedTrajectory> select_outputs(const PipelineResult& r, std::size_t limit) {
  std::vector<SelectedTrajectory> out;
  std::size_t offset = 0;
  for (std::size_t e = 0; e < r.ensembles.size(); ++e) {
    const std::size_t n = r.ensembles[e].trajectories.size();
    const std::size_t take = e == 0 ? std::min(n, limit) : n;
    for (std::size_t i = 0; i < take; ++i) out.push_back({e, i, offset + i});
    offset += n;
  }
  return out;
}

inline void write_trajectories(const std::filesystem::path& p, const PipelineResult& r,
                               const std::vector<SelectedTrajectory>& sel) {
  auto os = open_output(p);
  os << "sample_id,t,x,y,vx,vy\n";
  for (const auto& s : sel) {
    const auto& set = r.ensembles[s.ensemble].trajectories;
    for (std::size_t k = 0; k < set.times.size(); ++k) {
      const auto& z = set.positions[s.index][k];
      const auto& v = set.velocities[s.index][k];
      if (!std::isfinite(z[0]) || !std::isfinite(v[0])) continue;
      os << s.sample_id << ',' << num(set.times[k]) << ',' << num(z[0]) << ',' << num(z[1]) << ','
         << num(v[0]) << ',' << num(v[1]) << '\n';
    }
  }
}

inline void write_ledgers(const std::filesystem::path& p, const PipelineResult& r,
                          const std::vector<SelectedTrajectory>& sel) {
  auto os = open_output(p);
  os << "sample_id,t,u,du_ext,du_int,du_ent,cum_ext,cum_int,cum_ent,closure_residual\n";
  for (const auto& s : sel) {
    const auto& run = r.ensembles[s.ensemble];
    if (run.ledgers.empty()) continue;
    const EnergyLedger& L = run.ledgers[s.index];
    for (std::size_t k = 0; k < L.size(); ++k) {
      os << s.sample_id << ',' << num(L.times[k]) << ',' << num(L.u[k]) << ',' << num(L.du_ext[k])
         << ',' << num(L.du_int[k]) << ',' << num(L.du_ent[k]) << ',' << num(L.cum_ext[k]) << ','
         << num(L.cum_int[k]) << ',' << num(L.cum_ent[k]) << ',' << num(L.closure_residual[k]) << '\n';
    }
  }
}

inline void write_report_csv(const std::filesystem::path& p, const EnsembleReport& rep) {
  auto os = open_output(p);
  os << "t,mean_u,mean_du_ext,mean_du_int,mean_du_ent,var_total,var_int,var_ent,cov_int_ent,res16,res17,res18\n";
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    os << num(rep.times[k]) << ',' << num(rep.mean_u[k]) << ',' << num(rep.mean_du_ext[k]) << ','
       << num(rep.mean_du_int[k]) << ',' << num(rep.mean_du_ent[k]) << ',' << num(rep.var_total[k])
       << ',' << num(rep.var_int[k]) << ',' << num(rep.var_ent[k]) << ',' << num(rep.cov_int_ent[k])
       << ',' << num(rep.res16[k]) << ',' << num(rep.res17[k]) << ',' << num(rep.res18[k]) << '\n';
  }
}

inline json report_json(const EnsembleReport& rep) {
  auto arr = [](const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
  };
  return {{"members", rep.members},
          {"monte_carlo", rep.monte_carlo},
          {"t", arr(rep.times)},
          {"mean_u", arr(rep.mean_u)},
          {"se_u", arr(rep.se_u)},
          {"mean_du_ext", arr(rep.mean_du_ext)},
          {"mean_du_int", arr(rep.mean_du_int)},
          {"mean_du_ent", arr(rep.mean_du_ent)},
          {"se_du_ent", arr(rep.se_du_ent)},
          {"mean_delta_u", arr(rep.mean_delta_u)},
          {"mean_delta_int", arr(rep.mean_delta_int)},
          {"mean_delta_ent", arr(rep.mean_delta_ent)},
          {"var_total", arr(rep.var_total)},
          {"var_int", arr(rep.var_int)},
          {"var_ent", arr(rep.var_ent)},
          {"cov_int_ent", arr(rep.cov_int_ent)},
          {"expectation_hs", arr(rep.expectation_hs)},
          {"trace_dhs_dt", arr(rep.trace_dhs_dt)},
          {"commutator_rate", arr(rep.commutator_rate)},
          {"res16", arr(rep.res16)},
          {"res17", arr(rep.res17)},
          {"res18", arr(rep.res18)}};
}

inline void write_observables(const std::filesystem::path& p, const PipelineResult& r) {
  auto os = open_output(p);
  os << "t,expectation_hs,trace_dhs_dt,commutator_rate,slice_ent_rate\n";
  for (const auto& o : r.observables) {
    os << num(o.time) << ',' << num(o.expectation_hs) << ',' << num(o.trace_dhs_dt) << ','
       << num(o.commutator_rate) << ',' << num(o.slice_ent_rate) << '\n';
  }
}

inline void write_u_of_y(const std::filesystem::path& p, const PipelineResult& r) {
  auto os = open_output(p);
  os << "t,y,u,weight\n";
  for (const auto& tab : r.u_of_y) {
    for (std::size_t j = 0; j < tab.y.size(); ++j) {
      if (!tab.valid[j]) continue;
      os << num(tab.time) << ',' << num(tab.y[j]) << ',' << num(tab.u[j]) << ',' << num(tab.weight[j]) << '\n';
    }
  }
}

inline void write_equivariance(const std::filesystem::path& p, const PipelineResult& r) {
  auto os = open_output(p);
  os << "ensemble,t,statistic,budget,samples\n";
  for (const auto& run : r.ensembles) {
    for (std::size_t k = 0; k < run.equivariance.size(); ++k) {
      const auto& e = run.equivariance[k];
      os << run.label << ',' << num(r.times[k]) << ',' << num(e.statistic) << ',' << num(e.budget)
         << ',' << e.samples << '\n';
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Runner

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed_override;
  std::size_t threads = 0;
};

struct RunManifest {
  json document;
  std::filesystem::path directory;
  bool passed = true;
};

inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const RunOptions& opt) {
  if (opt.output_dir) return *opt.output_dir;
  if (cfg.outputs.directory) return *cfg.outputs.directory;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    return std::filesystem::path(env) / cfg.name;
  }
  return std::filesystem::path("bohmflux-output") / cfg.name;
}

inline JointWaveFunction initial_state(const ExperimentConfig& cfg) {
  return make_gaussian_product(cfg.grid, cfg.initial.sigma_x, cfg.initial.sigma_y, cfg.initial.k,
                               cfg.initial.spin);
}

inline std::vector<EnsembleInput> build_ensembles(const ExperimentConfig& cfg,
                                                  const JointWaveFunction& psi0,
                                                  std::optional<std::uint64_t> seed_override) {
  const EnsembleConfig& e = cfg.ensemble;
  std::vector<EnsembleInput> out;
  EnsembleInput main;
  main.label = "main";
  main.ledgers = e.ledgers;
  switch (e.mode) {
    case EnsembleMode::kMonteCarlo: {
      const std::uint64_t seed = seed_override ? *seed_override : *e.master_seed;
      main.samples = sample_born(psi0, e.n, seed);
      main.weights = uniform_weights(e.n);
      main.monte_carlo = true;
      main.equivariance = e.n >= kEquivarianceMinSamples;
      break;
    }
    case EnsembleMode::kQuadrature: {
      auto q = quadrature_samples(psi0, e.quadrature_points, e.quadrature_half_width[0],
                                  e.quadrature_half_width[1]);
      main.samples = std::move(q.samples);
      main.weights = std::move(q.weights);
      break;
    }
    case EnsembleMode::kExplicit: {
      for (std::size_t i = 0; i < e.initial_conditions.size(); ++i) {
        main.samples.push_back({e.initial_conditions[i][0], e.initial_conditions[i][1], 0, i});
      }
      main.weights = uniform_weights(main.samples.size());
      break;
    }
  }
  out.push_back(std::move(main));
  if (!e.tracked.empty()) {
    EnsembleInput tracked;
    tracked.label = "tracked";
    for (std::size_t i = 0; i < e.tracked.size(); ++i) {
      tracked.samples.push_back({e.tracked[i][0], e.tracked[i][1], 0, i});
    }
    tracked.weights = uniform_weights(tracked.samples.size());
    out.push_back(std::move(tracked));
  }
  return out;
}

/// Runs the full pipeline and writes every output file plus manifest.json.
inline RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  const auto started = std::chrono::steady_clock::now();
  const std::filesystem::path dir = resolve_output_dir(cfg, opt);
  std::filesystem::create_directories(dir);
  if (cfg.outputs.snapshots) std::filesystem::create_directories(dir / "snapshots");

  const JointWaveFunction psi0 = initial_state(cfg);
  validate_horizon(psi0, cfg.hamiltonian, cfg.plan);
  auto ensembles = build_ensembles(cfg, psi0, opt.seed_override);

  OracleTrace trace;
  json snapshot_index = json::array();
  PipelineOptions popt;
  popt.threads = opt.threads;
  popt.keep_u_of_y = cfg.outputs.u_of_y;
  const auto preset = cfg.hamiltonian.preset;
  popt.on_snapshot = [&](const JointWaveFunction& psi, const SpectralField&) {
    const double t = psi.time();
    const Grid& g = psi.grid();
    if (cfg.comparison.oracle && preset == HamiltonianPreset::kQuadraticPair && detail::near_integer_time(t)) {
      Complex ov{};
      for (std::size_t ix = 0; ix < g.x.points; ++ix) {
        for (std::size_t iy = 0; iy < g.y.points; ++iy) {
          ov += std::conj(QuadraticPairOracle::psi(g.x.coordinate(ix), g.y.coordinate(iy), t)) * psi(0, ix, iy);
        }
      }
      trace.qp_infidelity.emplace_back(t, 1.0 - std::norm(ov * g.cell_area()));
    }
    if (cfg.comparison.oracle && preset == HamiltonianPreset::kPPCoupling) {
      const PPCouplingOracle o{cfg.params.lambda};
      double l1 = 0.0;
      const Density d = density(psi);
      for (std::size_t ix = 0; ix < g.x.points; ++ix) {
        for (std::size_t iy = 0; iy < g.y.points; ++iy) {
          l1 += std::abs(d.at(ix, iy) - o.density(g.x.coordinate(ix), g.y.coordinate(iy), t));
        }
      }
      trace.pp_density_l1.emplace_back(t, l1 * g.cell_area());
    }
    if (cfg.outputs.snapshots) {
      char name[32];
      std::snprintf(name, sizeof name, "snap_%06zu.bfxs", snapshot_index.size());
      write_snapshot(psi, dir / "snapshots" / name);
      snapshot_index.push_back({{"file", std::string("snapshots/") + name}, {"time", t}});
    }
  };

  const PipelineResult result = run_pipeline(psi0, cfg.hamiltonian, cfg.plan, std::move(ensembles), popt);
  std::optional<EnsembleReport> report;
  if (!result.ensembles.front().ledgers.empty()) report = ensemble_report(result, 0);

  std::vector<CheckResult> checks;
  if (cfg.comparison.oracle) checks = preset_checks(cfg, result, report, trace);

  // Data files.
  const auto selected = detail::select_outputs(result, cfg.outputs.trajectory_limit);
  if (cfg.outputs.trajectories) detail::write_trajectories(dir / "trajectories.csv", result, selected);
  if (cfg.outputs.ledgers && report) detail::write_ledgers(dir / "ledgers.csv", result, selected);
  if (cfg.outputs.report && report) {
    detail::write_report_csv(dir / "report.csv", *report);
    auto os = detail::open_output(dir / "report.json");
    os << detail::report_json(*report).dump(2) << '\n';
  }
  detail::write_observables(dir / "observables.csv", result);
  if (cfg.outputs.u_of_y) detail::write_u_of_y(dir / "u_of_y.csv", result);
  if (std::any_of(result.ensembles.begin(), result.ensembles.end(),
                  [](const EnsembleRun& e) { return !e.equivariance.empty(); })) {
    detail::write_equivariance(dir / "equivariance.csv", result);
  }
  if (cfg.outputs.snapshots) {
    auto os = detail::open_output(dir / "snapshots" / "index.json");
    os << json{{"snapshots", snapshot_index}}.dump(2) << '\n';
  }
  json comparison = json::array();
  for (const auto& c : checks) comparison.push_back(to_json(c));
  {
    auto os = detail::open_output(dir / "oracle_comparison.json");
    os << json{{"checks", comparison}}.dump(2) << '\n';
  }

  RunManifest m;
  m.directory = dir;
  m.passed = std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  json files = json::array();
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    files.push_back({{"path", std::filesystem::relative(p, dir).generic_string()},
                     {"bytes", std::filesystem::file_size(p)},
                     {"sha256", sha256_file(p)}});
  }
  std::size_t excluded = 0, capped = 0, evaluations = 0, degenerate = 0;
  for (const auto& e : result.ensembles) {
    excluded += e.trajectories.excluded_count();
    capped += e.trajectories.capped_evaluations;
    evaluations += e.trajectories.total_evaluations;
    degenerate += e.degenerate_slices;
  }
  json seed = nullptr;
  if (cfg.ensemble.mode == EnsembleMode::kMonteCarlo) {
    seed = opt.seed_override ? *opt.seed_override : *cfg.ensemble.master_seed;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  m.document = {{"name", cfg.name},
                {"code_version", BOHMFLUX_VERSION},
                {"config_sha256", sha256_hex(cfg.source.dump())},
                {"preset", std::string(preset_name(preset))},
                {"master_seed", seed},
                {"wall_clock_seconds", wall},
                {"snapshots", result.times.size()},
                {"trajectories", {{"excluded", excluded}, {"capped_evaluations", capped},
                                  {"evaluations", evaluations}, {"degenerate_slices", degenerate}}},
                {"norm_drift", result.evolution.max_norm_drift},
                {"files", files},
                {"checks", comparison},
                {"passed", m.passed}};
  auto os = detail::open_output(dir / "manifest.json");
  os << m.document.dump(2) << '\n';
  return m;
}

inline RunManifest run(const std::filesystem::path& config_path, const RunOptions& opt = {}) {
  return run_experiment(ExperimentConfig::load(config_path), opt);
}

/// Oracle self-consistency suites for the configured preset (all suites for
/// presets without a closed form). No PDE is solved.
inline json oracle_check(const ExperimentConfig& cfg, bool* passed = nullptr) {
  std::vector<OracleSuite> suites;
  const auto p = cfg.hamiltonian.preset;
  const bool all = p == HamiltonianPreset::kFreeProduct || p == HamiltonianPreset::kCustom;
  if (all || p == HamiltonianPreset::kQuadraticPair) suites.push_back(quadratic_pair_suite());
  if (all || p == HamiltonianPreset::kPPCoupling) suites.push_back(pp_coupling_suite(cfg.params.lambda));
  if (all || p == HamiltonianPreset::kSpinSteering) {
    suites.push_back(spin_steering_suite({cfg.initial.sigma_x, cfg.initial.sigma_y, cfg.initial.k,
                                          cfg.params.drive_speed, cfg.hamiltonian.mass_x}));
  }
  json doc = {{"suites", json::array()}};
  bool ok = true;
  for (const auto& s : suites) {
    json checks = json::array();
    for (const auto& c : s.checks) {
      checks.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"passed", c.passed()}});
    }
    doc["suites"].push_back({{"name", s.name}, {"passed", s.passed()}, {"checks", checks}});
    ok = ok && s.passed();
  }
  doc["passed"] = ok;
  if (passed) *passed = ok;
  return doc;
}

inline std::string list_presets() {
  return "quadratic_pair   two particles in V = (x - y)^2 / 4, split x^2/4 | y^2/4 | -xy/2 (closed form)\n"
         "pp_coupling      momentum coupling -lambda P_X P_Y, evolution under H_int alone (closed form)\n"
         "spin_steering    spin-entangled pair, environment-spin-up branch displaced at speed v\n"
         "free_product     free particles, no coupling\n"
         "custom           explicit v_system / v_env / v_int expressions and p_coupling\n";
}

}  // namespace bohmflux
