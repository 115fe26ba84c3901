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

// Ensemble averages of per-trajectory energy ledgers, the snapshot-side
// expectation values they must reproduce, and the variance decomposition of
// the accumulated conditional energy change.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "bohmflux/conditional.hpp"
#include "bohmflux/error.hpp"
#include "bohmflux/hamiltonian.hpp"
#include "bohmflux/parallel.hpp"
#include "bohmflux/spectral_field.hpp"
#include "bohmflux/trajectories.hpp"

namespace bohmflux {

/// u(t, y) on the environment grid nodes; columns with a degenerate slice are
/// marked invalid.
struct UOfYTable {
  double time = 0.0;
  std::vector<double> y;
  std::vector<double> u;
  std::vector<double> weight;
  std::vector<char> valid;
};

inline UOfYTable u_of_y_table(const SpectralField& f, const HamiltonianSpec& h) {
  const Grid& g = f.grid();
  const std::size_t nx = g.x.points, ny = g.y.points;
  UOfYTable table;
  table.time = f.time();
  table.y.resize(ny);
  table.u.assign(ny, std::numeric_limits<double>::quiet_NaN());
  table.weight.assign(ny, 0.0);
  table.valid.assign(ny, 0);
  const double floor = slice_weight_floor(f);
  std::vector<Complex> amps(f.spins() * nx);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    table.y[iy] = g.y.coordinate(iy);
    for (std::size_t s = 0; s < f.spins(); ++s) {
      for (std::size_t ix = 0; ix < nx; ++ix) amps[s * nx + ix] = f.node(Deriv::kPsi, s, ix, iy);
    }
    const ConditionalState c(g.x, f.spins(), amps, f.time());
    table.weight[iy] = c.weight;
    if (!(c.weight > floor)) continue;
    table.u[iy] = conditional_energy(c, h, f.time());
    table.valid[iy] = 1;
  }
  return table;
}

/// Trajectory-free estimate of <<du_ent/dt>> = -i Tr{sigma [u, H_int]}:
/// the integral of u(t, y) s(x, y) with s = 2 Im(Psi^* H_int Psi) summed over
/// spins. Positional couplings commute with u and give zero.
inline double avg_ent_rate_commutator(const SpectralField& f, const HamiltonianSpec& h,
                                      const UOfYTable& table) {
  if (!h.has_momentum_coupling()) return 0.0;
  const Grid& g = f.grid();
  std::vector<double> columns(g.y.points, 0.0);
  for (std::size_t iy = 0; iy < g.y.points; ++iy) {
    if (!table.valid[iy]) continue;
    double acc = 0.0;
    for (std::size_t s = 0; s < f.spins(); ++s) {
      if (!f.active(s)) continue;
      for (std::size_t ix = 0; ix < g.x.points; ++ix) {
        acc += (std::conj(f.node(Deriv::kPsi, s, ix, iy)) * f.node(Deriv::kXY, s, ix, iy)).imag();
      }
    }
    columns[iy] = table.u[iy] * 2.0 * h.p_coupling * acc;
  }
  return pairwise_sum(columns) * g.cell_area();
}

/// Trajectory-free estimate of <<du_ent/dt>> from the slice flows: du_ent is
/// affine in the environment velocity, so the density average over x reduces
/// to one slice per y node evaluated at the flux-averaged velocity.
inline double avg_ent_rate_slices(const SpectralField& f, const HamiltonianSpec& h) {
  const Grid& g = f.grid();
  const GuidanceLaw law = GuidanceLaw::from(h);
  const bool drive_on = law.drive_on(f.time()) && f.spins() == kSpinorComponents;
  const double floor = slice_weight_floor(f);
  std::vector<double> columns(g.y.points, 0.0);
  for (std::size_t iy = 0; iy < g.y.points; ++iy) {
    double flux = 0.0, weight = 0.0;
    for (std::size_t s = 0; s < f.spins(); ++s) {
      if (!f.active(s)) continue;
      for (std::size_t ix = 0; ix < g.x.points; ++ix) {
        const Complex p = f.node(Deriv::kPsi, s, ix, iy);
        const double jx = (std::conj(p) * f.node(Deriv::kX, s, ix, iy)).imag();
        const double jy = (std::conj(p) * f.node(Deriv::kY, s, ix, iy)).imag();
        weight += std::norm(p);
        flux += law.a_xy * jx + law.a_yy * jy;
        if (drive_on && is_environment_spin_up(s)) flux += law.drive->speed * std::norm(p);
      }
    }
    weight *= g.x.spacing();
    flux *= g.x.spacing();
    if (!(weight > floor)) continue;
    const SliceMoments m = slice_moments(f, g.y.coordinate(iy), flux / weight, h, false);
    columns[iy] = m.a_ent - m.u() * m.b_ent;
  }
  return pairwise_sum(columns) * g.y.spacing();
}

/// Expectation values taken directly from the joint state at one time.
struct SnapshotObservables {
  double time = 0.0;
  double expectation_hs = 0.0;  // <Psi|H_S|Psi>
  double trace_dhs_dt = 0.0;    // Tr{sigma dH_S/dt}
  double commutator_rate = 0.0;
  double slice_ent_rate = 0.0;  // trajectory-free <<du_ent/dt>>
};

inline SnapshotObservables snapshot_observables(const JointWaveFunction& psi,
                                                const SpectralField& f, const HamiltonianSpec& h,
                                                const UOfYTable* table = nullptr) {
  SnapshotObservables o;
  o.time = psi.time();
  o.expectation_hs = expectation_system_energy(psi, h, psi.time());
  o.trace_dhs_dt = expectation_dHS_dt(psi, h, psi.time());
  if (h.has_momentum_coupling()) {
    o.commutator_rate = table ? avg_ent_rate_commutator(f, h, *table)
                              : avg_ent_rate_commutator(f, h, u_of_y_table(f, h));
  }
  o.slice_ent_rate = avg_ent_rate_slices(f, h);
  return o;
}

struct EnsembleReport {
  std::vector<double> times;
  std::size_t members = 0;
  bool monte_carlo = false;

  std::vector<double> mean_u, mean_du_ext, mean_du_int, mean_du_ent;
  std::vector<double> se_u, se_du_ext, se_du_int, se_du_ent;
  // Accumulated changes: Delta u = u(t) - u(0), Delta u_int = cumulative
  // interaction flow, Delta u_ent = Delta u - Delta u_int.
  std::vector<double> mean_delta_u, mean_delta_int, mean_delta_ent;
  std::vector<double> se_delta_u, se_delta_ent;
  std::vector<double> var_total, var_int, var_ent, cov_int_ent;

  // Snapshot-side quantities and identity residuals (filled by attach_observables).
  std::vector<double> expectation_hs, trace_dhs_dt, commutator_rate;
  std::vector<double> res16, res17, res18;
};

namespace detail {

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

inline Moments weighted_moments(std::span<const double> x, std::span<const double> w,
                                bool monte_carlo) {
  const std::size_t n = x.size();
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) terms[i] = w[i] * x[i];
  Moments m;
  m.mean = pairwise_sum(terms);
  if (monte_carlo && n > 1) {
    for (std::size_t i = 0; i < n; ++i) terms[i] = (x[i] - m.mean) * (x[i] - m.mean);
    const double sd = std::sqrt(pairwise_sum(terms) / static_cast<double>(n - 1));
    m.se = sd / std::sqrt(static_cast<double>(n));
  }
  return m;
}

inline double weighted_covariance(std::span<const double> a, std::span<const double> b,
                                  std::span<const double> w, double ma, double mb) {
  std::vector<double> terms(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) terms[i] = w[i] * (a[i] - ma) * (b[i] - mb);
  return pairwise_sum(terms);
}

}  // namespace detail

/// Weighted ensemble statistics per time. Ledgers with non-positive weight
/// or an incomplete time series are skipped; weights are renormalized.
inline EnsembleReport aggregate(const std::vector<EnergyLedger>& ledgers,
                                std::span<const double> weights, bool monte_carlo) {
  if (ledgers.size() != weights.size()) throw ConfigError("one weight per ledger is required");
  std::size_t T = 0;
  for (const auto& L : ledgers) T = std::max(T, L.size());
  std::vector<const EnergyLedger*> members;
  std::vector<double> w;
  for (std::size_t i = 0; i < ledgers.size(); ++i) {
    if (weights[i] > 0.0 && ledgers[i].size() == T && T > 0) {
      members.push_back(&ledgers[i]);
      w.push_back(weights[i]);
    }
  }
  if (members.empty()) throw ConfigError("cannot aggregate an empty ensemble");
  const double wsum = pairwise_sum(w);
  for (auto& x : w) x /= wsum;

  EnsembleReport r;
  r.members = members.size();
  r.monte_carlo = monte_carlo;
  r.times = members.front()->times;
  const std::size_t n = members.size();
  std::vector<double> u(n), ext(n), in(n), en(n), du(n), dint(n), dent(n);
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const EnergyLedger& L = *members[i];
      u[i] = L.u[k];
      ext[i] = L.du_ext[k];
      in[i] = L.du_int[k];
      en[i] = L.du_ent[k];
      du[i] = L.u[k] - L.u[0];
      dint[i] = L.cum_int[k];
      dent[i] = du[i] - dint[i];
    }
    const auto mu = detail::weighted_moments(u, w, monte_carlo);
    const auto me = detail::weighted_moments(ext, w, monte_carlo);
    const auto mi = detail::weighted_moments(in, w, monte_carlo);
    const auto mn = detail::weighted_moments(en, w, monte_carlo);
    const auto md = detail::weighted_moments(du, w, monte_carlo);
    const auto mdi = detail::weighted_moments(dint, w, monte_carlo);
    const auto mde = detail::weighted_moments(dent, w, monte_carlo);
    r.mean_u.push_back(mu.mean);
    r.se_u.push_back(mu.se);
    r.mean_du_ext.push_back(me.mean);
    r.se_du_ext.push_back(me.se);
    r.mean_du_int.push_back(mi.mean);
    r.se_du_int.push_back(mi.se);
    r.mean_du_ent.push_back(mn.mean);
    r.se_du_ent.push_back(mn.se);
    r.mean_delta_u.push_back(md.mean);
    r.se_delta_u.push_back(md.se);
    r.mean_delta_int.push_back(mdi.mean);
    r.mean_delta_ent.push_back(mde.mean);
    r.se_delta_ent.push_back(mde.se);
    r.var_total.push_back(detail::weighted_covariance(du, du, w, md.mean, md.mean));
    r.var_int.push_back(detail::weighted_covariance(dint, dint, w, mdi.mean, mdi.mean));
    r.var_ent.push_back(detail::weighted_covariance(dent, dent, w, mde.mean, mde.mean));
    r.cov_int_ent.push_back(detail::weighted_covariance(dint, dent, w, mdi.mean, mde.mean));
  }
  return r;
}

/// |mean_u - <H_S>| per time.
inline std::vector<double> check_mean_energy_identity(const EnsembleReport& r,
                                             std::span<const SnapshotObservables> obs) {
  if (obs.size() != r.times.size()) throw ConfigError("observables and report times differ");
  std::vector<double> res(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) res[k] = std::abs(r.mean_u[k] - obs[k].expectation_hs);
  return res;
}

struct FlowIdentities {
  std::vector<double> external;  // |Tr{sigma dH_S/dt} - mean du_ext|
  std::vector<double> total;     // |d<H_S>/dt - Tr{sigma dH_S/dt} - (mean du_int + mean du_ent)|
};

inline FlowIdentities check_flow_identities(const EnsembleReport& r,
                                         std::span<const SnapshotObservables> obs) {
  if (obs.size() != r.times.size()) throw ConfigError("observables and report times differ");
  std::vector<double> hs(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) hs[k] = obs[k].expectation_hs;
  const auto dhs = finite_difference(r.times, hs);
  FlowIdentities out;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    out.external.push_back(std::abs(obs[k].trace_dhs_dt - r.mean_du_ext[k]));
    out.total.push_back(
        std::abs(dhs[k] - obs[k].trace_dhs_dt - (r.mean_du_int[k] + r.mean_du_ent[k])));
  }
  return out;
}

/// Stores the snapshot observables and identity residuals in the report.
inline void attach_observables(EnsembleReport& r, std::span<const SnapshotObservables> obs) {
  r.res16 = check_mean_energy_identity(r, obs);
  auto id = check_flow_identities(r, obs);
  r.res17 = std::move(id.external);
  r.res18 = std::move(id.total);
  r.expectation_hs.clear();
  r.trace_dhs_dt.clear();
  r.commutator_rate.clear();
  for (const auto& o : obs) {
    r.expectation_hs.push_back(o.expectation_hs);
    r.trace_dhs_dt.push_back(o.trace_dhs_dt);
    r.commutator_rate.push_back(o.commutator_rate);
  }
}

struct VarianceDecomposition {
  std::vector<double> var_total, var_int, var_ent, cov_int_ent;

  /// Largest |var_total - var_int - var_ent - 2 cov| over time.
  double identity_residual() const {
    double m = 0.0;
    for (std::size_t k = 0; k < var_total.size(); ++k) {
      m = std::max(m, std::abs(var_total[k] - var_int[k] - var_ent[k] - 2.0 * cov_int_ent[k]));
    }
    return m;
  }
};

inline VarianceDecomposition variance_decomposition(const EnsembleReport& r) {
  return {r.var_total, r.var_int, r.var_ent, r.cov_int_ent};
}

}  // namespace bohmflux
