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

// Conditional wave functions along environment trajectories and the
// external / interaction / entanglement split of the conditional energy flow.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "bohmflux/conditional_state.hpp"
#include "bohmflux/error.hpp"
#include "bohmflux/grid_state.hpp"
#include "bohmflux/hamiltonian.hpp"
#include "bohmflux/spectral_field.hpp"
#include "bohmflux/trajectories.hpp"

namespace bohmflux {

/// Relative slice weight below which a conditional state is degenerate.
inline constexpr double kSliceWeightFraction = 1e-12;

inline double slice_weight_floor(const SpectralField& f) {
  return kSliceWeightFraction * f.peak_density() * 2.0 * f.grid().x.half_width;
}

/// phi(x) = Psi(x, Y) for every spin component.
inline ConditionalState extract_cwf(const SpectralField& f, double Y, std::int64_t source = -1) {
  const std::size_t nx = f.grid().x.points;
  std::vector<Complex> amps(f.spins() * nx);
  for (std::size_t s = 0; s < f.spins(); ++s) {
    const auto row = f.slice(Deriv::kPsi, s, Y);
    std::copy(row.begin(), row.end(), amps.begin() + static_cast<std::ptrdiff_t>(s * nx));
  }
  ConditionalState c(f.grid().x, f.spins(), std::move(amps), f.time(), source);
  if (!(c.weight > slice_weight_floor(f))) {
    throw DegenerateSliceError("conditional slice at Y=" + std::to_string(Y) + " has weight " +
                               std::to_string(c.weight));
  }
  return c;
}

inline ConditionalState extract_cwf(const JointWaveFunction& psi, double Y) {
  return extract_cwf(SpectralField(psi), Y);
}

/// u = <phi|H_S(t)|phi> / <phi|phi>.
inline double conditional_energy(const ConditionalState& c, const HamiltonianSpec& h, double t) {
  const auto hphi = apply_system_hamiltonian(c, h, t);
  return inner_product(c.grid_x, c.amplitudes, hphi).real() / c.weight;
}

struct FlowTerms {
  double du_ext = 0.0;
  double du_int = 0.0;
  double du_ent = 0.0;  // "correlations" for mixed states
  double total() const { return du_ext + du_int + du_ent; }
};

/// Unnormalized slice moments from which u and the flow terms follow:
///   u      = energy / weight
///   du_ext = ext / weight
///   du_int = (a_int - u b_int) / weight,  du_ent = (a_ent - u b_ent) / weight
/// with a = 2 Im<H_S phi|chi>, b = 2 Im<phi|chi> for chi = xi (interaction
/// slice) or zeta (environment slice).
struct SliceMoments {
  double weight = 0.0;
  double energy = 0.0;
  double ext = 0.0;
  double a_int = 0.0, b_int = 0.0;
  double a_ent = 0.0, b_ent = 0.0;

  SliceMoments& accumulate(const SliceMoments& o, double p) {
    weight += p * o.weight;
    energy += p * o.energy;
    ext += p * o.ext;
    a_int += p * o.a_int;
    b_int += p * o.b_int;
    a_ent += p * o.a_ent;
    b_ent += p * o.b_ent;
    return *this;
  }
  double u() const { return energy / weight; }
  FlowTerms flows() const {
    const double uu = u();
    return {ext / weight, (a_int - uu * b_int) / weight, (a_ent - uu * b_ent) / weight};
  }
};

/// Slice moments at environment position Y with environment velocity v_y.
///   xi   = (H_int Psi)(., Y)
///   zeta = (H_E Psi)(., Y) + i v_y (d_y Psi)(., Y)
/// H_E enters through its kinetic and potential parts only when the
/// environment is part of the dynamics; the spin drive always does.
inline SliceMoments slice_moments(const SpectralField& f, double Y, double v_y,
                                  const HamiltonianSpec& h, bool require_weight = true) {
  const double t = f.time();
  const Axis& ax = f.grid().x;
  const std::size_t nx = ax.points, spins = f.spins();
  std::vector<Complex> phi(spins * nx), xi(spins * nx), zeta(spins * nx);
  std::vector<double> vint(nx);
  for (std::size_t i = 0; i < nx; ++i) vint[i] = h.v_int(ax.coordinate(i), Y, t);
  const double ve = h.v_env(0.0, Y, 0.0);
  const bool drive = h.spin_drive && h.spin_drive->active_at(t) && spins == kSpinorComponents;
  for (std::size_t s = 0; s < spins; ++s) {
    if (!f.active(s)) continue;
    const auto p = f.slice(Deriv::kPsi, s, Y);
    const auto py = f.slice(Deriv::kY, s, Y);
    std::vector<Complex> pyy, pxy;
    if (h.environment_in_dynamics) pyy = f.slice(Deriv::kYY, s, Y);
    if (h.has_momentum_coupling()) pxy = f.slice(Deriv::kXY, s, Y);
    const bool up_drive = drive && is_environment_spin_up(s);
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t k = s * nx + i;
      phi[k] = p[i];
      Complex x = vint[i] * p[i];
      if (!pxy.empty()) x += h.p_coupling * pxy[i];
      xi[k] = x;
      Complex z = Complex(0.0, v_y) * py[i];
      if (!pyy.empty()) z += -0.5 / h.mass_y * pyy[i] + ve * p[i];
      if (up_drive) z += h.spin_drive->speed * Complex(0.0, -1.0) * py[i];
      zeta[k] = z;
    }
  }
  ConditionalState c(ax, spins, std::move(phi), t);
  SliceMoments m;
  m.weight = c.weight;
  if (require_weight && !(c.weight > slice_weight_floor(f))) {
    throw DegenerateSliceError("conditional slice at Y=" + std::to_string(Y) + " has weight " +
                               std::to_string(c.weight));
  }
  if (c.weight == 0.0) return m;
  const auto hphi = apply_system_hamiltonian(c, h, t);
  m.energy = inner_product(ax, c.amplitudes, hphi).real();
  const auto dv = dH_S_dt(h, ax, t);
  double ext = 0.0;
  for (std::size_t s = 0; s < spins; ++s) {
    for (std::size_t i = 0; i < nx; ++i) ext += dv[i] * std::norm(c.amplitudes[s * nx + i]);
  }
  m.ext = ext * ax.spacing();
  m.a_int = 2.0 * inner_product(ax, hphi, xi).imag();
  m.b_int = 2.0 * inner_product(ax, c.amplitudes, xi).imag();
  m.a_ent = 2.0 * inner_product(ax, hphi, zeta).imag();
  m.b_ent = 2.0 * inner_product(ax, c.amplitudes, zeta).imag();
  return m;
}

/// (du_ext, du_int, du_ent) at environment position Y; u is the conditional
/// energy at the same point and time.
inline FlowTerms flow_terms(const SpectralField& f, double Y, double v_y, const HamiltonianSpec& h,
                            double u) {
  const SliceMoments m = slice_moments(f, Y, v_y, h);
  return {m.ext / m.weight, (m.a_int - u * m.b_int) / m.weight, (m.a_ent - u * m.b_ent) / m.weight};
}

// ---------------------------------------------------------------------------
// Ledgers

inline constexpr double kClosureTolerance = 5e-4;

struct EnergyLedger {
  std::int64_t source = -1;
  std::vector<double> times;
  std::vector<double> u, du_ext, du_int, du_ent;
  std::vector<double> cum_ext, cum_int, cum_ent;
  std::vector<double> du_total_check;    // finite-difference du/dt
  std::vector<double> closure_residual;  // du_ext + du_int + du_ent - du_total_check
  bool closure_ok = true;

  std::size_t size() const { return times.size(); }
};

/// Derivative of samples on a uniform grid: central differences inside,
/// second-order one-sided differences at the ends.
inline std::vector<double> finite_difference(std::span<const double> t, std::span<const double> f) {
  const std::size_t n = f.size();
  std::vector<double> d(n, 0.0);
  if (n < 2) return d;
  const double h = t[1] - t[0];
  if (n == 2) {
    d[0] = d[1] = (f[1] - f[0]) / h;
    return d;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) d[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
  d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
  d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
  return d;
}

/// Trapezoid cumulative integrals and the closure check of a flow series.
inline EnergyLedger accumulate_ledger(std::span<const double> times, std::span<const double> u,
                                      std::span<const FlowTerms> flows, std::int64_t source = -1) {
  const std::size_t n = times.size();
  if (u.size() != n || flows.size() != n) throw ConfigError("ledger series lengths differ");
  for (std::size_t k = 2; k < n; ++k) {
    const double h0 = times[1] - times[0], hk = times[k] - times[k - 1];
    if (std::abs(hk - h0) > 1e-9 * std::max(1.0, std::abs(h0))) {
      throw ConfigError("ledger requires a uniform time grid");
    }
  }
  EnergyLedger L;
  L.source = source;
  L.times.assign(times.begin(), times.end());
  L.u.assign(u.begin(), u.end());
  for (const auto& f : flows) {
    L.du_ext.push_back(f.du_ext);
    L.du_int.push_back(f.du_int);
    L.du_ent.push_back(f.du_ent);
  }
  auto cumulative = [&](const std::vector<double>& r) {
    std::vector<double> c(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) c[k] = c[k - 1] + 0.5 * (times[k] - times[k - 1]) * (r[k] + r[k - 1]);
    return c;
  };
  L.cum_ext = cumulative(L.du_ext);
  L.cum_int = cumulative(L.du_int);
  L.cum_ent = cumulative(L.du_ent);
  L.du_total_check = finite_difference(times, u);
  L.closure_residual.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double total = L.du_ext[k] + L.du_int[k] + L.du_ent[k];
    L.closure_residual[k] = n >= 2 ? total - L.du_total_check[k] : 0.0;
    if (std::abs(L.closure_residual[k]) > kClosureTolerance * (1.0 + std::abs(L.du_total_check[k]))) {
      L.closure_ok = false;
    }
  }
  return L;
}

// ---------------------------------------------------------------------------
// Mixed states: finite convex combinations sum_k p_k |Psi_k><Psi_k|

inline constexpr std::size_t kMaxMixtureRank = 16;

struct MixedState {
  std::vector<double> probabilities;
  std::vector<JointWaveFunction> components;

  void validate() const {
    if (components.empty() || components.size() != probabilities.size()) {
      throw ConfigError("mixed state needs one probability per component");
    }
    if (components.size() > kMaxMixtureRank) throw ConfigError("mixture rank above 16");
    double sum = 0.0;
    for (double p : probabilities) {
      if (!(p > 0.0)) throw ConfigError("mixture probabilities must be positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("mixture probabilities must sum to 1");
    for (const auto& c : components) {
      if (!(c.grid() == components.front().grid()) || c.spins() != components.front().spins()) {
        throw ConfigError("mixture components must share grid and spin layout");
      }
    }
  }
};

/// Spectral stacks of every mixture component at a common time.
struct MixedField {
  std::vector<double> probabilities;
  std::vector<SpectralField> fields;

  explicit MixedField(const MixedState& m) : probabilities(m.probabilities) {
    m.validate();
    fields.reserve(m.components.size());
    for (const auto& c : m.components) fields.emplace_back(c);
  }
  double time() const { return fields.front().time(); }
  double peak_density() const {
    double p = 0.0;
    for (std::size_t k = 0; k < fields.size(); ++k) p += probabilities[k] * fields[k].peak_density();
    return p;
  }
};

/// v = M sum_k p_k Im(Psi_k^* grad Psi_k) / sum_k p_k |Psi_k|^2.
inline Velocity mixed_velocity_field(const MixedField& m, const HamiltonianSpec& h, double x,
                                     double y,
                                     double cap_speed = std::numeric_limits<double>::infinity()) {
  // A mixture is the pure law applied to a stacked, probability-scaled sample.
  const GuidanceLaw law = GuidanceLaw::from(h);
  double rho = 0.0, rho_up = 0.0, jx = 0.0, jy = 0.0;
  for (std::size_t k = 0; k < m.fields.size(); ++k) {
    const PointSample p = m.fields[k].sample(x, y);
    for (std::size_t s = 0; s < p.spins; ++s) {
      const double r = m.probabilities[k] * std::norm(p.psi[s]);
      rho += r;
      if (p.spins == kSpinorComponents && is_environment_spin_up(s)) rho_up += r;
      jx += m.probabilities[k] * (std::conj(p.psi[s]) * p.dx[s]).imag();
      jy += m.probabilities[k] * (std::conj(p.psi[s]) * p.dy[s]).imag();
    }
  }
  Velocity v;
  if (rho > 0.0) {
    v.vx = (law.a_xx * jx + law.a_xy * jy) / rho;
    v.vy = (law.a_xy * jx + law.a_yy * jy) / rho;
    if (law.drive_on(m.time())) v.vy += law.drive->speed * rho_up / rho;
  }
  if (rho < kNodeDensityFraction * m.peak_density()) {
    v.capped = true;
    const double speed = std::hypot(v.vx, v.vy);
    if (speed > cap_speed) {
      v.vx *= cap_speed / speed;
      v.vy *= cap_speed / speed;
    }
  }
  return v;
}

inline SliceMoments mixed_slice_moments(const MixedField& m, double Y, double v_y,
                                        const HamiltonianSpec& h) {
  SliceMoments total;
  double floor = 0.0;
  for (std::size_t k = 0; k < m.fields.size(); ++k) {
    total.accumulate(slice_moments(m.fields[k], Y, v_y, h, false), m.probabilities[k]);
    floor += m.probabilities[k] * slice_weight_floor(m.fields[k]);
  }
  if (!(total.weight > floor)) {
    throw DegenerateSliceError("mixed conditional slice at Y=" + std::to_string(Y) + " is empty");
  }
  return total;
}

/// u = sum_k p_k <phi_k|H_S|phi_k> / sum_k p_k <phi_k|phi_k>.
inline double mixed_conditional_energy(const MixedField& m, double Y, const HamiltonianSpec& h) {
  return mixed_slice_moments(m, Y, 0.0, h).u();
}

/// (du_ext, du_int, du_cor) for a mixture; the third term is the
/// correlations contribution.
inline FlowTerms mixed_flow_terms(const MixedField& m, double Y, double v_y,
                                  const HamiltonianSpec& h, double u) {
  const SliceMoments s = mixed_slice_moments(m, Y, v_y, h);
  return {s.ext / s.weight, (s.a_int - u * s.b_int) / s.weight, (s.a_ent - u * s.b_ent) / s.weight};
}

}  // namespace bohmflux
