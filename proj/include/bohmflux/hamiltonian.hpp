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

// H(t) = H_S(t) + H_E + H_int on the two-particle configuration space.
//
//   H_S   = P_X^2 / (2 m_x) + V_S(x, t)
//   H_E   = P_Y^2 / (2 m_y) + V_E(y) + v P_Y |up_Y><up_Y|   (drive, 0 <= t <= duration)
//   H_int = V_int(x, y, t) - lambda P_X P_Y

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bohmflux/conditional_state.hpp"
#include "bohmflux/error.hpp"
#include "bohmflux/expression.hpp"
#include "bohmflux/fft.hpp"
#include "bohmflux/grid_state.hpp"

namespace bohmflux {

/// Spin-conditioned environment displacement exp(-i v t P_Y |up_Y><up_Y|)
/// generated over the closed window 0 <= t <= duration. Pointwise queries at
/// t = duration see the drive, matching left-sided time derivatives.
struct SpinDrive {
  double speed = 0.0;
  double duration = 0.0;

  bool active_at(double t) const { return t >= 0.0 && t <= duration && duration > 0.0; }
  /// Length of [t0, t1] that overlaps the drive window.
  double active_time(double t0, double t1) const {
    return std::max(0.0, std::min(t1, duration) - std::max(t0, 0.0));
  }
  double displacement(double t) const { return speed * std::clamp(t, 0.0, duration); }
};

enum class HamiltonianPreset { kQuadraticPair, kPPCoupling, kSpinSteering, kFreeProduct, kCustom };

inline std::string_view preset_name(HamiltonianPreset p) {
  switch (p) {
    case HamiltonianPreset::kQuadraticPair: return "quadratic_pair";
    case HamiltonianPreset::kPPCoupling: return "pp_coupling";
    case HamiltonianPreset::kSpinSteering: return "spin_steering";
    case HamiltonianPreset::kFreeProduct: return "free_product";
    case HamiltonianPreset::kCustom: return "custom";
  }
  return "custom";
}

inline HamiltonianPreset parse_preset(std::string_view name) {
  for (auto p : {HamiltonianPreset::kQuadraticPair, HamiltonianPreset::kPPCoupling,
                 HamiltonianPreset::kSpinSteering, HamiltonianPreset::kFreeProduct,
                 HamiltonianPreset::kCustom}) {
    if (preset_name(p) == name) return p;
  }
  throw ConfigError("unknown Hamiltonian preset '" + std::string(name) + "'");
}

struct HamiltonianSpec {
  HamiltonianPreset preset = HamiltonianPreset::kCustom;
  double mass_x = 1.0;
  double mass_y = 1.0;
  Expression v_system;  // V_S(x, t)
  Expression v_env;     // V_E(y)
  Expression v_int;     // V_int(x, y, t)
  double p_coupling = 0.0;
  std::optional<SpinDrive> spin_drive;
  // When false, that part of H is kept as an observable but omitted from the
  // generator of the dynamics (the strong-coupling regime evolves under H_int).
  bool system_in_dynamics = true;
  bool environment_in_dynamics = true;

  void validate() const {
    if (!(mass_x > 0.0) || !(mass_y > 0.0)) throw ConfigError("masses must be positive");
    if (v_system.depends_on(Expression::Op::kY)) throw ConfigError("V_S may not depend on y");
    if (v_env.depends_on(Expression::Op::kX) || v_env.depends_on(Expression::Op::kT)) {
      throw ConfigError("V_E may depend on y only");
    }
    if (!v_int.is_zero() && p_coupling != 0.0) {
      throw ConfigError("positional and momentum coupling cannot be combined");
    }
    if (!std::isfinite(p_coupling)) throw ConfigError("momentum coupling must be finite");
    if (spin_drive && (!std::isfinite(spin_drive->speed) || !(spin_drive->duration >= 0.0))) {
      throw ConfigError("spin drive needs a finite speed and a non-negative duration");
    }
  }

  bool has_positional_coupling() const { return !v_int.is_zero(); }
  bool has_momentum_coupling() const { return p_coupling != 0.0; }

  /// Potential entering the generator of the dynamics at (x, y, t).
  double dynamics_potential(double x, double y, double t) const {
    double v = v_int(x, y, t);
    if (system_in_dynamics) v += v_system(x, 0.0, t);
    if (environment_in_dynamics) v += v_env(0.0, y, 0.0);
    return v;
  }
  bool dynamics_potential_is_zero() const {
    return v_int.is_zero() && (!system_in_dynamics || v_system.is_zero()) &&
           (!environment_in_dynamics || v_env.is_zero());
  }
  bool dynamics_potential_is_static() const {
    return !v_int.depends_on(Expression::Op::kT) &&
           (!system_in_dynamics || !v_system.depends_on(Expression::Op::kT));
  }

  /// Kinetic quadratic form coefficients in the dynamics:
  /// T(k) = a_xx kx^2 / 2 + a_yy ky^2 / 2 + a_xy kx ky.
  double a_xx() const { return system_in_dynamics ? 1.0 / mass_x : 0.0; }
  double a_yy() const { return environment_in_dynamics ? 1.0 / mass_y : 0.0; }
  double a_xy() const { return -p_coupling; }
};

/// Parameters consumed by expand_preset.
struct PresetParams {
  double lambda = 10.0;       // pp_coupling
  double drive_speed = 20.0;  // spin_steering
  double drive_duration = 0.3;
};

inline HamiltonianSpec expand_preset(HamiltonianPreset preset, const PresetParams& params = {}) {
  HamiltonianSpec h;
  h.preset = preset;
  switch (preset) {
    case HamiltonianPreset::kQuadraticPair:
      // V = (x - y)^2 / 4 split as x^2/4 + y^2/4 - xy/2.
      h.v_system = Expression::parse("x^2/4");
      h.v_env = Expression::parse("y^2/4");
      h.v_int = Expression::parse("-x*y/2");
      break;
    case HamiltonianPreset::kPPCoupling:
      h.p_coupling = params.lambda;
      h.system_in_dynamics = false;
      h.environment_in_dynamics = false;
      break;
    case HamiltonianPreset::kSpinSteering:
      h.spin_drive = SpinDrive{params.drive_speed, params.drive_duration};
      break;
    case HamiltonianPreset::kFreeProduct:
    case HamiltonianPreset::kCustom:
      break;
  }
  h.validate();
  return h;
}

inline HamiltonianSpec expand_preset(std::string_view name, const PresetParams& params = {}) {
  return expand_preset(parse_preset(name), params);
}

// ---------------------------------------------------------------------------
// Operator application

/// d^order/dx^order of periodic samples on one axis.
inline std::vector<Complex> spectral_derivative_1d(const Axis& axis, std::span<const Complex> f,
                                                   int order) {
  const std::size_t n = axis.points;
  std::vector<Complex> buf(f.begin(), f.end());
  fft::transform_1d(n, buf.data(), buf.data(), fft::Direction::kForward);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Complex fac = (order % 2 == 1 && axis.is_nyquist(i))
                            ? Complex{}
                            : std::pow(Complex(0.0, axis.wavenumber(i)), order);
    buf[i] *= fac * scale;
  }
  fft::transform_1d(n, buf.data(), buf.data(), fft::Direction::kBackward);
  return buf;
}

/// H_S(t) applied to a conditional state, per spin component.
inline std::vector<Complex> apply_system_hamiltonian(const ConditionalState& c,
                                                     const HamiltonianSpec& h, double t) {
  const std::size_t nx = c.grid_x.points;
  std::vector<Complex> out(c.amplitudes.size());
  std::vector<double> vs(nx);
  for (std::size_t i = 0; i < nx; ++i) vs[i] = h.v_system(c.grid_x.coordinate(i), 0.0, t);
  for (std::size_t s = 0; s < c.spins; ++s) {
    const auto phi = c.component(s);
    if (std::all_of(phi.begin(), phi.end(), [](const Complex& z) { return z == Complex{}; })) {
      continue;
    }
    const auto d2 = spectral_derivative_1d(c.grid_x, phi, 2);
    for (std::size_t i = 0; i < nx; ++i) {
      out[s * nx + i] = -0.5 / h.mass_x * d2[i] + vs[i] * phi[i];
    }
  }
  return out;
}

/// dV_S/dt on the system axis at time t (the kinetic part is static).
inline std::vector<double> dH_S_dt(const HamiltonianSpec& h, const Axis& axis, double t) {
  const Expression dv = h.v_system.derivative_t();
  std::vector<double> out(axis.points, 0.0);
  if (dv.is_zero()) return out;
  for (std::size_t i = 0; i < axis.points; ++i) out[i] = dv(axis.coordinate(i), 0.0, t);
  return out;
}

namespace detail {

template <typename Fn>
JointWaveFunction map_components(const JointWaveFunction& psi, Fn&& fn) {
  JointWaveFunction out(psi.grid(), psi.spins(), psi.time());
  for (std::size_t s = 0; s < psi.spins(); ++s) {
    if (psi.component_is_zero(s)) continue;
    fn(s, psi.component(s), out.component(s));
  }
  return out;
}

}  // namespace detail

/// H_S(t) acting on the joint state.
inline JointWaveFunction apply_system_part(const JointWaveFunction& psi, const HamiltonianSpec& h,
                                           double t) {
  const Grid& g = psi.grid();
  return detail::map_components(psi, [&](std::size_t, auto in, auto out) {
    const auto dxx = spectral_derivative(g, in, 2, 0);
    for (std::size_t ix = 0; ix < g.x.points; ++ix) {
      const double v = h.v_system(g.x.coordinate(ix), 0.0, t);
      for (std::size_t iy = 0; iy < g.y.points; ++iy) {
        const std::size_t k = g.index(ix, iy);
        out[k] = -0.5 / h.mass_x * dxx[k] + v * in[k];
      }
    }
  });
}

/// Spin drive term v P_Y on the environment-spin-up components (zero when
/// the drive is inactive at t).
inline JointWaveFunction apply_drive_part(const JointWaveFunction& psi, const HamiltonianSpec& h,
                                          double t) {
  const Grid& g = psi.grid();
  const bool drive = h.spin_drive && h.spin_drive->active_at(t) && psi.spins() == kSpinorComponents;
  return detail::map_components(psi, [&](std::size_t s, auto in, auto out) {
    if (!drive || !is_environment_spin_up(s)) return;
    const auto dy = spectral_derivative(g, in, 0, 1);
    for (std::size_t k = 0; k < g.size(); ++k) out[k] = h.spin_drive->speed * Complex(0.0, -1.0) * dy[k];
  });
}

/// H_E (with the spin drive when active at t) acting on the joint state.
inline JointWaveFunction apply_environment_part(const JointWaveFunction& psi,
                                                const HamiltonianSpec& h, double t) {
  const Grid& g = psi.grid();
  JointWaveFunction out = apply_drive_part(psi, h, t);
  for (std::size_t s = 0; s < psi.spins(); ++s) {
    if (psi.component_is_zero(s)) continue;
    const auto in = psi.component(s);
    auto dst = out.component(s);
    const auto dyy = spectral_derivative(g, in, 0, 2);
    for (std::size_t ix = 0; ix < g.x.points; ++ix) {
      for (std::size_t iy = 0; iy < g.y.points; ++iy) {
        const std::size_t k = g.index(ix, iy);
        dst[k] += -0.5 / h.mass_y * dyy[k] + h.v_env(0.0, g.y.coordinate(iy), 0.0) * in[k];
      }
    }
  }
  return out;
}

/// H_int(t) acting on the joint state. With P = -i d, -lambda P_X P_Y = lambda d_x d_y.
inline JointWaveFunction apply_interaction_part(const JointWaveFunction& psi,
                                                const HamiltonianSpec& h, double t) {
  const Grid& g = psi.grid();
  return detail::map_components(psi, [&](std::size_t, auto in, auto out) {
    std::vector<Complex> dxy;
    if (h.has_momentum_coupling()) dxy = spectral_derivative(g, in, 1, 1);
    for (std::size_t ix = 0; ix < g.x.points; ++ix) {
      for (std::size_t iy = 0; iy < g.y.points; ++iy) {
        const std::size_t k = g.index(ix, iy);
        Complex r = h.v_int(g.x.coordinate(ix), g.y.coordinate(iy), t) * in[k];
        if (!dxy.empty()) r += h.p_coupling * dxy[k];
        out[k] = r;
      }
    }
  });
}

/// Generator of the dynamics, H(t) restricted by the in-dynamics flags.
inline JointWaveFunction apply_hamiltonian(const JointWaveFunction& psi, const HamiltonianSpec& h,
                                           double t) {
  JointWaveFunction out = apply_interaction_part(psi, h, t);
  auto accumulate = [&](const JointWaveFunction& part) {
    for (std::size_t i = 0; i < out.amplitudes().size(); ++i) out.amplitudes()[i] += part.amplitudes()[i];
  };
  if (h.system_in_dynamics) accumulate(apply_system_part(psi, h, t));
  if (h.environment_in_dynamics) {
    accumulate(apply_environment_part(psi, h, t));
  } else {
    accumulate(apply_drive_part(psi, h, t));
  }
  return out;
}

/// Expectation value <Psi|H_S(t)|Psi> (normalized state assumed).
inline double expectation_system_energy(const JointWaveFunction& psi, const HamiltonianSpec& h,
                                        double t) {
  const JointWaveFunction hp = apply_system_part(psi, h, t);
  std::vector<double> terms(psi.amplitudes().size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    terms[i] = (std::conj(psi.amplitudes()[i]) * hp.amplitudes()[i]).real();
  }
  return pairwise_sum(terms) * psi.grid().cell_area();
}

/// Tr{sigma dH_S/dt} = <Psi|dV_S/dt|Psi>.
inline double expectation_dHS_dt(const JointWaveFunction& psi, const HamiltonianSpec& h, double t) {
  const Grid& g = psi.grid();
  const auto dv = dH_S_dt(h, g.x, t);
  std::vector<double> terms(psi.spins() * g.x.points, 0.0);
  for (std::size_t s = 0; s < psi.spins(); ++s) {
    for (std::size_t ix = 0; ix < g.x.points; ++ix) {
      double acc = 0.0;
      for (std::size_t iy = 0; iy < g.y.points; ++iy) acc += std::norm(psi(s, ix, iy));
      terms[s * g.x.points + ix] = dv[ix] * acc;
    }
  }
  return pairwise_sum(terms) * g.cell_area();
}

}  // namespace bohmflux
