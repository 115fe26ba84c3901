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

// Strang split-step Fourier propagation of the joint wave function.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include "bohmflux/error.hpp"
#include "bohmflux/fft.hpp"
#include "bohmflux/grid_state.hpp"
#include "bohmflux/hamiltonian.hpp"

namespace bohmflux {

struct PropagationPlan {
  double dt = 1e-3;
  double t_final = 1.0;
  std::size_t snapshot_stride = 1;

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_final / dt)); }
  std::size_t snapshot_count() const { return steps() / snapshot_stride + 1; }
  double snapshot_interval() const { return dt * static_cast<double>(snapshot_stride); }
  double snapshot_time(std::size_t k) const { return static_cast<double>(k * snapshot_stride) * dt; }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("plan.dt must be positive");
    if (!(t_final >= 0.0) || !std::isfinite(t_final)) throw ConfigError("plan.t_final must be >= 0");
    if (snapshot_stride == 0) throw ConfigError("plan.snapshot_stride must be >= 1");
    const double n = t_final / dt;
    if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
      throw ConfigError("plan.t_final must be an integer multiple of plan.dt");
    }
    if (steps() % snapshot_stride != 0) {
      throw ConfigError("plan step count must be a multiple of plan.snapshot_stride");
    }
  }
};

struct EvolutionStats {
  std::size_t steps = 0;
  std::size_t snapshots = 0;
  double max_norm_drift = 0.0;
};

namespace detail {

inline double kinetic_symbol(const HamiltonianSpec& h, double kx, double ky) {
  return 0.5 * h.a_xx() * kx * kx + 0.5 * h.a_yy() * ky * ky + h.a_xy() * kx * ky;
}

/// Multiplies a spectrum by exp(-i ky shift), a displacement by +shift in y.
inline void shift_spectrum_y(const Grid& g, std::span<Complex> spectrum, double shift) {
  std::vector<Complex> phase(g.y.points);
  for (std::size_t iy = 0; iy < g.y.points; ++iy) {
    phase[iy] = std::polar(1.0, -g.y.wavenumber(iy) * shift);
  }
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) spectrum[g.index(ix, iy)] *= phase[iy];
  }
}

}  // namespace detail

/// One-step integrator bound to a grid, Hamiltonian and time step.
class Propagator {
 public:
  Propagator(const Grid& grid, const HamiltonianSpec& h, double dt)
      : grid_(grid), h_(h), dt_(dt), kinetic_(grid.size()), half_potential_(grid.size()) {
    h_.validate();
    for (std::size_t ix = 0; ix < grid.x.points; ++ix) {
      for (std::size_t iy = 0; iy < grid.y.points; ++iy) {
        const double w = detail::kinetic_symbol(h_, grid.x.wavenumber(ix), grid.y.wavenumber(iy));
        kinetic_[grid.index(ix, iy)] =
            std::polar(1.0 / static_cast<double>(grid.size()), -w * dt);
      }
    }
    potential_free_ = h_.dynamics_potential_is_zero();
    static_potential_ = h_.dynamics_potential_is_static();
    if (!potential_free_ && static_potential_) fill_half_potential(0.0);
  }

  /// Advances psi from t to t + dt in place.
  void step(JointWaveFunction& psi, double t) {
    if (!potential_free_ && !static_potential_) fill_half_potential(t + 0.5 * dt_);
    const double drive_time = h_.spin_drive ? h_.spin_drive->active_time(t, t + dt_) : 0.0;
    for (std::size_t s = 0; s < psi.spins(); ++s) {
      if (psi.component_is_zero(s)) continue;
      auto c = psi.component(s);
      if (!potential_free_) multiply(c, half_potential_);
      fft::transform_2d(grid_.x.points, grid_.y.points, c.data(), c.data(), fft::Direction::kForward);
      multiply(c, kinetic_);
      if (drive_time > 0.0 && psi.spins() == kSpinorComponents && is_environment_spin_up(s)) {
        detail::shift_spectrum_y(grid_, c, h_.spin_drive->speed * drive_time);
      }
      fft::transform_2d(grid_.x.points, grid_.y.points, c.data(), c.data(), fft::Direction::kBackward);
      if (!potential_free_) multiply(c, half_potential_);
    }
    psi.set_time(t + dt_);
  }

  bool potential_free() const { return potential_free_; }

 private:
  void fill_half_potential(double t) {
    for (std::size_t ix = 0; ix < grid_.x.points; ++ix) {
      const double x = grid_.x.coordinate(ix);
      for (std::size_t iy = 0; iy < grid_.y.points; ++iy) {
        const double v = h_.dynamics_potential(x, grid_.y.coordinate(iy), t);
        half_potential_[grid_.index(ix, iy)] = std::polar(1.0, -0.5 * v * dt_);
      }
    }
  }

  static void multiply(std::span<Complex> a, const std::vector<Complex>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  }

  Grid grid_;
  HamiltonianSpec h_;
  double dt_;
  bool potential_free_ = false;
  bool static_potential_ = true;
  std::vector<Complex> kinetic_;
  std::vector<Complex> half_potential_;
};

/// Single Strang step from t to t + dt.
inline JointWaveFunction step(const JointWaveFunction& psi, const HamiltonianSpec& h, double t,
                              double dt) {
  Propagator prop(psi.grid(), h, dt);
  JointWaveFunction out = psi;
  out.set_time(t);
  prop.step(out, t);
  return out;
}

namespace detail {

inline void moments_along_y(const JointWaveFunction& psi, double& mean, double& sd) {
  const Density d = density(psi);
  const Grid& g = psi.grid();
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) {
      const double y = g.y.coordinate(iy), r = d.at(ix, iy);
      m0 += r;
      m1 += r * y;
      m2 += r * y * y;
    }
  }
  mean = m1 / m0;
  sd = std::sqrt(std::max(0.0, m2 / m0 - mean * mean));
}

}  // namespace detail

/// Displaces the environment-spin-up components by v * tau along y.
inline JointWaveFunction apply_spin_drive(const JointWaveFunction& psi, double v, double tau) {
  if (psi.spins() != kSpinorComponents) throw ConfigError("spin drive requires a spinor state");
  const double shift = v * tau;
  double mean = 0.0, sd = 0.0;
  detail::moments_along_y(psi, mean, sd);
  if (std::abs(mean) + std::abs(shift) + 6.0 * sd > psi.grid().y.half_width) {
    throw ConfigError("spin drive displacement leaves less than 6 widths to the y boundary");
  }
  JointWaveFunction out = psi;
  if (shift == 0.0) return out;
  const Grid& g = psi.grid();
  const double scale = 1.0 / static_cast<double>(g.size());
  for (std::size_t s = 0; s < out.spins(); ++s) {
    if (!is_environment_spin_up(s) || out.component_is_zero(s)) continue;
    auto c = out.component(s);
    fft::transform_2d(g.x.points, g.y.points, c.data(), c.data(), fft::Direction::kForward);
    detail::shift_spectrum_y(g, c, shift);
    for (auto& z : c) z *= scale;
    fft::transform_2d(g.x.points, g.y.points, c.data(), c.data(), fft::Direction::kBackward);
  }
  return out;
}

/// Checks that a potential-free evolution keeps the packet at least six
/// standard deviations inside the box over the plan horizon. Dynamics with
/// confining potentials are not bounded this way and pass unchecked.
inline void validate_horizon(const JointWaveFunction& psi0, const HamiltonianSpec& h,
                             const PropagationPlan& plan) {
  if (!h.dynamics_potential_is_zero()) return;
  const Grid& g = psi0.grid();
  const Density rho = density(psi0);
  // Momentum-space moments of the transformed components.
  double p0 = 0.0, mkx = 0.0, mky = 0.0, kxx = 0.0, kyy = 0.0, kxy = 0.0;
  std::vector<Complex> buf(g.size());
  for (std::size_t s = 0; s < psi0.spins(); ++s) {
    if (psi0.component_is_zero(s)) continue;
    const auto c = psi0.component(s);
    fft::transform_2d(g.x.points, g.y.points, c.data(), buf.data(), fft::Direction::kForward);
    for (std::size_t ix = 0; ix < g.x.points; ++ix) {
      for (std::size_t iy = 0; iy < g.y.points; ++iy) {
        const double w = std::norm(buf[g.index(ix, iy)]);
        const double kx = g.x.wavenumber(ix), ky = g.y.wavenumber(iy);
        p0 += w;
        mkx += w * kx;
        mky += w * ky;
        kxx += w * kx * kx;
        kyy += w * ky * ky;
        kxy += w * kx * ky;
      }
    }
  }
  mkx /= p0; mky /= p0;
  const double vxx = kxx / p0 - mkx * mkx, vyy = kyy / p0 - mky * mky, cxy = kxy / p0 - mkx * mky;
  const double ax = h.a_xx(), ay = h.a_yy(), axy = h.a_xy();
  const double sd_vx = std::sqrt(std::max(0.0, ax * ax * vxx + 2 * ax * axy * cxy + axy * axy * vyy));
  const double sd_vy = std::sqrt(std::max(0.0, axy * axy * vxx + 2 * axy * ay * cxy + ay * ay * vyy));
  const double mean_vx = ax * mkx + axy * mky, mean_vy = axy * mkx + ay * mky;

  // Position moments and the position-velocity correlation <{q, v_q}>/2.
  const JointWaveFunction gx = spectral_gradient(psi0, AxisId::kX);
  const JointWaveFunction gy = spectral_gradient(psi0, AxisId::kY);
  double m0 = 0.0, mx = 0.0, my = 0.0, sx = 0.0, sy = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) {
      const double r = rho.at(ix, iy), x = g.x.coordinate(ix), y = g.y.coordinate(iy);
      double jx = 0.0, jy = 0.0;
      for (std::size_t s = 0; s < psi0.spins(); ++s) {
        const Complex p = psi0(s, ix, iy);
        jx += (std::conj(p) * gx(s, ix, iy)).imag();
        jy += (std::conj(p) * gy(s, ix, iy)).imag();
      }
      m0 += r; mx += r * x; my += r * y; sx += r * x * x; sy += r * y * y;
      cx += x * (ax * jx + axy * jy);
      cy += y * (axy * jx + ay * jy);
    }
  }
  mx /= m0; my /= m0;
  const double cov_x = cx / m0 - mx * mean_vx, cov_y = cy / m0 - my * mean_vy;
  const double t = plan.t_final;
  const double var_x = sx / m0 - mx * mx + 2.0 * t * cov_x + t * t * sd_vx * sd_vx;
  const double var_y = sy / m0 - my * my + 2.0 * t * cov_y + t * t * sd_vy * sd_vy;
  const double drive = h.spin_drive ? std::abs(h.spin_drive->displacement(t)) : 0.0;
  const double reach_x = std::abs(mx) + std::abs(mean_vx) * t + 6.0 * std::sqrt(std::max(0.0, var_x));
  const double reach_y =
      std::abs(my) + std::abs(mean_vy) * t + drive + 6.0 * std::sqrt(std::max(0.0, var_y));
  if (reach_x > g.x.half_width || reach_y > g.y.half_width) {
    std::ostringstream os;
    os << "horizon t_final=" << t << " lets the packet reach (" << reach_x << ", " << reach_y
       << ") beyond the box half widths (" << g.x.half_width << ", " << g.y.half_width << ")";
    throw ConfigError(os.str());
  }
}

using SnapshotCallback = std::function<void(const JointWaveFunction&)>;

/// Propagates psi0 over the plan, calling on_snapshot at t = 0 and every
/// snapshot_stride steps. Potential-free dynamics are evaluated exactly from
/// the initial spectrum at each snapshot time.
inline EvolutionStats evolve(const JointWaveFunction& psi0, const HamiltonianSpec& h,
                             const PropagationPlan& plan, const SnapshotCallback& on_snapshot) {
  plan.validate();
  h.validate();
  const Grid& g = psi0.grid();
  EvolutionStats stats;
  stats.steps = plan.steps();
  const double norm0 = psi0.norm_squared();

  auto check_norm = [&](const JointWaveFunction& psi) {
    const double drift = std::abs(psi.norm_squared() - norm0);
    stats.max_norm_drift = std::max(stats.max_norm_drift, drift);
    if (drift > 1e-6) {
      std::ostringstream os;
      os << "norm drift " << drift << " at t=" << psi.time() << " exceeds 1e-6";
      throw NumericalAbort(os.str());
    }
  };

  Propagator prop(g, h, plan.dt);
  if (prop.potential_free()) {
    std::vector<std::vector<Complex>> spectra(psi0.spins());
    for (std::size_t s = 0; s < psi0.spins(); ++s) {
      if (psi0.component_is_zero(s)) continue;
      spectra[s].resize(g.size());
      fft::transform_2d(g.x.points, g.y.points, psi0.component(s).data(), spectra[s].data(),
                        fft::Direction::kForward);
    }
    for (std::size_t k = 0; k < plan.snapshot_count(); ++k) {
      const double t = plan.snapshot_time(k);
      JointWaveFunction psi(g, psi0.spins(), t);
      for (std::size_t s = 0; s < psi0.spins(); ++s) {
        if (spectra[s].empty()) continue;
        auto c = psi.component(s);
        for (std::size_t ix = 0; ix < g.x.points; ++ix) {
          for (std::size_t iy = 0; iy < g.y.points; ++iy) {
            const std::size_t i = g.index(ix, iy);
            const double w = detail::kinetic_symbol(h, g.x.wavenumber(ix), g.y.wavenumber(iy));
            c[i] = spectra[s][i] * std::polar(1.0 / static_cast<double>(g.size()), -w * t);
          }
        }
        if (h.spin_drive && psi.spins() == kSpinorComponents && is_environment_spin_up(s)) {
          detail::shift_spectrum_y(g, c, h.spin_drive->displacement(t));
        }
        fft::transform_2d(g.x.points, g.y.points, c.data(), c.data(), fft::Direction::kBackward);
      }
      check_norm(psi);
      on_snapshot(psi);
      ++stats.snapshots;
    }
    return stats;
  }

  JointWaveFunction psi = psi0;
  psi.set_time(0.0);
  check_norm(psi);
  on_snapshot(psi);
  ++stats.snapshots;
  for (std::size_t n = 0; n < plan.steps(); ++n) {
    prop.step(psi, static_cast<double>(n) * plan.dt);
    if ((n + 1) % plan.snapshot_stride == 0) {
      psi.set_time(static_cast<double>(n + 1) * plan.dt);
      check_norm(psi);
      on_snapshot(psi);
      ++stats.snapshots;
    }
  }
  return stats;
}

/// Collects every snapshot of an evolution.
inline std::vector<JointWaveFunction> evolve(const JointWaveFunction& psi0, const HamiltonianSpec& h,
                                             const PropagationPlan& plan) {
  std::vector<JointWaveFunction> out;
  out.reserve(plan.snapshot_count());
  evolve(psi0, h, plan, [&](const JointWaveFunction& psi) { out.push_back(psi); });
  return out;
}

}  // namespace bohmflux
