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

// Born sampling, the guidance velocity field, and RK4 integration of
// configuration-space trajectories over a stream of snapshots.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include "bohmflux/error.hpp"
#include "bohmflux/grid_state.hpp"
#include "bohmflux/hamiltonian.hpp"
#include "bohmflux/parallel.hpp"
#include "bohmflux/spectral_field.hpp"

namespace bohmflux {

// ---------------------------------------------------------------------------
// Reproducible random streams

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of the private stream of sample `index` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t state = master;
  const std::uint64_t a = splitmix64(state);
  state = a ^ (index * 0xD1B54A32D192ED03ULL);
  return splitmix64(state);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct InitialSample {
  double x0 = 0.0;
  double y0 = 0.0;
  std::uint64_t master_seed = 0;
  std::uint64_t index = 0;
};

/// n independent draws from the spin-summed |Psi0|^2: a grid cell is chosen
/// by its probability mass, then the point is jittered uniformly inside it.
inline std::vector<InitialSample> sample_born(const JointWaveFunction& psi0, std::size_t n,
                                              std::uint64_t master_seed) {
  if (n == 0) throw ConfigError("Born sampling needs at least one sample");
  const Grid& g = psi0.grid();
  const Density rho = density(psi0);
  std::vector<double> cdf(rho.values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) cdf[i] = (acc += rho.values[i]);
  if (!(acc > 0.0)) throw NumericalAbort("cannot sample from a zero density");
  const double hx = g.x.spacing(), hy = g.y.spacing();
  auto wrap = [](const Axis& a, double q) {
    const double w = 2.0 * a.half_width;
    q = std::fmod(q + a.half_width, w);
    if (q < 0.0) q += w;
    return q - a.half_width;
  };
  std::vector<InitialSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(master_seed, i));
    const double target = uniform01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    const auto cell = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    const std::size_t ix = cell / g.y.points, iy = cell % g.y.points;
    const double x = g.x.coordinate(ix) + (uniform01(rng) - 0.5) * hx;
    const double y = g.y.coordinate(iy) + (uniform01(rng) - 0.5) * hy;
    out[i] = {wrap(g.x, x), wrap(g.y, y), master_seed, i};
  }
  return out;
}

struct WeightedSamples {
  std::vector<InitialSample> samples;
  std::vector<double> weights;
};

/// Deterministic Born-weighted initial conditions on a points x points
/// cell-centred lattice over [-hx, hx] x [-hy, hy]. Nodes whose weight is
/// below 1e-10 of the largest are dropped; the kept weights must sum to 1.
inline WeightedSamples quadrature_samples(const JointWaveFunction& psi0, std::size_t points,
                                          double half_x, double half_y) {
  if (points < 2) throw ConfigError("quadrature needs at least 2 nodes per axis");
  const SpectralField field(psi0);
  const double dx = 2.0 * half_x / static_cast<double>(points);
  const double dy = 2.0 * half_y / static_cast<double>(points);
  std::vector<InitialSample> all;
  std::vector<double> w;
  for (std::size_t i = 0; i < points; ++i) {
    for (std::size_t j = 0; j < points; ++j) {
      const double x = -half_x + (static_cast<double>(i) + 0.5) * dx;
      const double y = -half_y + (static_cast<double>(j) + 0.5) * dy;
      all.push_back({x, y, 0, i * points + j});
      w.push_back(field.sample(x, y).density() * dx * dy);
    }
  }
  const double peak = *std::max_element(w.begin(), w.end());
  WeightedSamples out;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (w[k] < 1e-10 * peak) continue;
    out.samples.push_back(all[k]);
    out.weights.push_back(w[k]);
  }
  const double total = pairwise_sum(out.weights);
  if (std::abs(total - 1.0) > 1e-6) {
    std::ostringstream os;
    os << "quadrature weights sum to " << total << "; enlarge the quadrature box or node count";
    throw ConfigError(os.str());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Velocity field

/// v = M Im(sum_s Psi_s^* grad Psi_s) / rho (+ v rho_up / rho along y while the
/// spin drive is on), where M is the Hessian of the kinetic form driving the
/// dynamics. For H = P_X^2/2m_x + P_Y^2/2m_y this is the standard guidance law.
struct GuidanceLaw {
  double a_xx = 1.0;
  double a_yy = 1.0;
  double a_xy = 0.0;
  std::optional<SpinDrive> drive;

  static GuidanceLaw from(const HamiltonianSpec& h) {
    return {h.a_xx(), h.a_yy(), h.a_xy(), h.spin_drive};
  }
  bool drive_on(double t) const { return drive && drive->active_at(t); }
};

struct Velocity {
  double vx = 0.0;
  double vy = 0.0;
  bool capped = false;
};

/// Evaluates the guidance law at an interpolated point. Below density_floor
/// the speed is limited to cap_speed and the result flagged.
inline Velocity velocity_at(const PointSample& p, const GuidanceLaw& law, bool drive_on,
                            double density_floor, double cap_speed) {
  double rho = 0.0, rho_up = 0.0, jx = 0.0, jy = 0.0;
  for (std::size_t s = 0; s < p.spins; ++s) {
    const double r = std::norm(p.psi[s]);
    rho += r;
    if (p.spins == kSpinorComponents && is_environment_spin_up(s)) rho_up += r;
    jx += (std::conj(p.psi[s]) * p.dx[s]).imag();
    jy += (std::conj(p.psi[s]) * p.dy[s]).imag();
  }
  Velocity v;
  if (rho > 0.0) {
    v.vx = (law.a_xx * jx + law.a_xy * jy) / rho;
    v.vy = (law.a_xy * jx + law.a_yy * jy) / rho;
    if (drive_on && law.drive) v.vy += law.drive->speed * rho_up / rho;
  }
  if (rho < density_floor || !std::isfinite(v.vx) || !std::isfinite(v.vy)) {
    v.capped = true;
    if (!std::isfinite(v.vx) || !std::isfinite(v.vy)) v.vx = v.vy = 0.0;
    const double speed = std::hypot(v.vx, v.vy);
    if (speed > cap_speed) {
      v.vx *= cap_speed / speed;
      v.vy *= cap_speed / speed;
    }
  }
  return v;
}

inline constexpr double kNodeDensityFraction = 1e-12;

/// Velocity of the guidance law at (x, y) for a snapshot.
inline Velocity velocity_field(const SpectralField& field, const HamiltonianSpec& h, double x,
                               double y,
                               double cap_speed = std::numeric_limits<double>::infinity()) {
  const GuidanceLaw law = GuidanceLaw::from(h);
  return velocity_at(field.sample(x, y), law, law.drive_on(field.time()),
                     kNodeDensityFraction * field.peak_density(), cap_speed);
}

// ---------------------------------------------------------------------------
// Trajectory ensembles

struct TrajectorySet {
  std::vector<InitialSample> samples;
  std::vector<double> weights;
  std::vector<double> times;
  // [trajectory][time]
  std::vector<std::vector<std::array<double, 2>>> positions;
  std::vector<std::vector<std::array<double, 2>>> velocities;
  std::vector<char> excluded;
  std::vector<double> excluded_at;  // time of exclusion, NaN otherwise
  std::size_t capped_evaluations = 0;
  std::size_t total_evaluations = 0;

  std::size_t size() const { return samples.size(); }
  std::size_t excluded_count() const {
    return static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), 1));
  }
};

/// Advances an ensemble snapshot by snapshot with classic RK4. Stage
/// velocities between two snapshots are the average of the velocities
/// evaluated from each bracketing snapshot.
class TrajectoryIntegrator {
 public:
  TrajectoryIntegrator(std::vector<InitialSample> samples, std::vector<double> weights,
                       const HamiltonianSpec& h, const Grid& grid, double step,
                       std::size_t threads = 0)
      : law_(GuidanceLaw::from(h)), grid_(grid), step_(step), threads_(threads) {
    if (weights.size() != samples.size()) throw ConfigError("one weight per sample is required");
    const std::size_t n = samples.size();
    set_.samples = std::move(samples);
    set_.weights = std::move(weights);
    set_.positions.resize(n);
    set_.velocities.resize(n);
    set_.excluded.assign(n, 0);
    set_.excluded_at.assign(n, std::numeric_limits<double>::quiet_NaN());
    cap_speed_ = std::min(grid.x.half_width, grid.y.half_width) / (10.0 * step);
    capped_.assign(n, 0);
    evals_.assign(n, 0);
  }

  /// Records positions and velocities at the first snapshot.
  void begin(const SpectralField& f0) {
    set_.times.push_back(f0.time());
    const bool drive = law_.drive_on(f0.time());
    parallel_for(set_.size(), threads_, [&](std::size_t i) {
      const auto& s = set_.samples[i];
      std::array<double, 2> z{s.x0, s.y0};
      set_.positions[i].push_back(z);
      if (!inside_margin(z)) {
        exclude(i, f0.time());
        set_.velocities[i].push_back({nan(), nan()});
        return;
      }
      const Velocity v = eval(i, f0, z, drive);
      set_.velocities[i].push_back({v.vx, v.vy});
    });
    tally();
  }

  /// RK4 step from f0.time() to f1.time().
  void advance(const SpectralField& f0, const SpectralField& f1) {
    const double t0 = f0.time(), t1 = f1.time(), h = t1 - t0;
    set_.times.push_back(t1);
    const bool drive_interval = law_.drive && t0 < law_.drive->duration;
    const bool drive_end = law_.drive_on(t1);
    parallel_for(set_.size(), threads_, [&](std::size_t i) {
      if (set_.excluded[i]) {
        set_.positions[i].push_back({nan(), nan()});
        set_.velocities[i].push_back({nan(), nan()});
        return;
      }
      const auto z = set_.positions[i].back();
      try {
        auto at = [&](double dz, const std::array<double, 2>& k) {
          return std::array<double, 2>{z[0] + dz * k[0], z[1] + dz * k[1]};
        };
        auto both = [&](const std::array<double, 2>& p) {
          const Velocity a = eval(i, f0, p, drive_interval);
          const Velocity b = eval(i, f1, p, drive_interval);
          return std::array<double, 2>{0.5 * (a.vx + b.vx), 0.5 * (a.vy + b.vy)};
        };
        const Velocity v1 = eval(i, f0, z, drive_interval);
        const std::array<double, 2> k1{v1.vx, v1.vy};
        const auto k2 = both(at(0.5 * h, k1));
        const auto k3 = both(at(0.5 * h, k2));
        const Velocity v4 = eval(i, f1, at(h, k3), drive_interval);
        const std::array<double, 2> k4{v4.vx, v4.vy};
        const std::array<double, 2> z1{z[0] + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                                       z[1] + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])};
        set_.positions[i].push_back(z1);
        if (!inside_margin(z1)) {
          exclude(i, t1);
          set_.velocities[i].push_back({nan(), nan()});
          return;
        }
        const Velocity v = eval(i, f1, z1, drive_end);
        set_.velocities[i].push_back({v.vx, v.vy});
      } catch (const DomainError&) {
        exclude(i, t1);
        if (set_.positions[i].size() < set_.times.size()) set_.positions[i].push_back({nan(), nan()});
        set_.velocities[i].push_back({nan(), nan()});
      }
    });
    tally();
    const double frac = static_cast<double>(set_.excluded_count()) / static_cast<double>(set_.size());
    if (frac > 1e-3) {
      std::ostringstream os;
      os << set_.excluded_count() << " of " << set_.size()
         << " trajectories left the grid margin by t=" << t1 << " (limit 0.1%)";
      throw NumericalAbort(os.str());
    }
  }

  const TrajectorySet& result() const { return set_; }
  TrajectorySet take() { return std::move(set_); }

 private:
  static double nan() { return std::numeric_limits<double>::quiet_NaN(); }

  bool inside_margin(const std::array<double, 2>& z) const {
    const double mx = 2.0 * grid_.x.spacing(), my = 2.0 * grid_.y.spacing();
    return std::isfinite(z[0]) && std::isfinite(z[1]) && z[0] >= -grid_.x.half_width + mx &&
           z[0] <= grid_.x.half_width - mx && z[1] >= -grid_.y.half_width + my &&
           z[1] <= grid_.y.half_width - my;
  }

  void exclude(std::size_t i, double t) {
    set_.excluded[i] = 1;
    set_.excluded_at[i] = t;
  }

  Velocity eval(std::size_t i, const SpectralField& f, const std::array<double, 2>& z, bool drive) {
    const Velocity v = velocity_at(f.sample(z[0], z[1]), law_, drive,
                                   kNodeDensityFraction * f.peak_density(), cap_speed_);
    ++evals_[i];
    if (v.capped) ++capped_[i];
    return v;
  }

  void tally() {
    set_.capped_evaluations = 0;
    set_.total_evaluations = 0;
    for (std::size_t i = 0; i < set_.size(); ++i) {
      set_.capped_evaluations += capped_[i];
      set_.total_evaluations += evals_[i];
    }
  }

  GuidanceLaw law_;
  Grid grid_;
  double step_;
  std::size_t threads_;
  double cap_speed_;
  TrajectorySet set_;
  std::vector<std::size_t> capped_, evals_;
};

/// Integrates an ensemble over a stored snapshot sequence.
inline TrajectorySet integrate_ensemble(const std::vector<JointWaveFunction>& snapshots,
                                        std::vector<InitialSample> samples,
                                        std::vector<double> weights, const HamiltonianSpec& h,
                                        std::size_t threads = 0) {
  if (snapshots.empty()) throw ConfigError("no snapshots to integrate over");
  const double step = snapshots.size() > 1 ? snapshots[1].time() - snapshots[0].time() : 1.0;
  TrajectoryIntegrator integ(std::move(samples), std::move(weights), h, snapshots.front().grid(),
                             step, threads);
  std::optional<SpectralField> prev(std::in_place, snapshots.front());
  integ.begin(*prev);
  for (std::size_t k = 1; k < snapshots.size(); ++k) {
    SpectralField next(snapshots[k]);
    integ.advance(*prev, next);
    prev.emplace(std::move(next));
  }
  return integ.take();
}

/// Uniform weights 1/n.
inline std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Equivariance

struct EquivarianceResult {
  double statistic = 0.0;  // L1 distance in [0, 2]
  double budget = 0.0;     // multinomial sampling bound (+ integration allowance)
  std::size_t samples = 0;
  bool passed() const { return statistic <= budget; }
};

inline constexpr std::size_t kEquivarianceBins = 32;
inline constexpr std::size_t kEquivarianceMinSamples = 1000;
inline constexpr double kIntegrationAllowance = 0.02;

namespace detail {

inline constexpr std::array<double, 8> kGaussLegendreNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGaussLegendreWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

}  // namespace detail

/// L1 distance between the weighted 32x32 histogram of `points` over the
/// mean +/- 4 sd box and the |Psi|^2 mass of each bin (plus the mass outside
/// the box). The budget is the expected multinomial L1 noise plus five
/// standard deviations; `integrated` adds the trajectory integration allowance.
inline EquivarianceResult equivariance_statistic(std::span<const std::array<double, 2>> points,
                                                 std::span<const double> weights,
                                                 const SpectralField& field, bool integrated) {
  std::vector<std::array<double, 2>> pts;
  std::vector<double> w;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (std::isfinite(points[i][0]) && std::isfinite(points[i][1]) && weights[i] > 0.0) {
      pts.push_back(points[i]);
      w.push_back(weights[i]);
    }
  }
  const std::size_t n = pts.size();
  if (n < kEquivarianceMinSamples) {
    throw ConfigError("equivariance statistic needs at least 1000 trajectories");
  }
  const double wsum = pairwise_sum(w);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += w[i] * pts[i][0];
    my += w[i] * pts[i][1];
  }
  mx /= wsum;
  my /= wsum;
  double vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    vx += w[i] * (pts[i][0] - mx) * (pts[i][0] - mx);
    vy += w[i] * (pts[i][1] - my) * (pts[i][1] - my);
  }
  const Grid& g = field.grid();
  const double x_lo = std::max(-g.x.half_width, mx - 4.0 * std::sqrt(vx / wsum));
  const double x_hi = std::min(g.x.half_width - 1e-12, mx + 4.0 * std::sqrt(vx / wsum));
  const double y_lo = std::max(-g.y.half_width, my - 4.0 * std::sqrt(vy / wsum));
  const double y_hi = std::min(g.y.half_width - 1e-12, my + 4.0 * std::sqrt(vy / wsum));
  const std::size_t B = kEquivarianceBins;
  const double bx = (x_hi - x_lo) / static_cast<double>(B), by = (y_hi - y_lo) / static_cast<double>(B);

  std::vector<double> p(B * B + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double fx = (pts[i][0] - x_lo) / bx, fy = (pts[i][1] - y_lo) / by;
    if (fx >= 0.0 && fx < static_cast<double>(B) && fy >= 0.0 && fy < static_cast<double>(B)) {
      p[static_cast<std::size_t>(fx) * B + static_cast<std::size_t>(fy)] += w[i] / wsum;
    } else {
      p[B * B] += w[i] / wsum;
    }
  }

  std::vector<double> q(B * B + 1, 0.0);
  for (std::size_t a = 0; a < B; ++a) {
    for (std::size_t b = 0; b < B; ++b) {
      const double cx = x_lo + (static_cast<double>(a) + 0.5) * bx;
      const double cy = y_lo + (static_cast<double>(b) + 0.5) * by;
      double mass = 0.0;
      for (std::size_t u = 0; u < 8; ++u) {
        for (std::size_t v = 0; v < 8; ++v) {
          const double x = cx + 0.5 * bx * detail::kGaussLegendreNodes[u];
          const double y = cy + 0.5 * by * detail::kGaussLegendreNodes[v];
          mass += detail::kGaussLegendreWeights[u] * detail::kGaussLegendreWeights[v] *
                  field.sample(x, y).density();
        }
      }
      q[a * B + b] = mass * 0.25 * bx * by;
    }
  }
  q[B * B] = std::max(0.0, 1.0 - pairwise_sum(std::span<const double>(q.data(), B * B)));

  EquivarianceResult r;
  r.samples = n;
  double mean_noise = 0.0, var_noise = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    r.statistic += std::abs(p[k] - q[k]);
    const double qq = std::clamp(q[k], 0.0, 1.0);
    mean_noise += std::sqrt(2.0 * qq * (1.0 - qq) / (std::numbers::pi * static_cast<double>(n)));
    var_noise += qq * (1.0 - qq) * (1.0 - 2.0 / std::numbers::pi) / static_cast<double>(n);
  }
  r.budget = mean_noise + 5.0 * std::sqrt(var_noise) + (integrated ? kIntegrationAllowance : 0.0);
  return r;
}

/// Equivariance of a trajectory set at stored time index k.
inline EquivarianceResult equivariance_statistic(const TrajectorySet& set, std::size_t k,
                                                 const SpectralField& field, bool integrated) {
  std::vector<std::array<double, 2>> pts(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) pts[i] = set.positions[i][k];
  return equivariance_statistic(pts, set.weights, field, integrated);
}

}  // namespace bohmflux
