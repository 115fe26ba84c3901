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

// Closed-form reference solutions for the worked two-particle examples and
// the self-consistency suites that exercise them without any PDE solving.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bohmflux/grid_state.hpp"

namespace bohmflux {

/// Two unit-mass particles in V = (x - y)^2 / 4 starting from
/// pi^{-1/2} exp(-(x^2 + y^2)/2), with H_S = P_X^2/2 + X^2/4, H_int = -XY/2.
struct QuadraticPairOracle {
  static double a(double t) { return (std::sqrt(1.0 + t * t) + 1.0) / 2.0; }
  static double b(double t) { return (std::sqrt(1.0 + t * t) - 1.0) / 2.0; }
  static double c(double t) { return -t * t + 4.0 * std::sqrt(t * t + 1.0) + std::numbers::pi - 4.0; }
  static double d(double t) { return t * t + 4.0 * std::sqrt(t * t + 1.0) + std::numbers::pi - 4.0; }

  static Complex psi(double x, double y, double t) {
    const Complex w(1.0, t);
    const double r = x - y, s = x + y;
    return std::exp(-0.25 * (r * r + s * s / w + Complex(0.0, 2.0 * t))) /
           std::sqrt(std::numbers::pi * w);
  }
  static double X(double t, double x0, double y0) { return a(t) * x0 + b(t) * y0; }
  static double Y(double t, double x0, double y0) { return b(t) * x0 + a(t) * y0; }
  static double Ydot(double t, double x0, double y0) {
    return (x0 + y0) * t / (2.0 * std::sqrt(1.0 + t * t));
  }
  /// Unnormalized conditional wave function along the trajectory from (x0, y0).
  static Complex cwf(double x, double t, double x0, double y0) { return psi(x, Y(t, x0, y0), t); }
  static double u(double t, double Yt) { return 3.0 / 8.0 + t * t * Yt * Yt / (4.0 * t * t + 8.0); }
  static double du(double t, double Yt, double Ydt) {
    const double q = t * t + 2.0;
    return t * Yt * Yt / (q * q) + t * t * Yt * Ydt / (2.0 * q);
  }
  static double du_int(double t, double Yt) { return t * Yt * Yt / (2.0 * (2.0 + t * t)); }
  static double du_ent(double t, double Yt, double Ydt) {
    const double q = t * t + 2.0;
    return t * t * Yt * (q * Ydt - t * Yt) / (2.0 * q * q);
  }
  static double cum_int(double t, double x0, double y0) {
    return (4.0 * (x0 * x0 - y0 * y0) * std::atan(std::sqrt(t * t + 1.0)) -
            (x0 + y0) * (c(t) * x0 - d(t) * y0) + 4.0 * x0 * y0 * std::log(2.0 / (t * t + 2.0))) /
           16.0;
  }
  /// Ensemble averages: <<Delta u>> = <<Delta u_int>> = t^2/16, <H_S> = 3/8 + t^2/16.
  static double mean_delta_u(double t) { return t * t / 16.0; }
  static double expectation_hs(double t) { return 3.0 / 8.0 + t * t / 16.0; }
};

/// Free particles coupled only through H_int = -lambda P_X P_Y, starting
/// from pi^{-1/2} exp(-(x^2 + y^2)/2), with H_S = P_X^2/2 as the observable.
struct PPCouplingOracle {
  double lambda = 10.0;

  double f(double t) const { return 1.0 + lambda * lambda * t * t; }
  Complex psi(double x, double y, double t) const {
    const double ft = f(t);
    return std::exp(-(Complex(x * x + y * y, 2.0 * lambda * x * y * t)) / (2.0 * ft)) /
           std::sqrt(std::numbers::pi * ft);
  }
  double density(double x, double y, double t) const { return std::norm(psi(x, y, t)); }
  double u_of_y(double t, double y) const {
    const double ft = f(t), lt = lambda * t;
    return (lt * lt * (2.0 * y * y + 1.0) + 1.0) / (4.0 * ft * ft);
  }
  double slice_rate(double x, double y, double t) const {
    const double ft = f(t), r2 = x * x + y * y;
    return 2.0 * lambda * t / (std::numbers::pi * ft * ft * ft) * std::exp(-r2 / ft) * (r2 - ft);
  }
  /// lambda^3 t^3 / (2 f^2): the averaged entanglement rate per unit of lambda t.
  double avg_ent_rate(double t) const {
    const double ft = f(t), lt = lambda * t;
    return lt * lt * lt / (2.0 * ft * ft);
  }
  static double expectation_hs() { return 0.25; }
};

/// Spin-entangled pair (up-up e^{ikx} f g + down-down f g)/sqrt(2) with the
/// environment-spin-up branch displaced along y at speed v.
struct SpinSteeringOracle {
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double k = 2.0;
  double v = 20.0;
  double mass = 1.0;

  double f(double x) const { return gaussian_amplitude(x, sigma_x); }
  double g(double y) const { return gaussian_amplitude(y, sigma_y); }
  double e0() const { return 1.0 / (8.0 * mass * sigma_x * sigma_x); }
  double delta() const { return k * k / (2.0 * mass); }
  double ek() const { return e0() + delta(); }

  double ratio(double y, double t) const {
    const double up = g(y - v * t), dn = g(y);
    const double a = up * up, b = dn * dn;
    if (a + b == 0.0) {
      // Both tails underflow: compare exponents directly.
      const double ea = -(y - v * t) * (y - v * t), eb = -y * y;
      return ea > eb ? 1.0 : 0.0;
    }
    return a / (a + b);
  }
  double ss_vy(double y, double t) const { return v * ratio(y, t); }
  double ss_u(double Y, double t) const { return e0() + delta() * ratio(Y, t); }
  double ss_mu(double x, double y, double t) const {
    const double fx = f(x), up = g(y - v * t), dn = g(y);
    return fx * fx * (up * up + dn * dn) / 2.0;
  }
};

// ---------------------------------------------------------------------------
// Self-consistency suites

struct OracleCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed() const { return std::isfinite(value) && value <= tolerance; }
};

struct OracleSuite {
  std::string name;
  std::vector<OracleCheck> checks;
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const OracleCheck& c) { return c.passed(); });
  }
};

namespace detail {

// Fourth-order central differences.
template <typename F>
auto d1(F&& fn, double q, double h) {
  return (-fn(q + 2 * h) + 8.0 * fn(q + h) - 8.0 * fn(q - h) + fn(q - 2 * h)) / (12.0 * h);
}
template <typename F>
auto d2(F&& fn, double q, double h) {
  return (-fn(q + 2 * h) + 16.0 * fn(q + h) - 30.0 * fn(q) + 16.0 * fn(q - h) - fn(q - 2 * h)) /
         (12.0 * h * h);
}

}  // namespace detail

inline constexpr double kOracleTolerance = 1e-6;

/// Schroedinger residual, trajectory/velocity consistency and the algebraic
/// identity du_int + du_ent = du of the quadratic pair.
inline OracleSuite quadratic_pair_suite(std::uint64_t seed = 20260101, std::size_t points = 1000) {
  using Q = QuadraticPairOracle;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-2.5, 2.5), time(0.0, 3.0), vel(-3.0, 3.0);
  const double h = 1e-3;
  double schro = 0.0, traj = 0.0, ident = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = pos(rng), y = pos(rng), t = time(rng) + 0.01;
    const Complex lhs = Complex(0.0, 1.0) * detail::d1([&](double s) { return Q::psi(x, y, s); }, t, h);
    const Complex lap = detail::d2([&](double s) { return Q::psi(s, y, t); }, x, h) +
                        detail::d2([&](double s) { return Q::psi(x, s, t); }, y, h);
    const Complex rhs = -0.5 * lap + 0.25 * (x - y) * (x - y) * Q::psi(x, y, t);
    schro = std::max(schro, std::abs(lhs - rhs));

    const double x0 = pos(rng) / 2.0, y0 = pos(rng) / 2.0;
    const double Xt = Q::X(t, x0, y0), Yt = Q::Y(t, x0, y0);
    const Complex p = Q::psi(Xt, Yt, t);
    const double vy = (detail::d1([&](double s) { return Q::psi(Xt, s, t); }, Yt, h) / p).imag();
    const double vx = (detail::d1([&](double s) { return Q::psi(s, Yt, t); }, Xt, h) / p).imag();
    const double dY = detail::d1([&](double s) { return Q::Y(s, x0, y0); }, t, h);
    const double dX = detail::d1([&](double s) { return Q::X(s, x0, y0); }, t, h);
    traj = std::max({traj, std::abs(vy - dY), std::abs(vx - dX), std::abs(dY - Q::Ydot(t, x0, y0))});
  }
  for (std::size_t i = 0; i < 10 * points; ++i) {
    const double t = time(rng), Y = pos(rng), Yd = vel(rng);
    ident = std::max(ident, std::abs(Q::du_int(t, Y) + Q::du_ent(t, Y, Yd) - Q::du(t, Y, Yd)));
  }
  double du_fd = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x0 = pos(rng) / 2.0, y0 = pos(rng) / 2.0, t = time(rng) + 0.01;
    const double fd = detail::d1([&](double s) { return Q::u(s, Q::Y(s, x0, y0)); }, t, h);
    du_fd = std::max(du_fd, std::abs(fd - Q::du(t, Q::Y(t, x0, y0), Q::Ydot(t, x0, y0))));
    const double ci = detail::d1([&](double s) { return Q::cum_int(s, x0, y0); }, t, h);
    du_fd = std::max(du_fd, std::abs(ci - Q::du_int(t, Q::Y(t, x0, y0))));
  }
  return {"quadratic_pair",
          {{"schroedinger_residual", schro, kOracleTolerance},
           {"trajectory_velocity_consistency", traj, kOracleTolerance},
           {"flow_split_identity", ident, kOracleTolerance},
           {"energy_and_cumulative_derivatives", du_fd, kOracleTolerance}}};
}

/// Schroedinger residual under H = -lambda P_X P_Y, tracelessness of the
/// slice rate and quadrature reproduction of the averaged entanglement rate.
inline OracleSuite pp_coupling_suite(double lambda = 10.0, std::uint64_t seed = 20260102,
                                     std::size_t points = 1000) {
  const PPCouplingOracle o{lambda};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-2.5, 2.5), time(0.0, 2.0 / lambda);
  const double h = 1e-3;
  double schro = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = pos(rng), y = pos(rng), t = time(rng) + 1e-3;
    const Complex lhs = Complex(0.0, 1.0) *
                        detail::d1([&](double s) { return o.psi(x, y, s); }, t, h / lambda);
    const Complex dxy = detail::d1(
        [&](double sx) { return detail::d1([&](double sy) { return o.psi(sx, sy, t); }, y, h); }, x, h);
    schro = std::max(schro, std::abs(lhs - lambda * dxy) / lambda);
  }
  // Midpoint quadrature over a box wide enough for f(t) <= 5.
  const std::size_t n = 1200;
  const double half = 18.0, dq = 2.0 * half / static_cast<double>(n);
  double trace = 0.0, rate = 0.0;
  for (double lt : {0.1, 0.5, 1.0, 1.5, 2.0}) {
    const double t = lt / lambda;
    double s_sum = 0.0, us_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = -half + (static_cast<double>(i) + 0.5) * dq;
      for (std::size_t j = 0; j < n; ++j) {
        const double y = -half + (static_cast<double>(j) + 0.5) * dq;
        const double s = o.slice_rate(x, y, t);
        s_sum += s;
        us_sum += o.u_of_y(t, y) * s;
      }
    }
    trace = std::max(trace, std::abs(s_sum * dq * dq));
    rate = std::max(rate, std::abs(us_sum * dq * dq - o.avg_ent_rate(t)));
  }
  return {"pp_coupling",
          {{"schroedinger_residual_per_lambda", schro, kOracleTolerance},
           {"slice_rate_trace", trace, kOracleTolerance},
           {"averaged_rate_quadrature", rate, kOracleTolerance}}};
}

/// Continuity of the steering density under the steering velocity field.
inline OracleSuite spin_steering_suite(const SpinSteeringOracle& o = {},
                                       std::uint64_t seed = 20260103, std::size_t points = 1000) {
  std::mt19937_64 rng(seed);
  const double tmax = 6.0 * o.sigma_y / o.v;
  std::uniform_real_distribution<double> xs(-3.0 * o.sigma_x, 3.0 * o.sigma_x),
      ys(-3.0 * o.sigma_y, 3.0 * o.sigma_y + o.v * tmax), ts(0.0, tmax);
  const double h = 1e-4 * o.sigma_y;
  double cont = 0.0, limits = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = xs(rng), y = ys(rng), t = ts(rng) + 1e-3;
    const double dmu = detail::d1([&](double s) { return o.ss_mu(x, y, s); }, t, h / o.v);
    const double flux = detail::d1([&](double s) { return o.ss_vy(s, t) * o.ss_mu(x, s, t); }, y, h);
    cont = std::max(cont, std::abs(dmu + flux));
  }
  for (double Y : {-2.0, 0.0, 1.5}) {
    limits = std::max(limits, std::abs(o.ss_u(Y, 0.0) - (o.e0() + 0.5 * o.delta())));
  }
  // Centre of the displaced packet moves at v; deep in the static packet the field vanishes.
  limits = std::max(limits, std::abs(o.ss_vy(o.v * tmax, tmax) - o.v) / o.v);
  limits = std::max(limits, std::abs(o.ss_vy(-3.0 * o.sigma_y, tmax)) / o.v);
  return {"spin_steering",
          {{"continuity_residual", cont, kOracleTolerance},
           {"velocity_and_energy_limits", limits, kOracleTolerance}}};
}

}  // namespace bohmflux
