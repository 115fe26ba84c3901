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

// Spectral derivative stack of a wave function snapshot with Hermite
// interpolation at off-grid points and along environment slices.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "bohmflux/error.hpp"
#include "bohmflux/fft.hpp"
#include "bohmflux/grid_state.hpp"

namespace bohmflux {

/// Stored derivatives, named by their (x, y) orders.
enum class Deriv : std::size_t { kPsi, kX, kY, kXY, kXX, kYY, kXXY, kXYY, kYYY };
inline constexpr std::size_t kDerivCount = 9;
inline constexpr std::array<std::array<int, 2>, kDerivCount> kDerivOrders = {
    {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {2, 1}, {1, 2}, {0, 3}}};

/// Amplitude and first derivatives per spin component at one point.
struct PointSample {
  std::size_t spins = 1;
  std::array<Complex, kSpinorComponents> psi{};
  std::array<Complex, kSpinorComponents> dx{};
  std::array<Complex, kSpinorComponents> dy{};

  double density() const {
    double r = 0.0;
    for (std::size_t s = 0; s < spins; ++s) r += std::norm(psi[s]);
    return r;
  }
};

namespace detail {

struct HermiteWeights {
  double v0, v1, d0, d1;  // value and slope weights for the two nodes
};

inline HermiteWeights hermite(double s, double h) {
  const double s2 = s * s, s3 = s2 * s;
  return {2 * s3 - 3 * s2 + 1, -2 * s3 + 3 * s2, h * (s3 - 2 * s2 + s), h * (s3 - s2)};
}

struct CellLocation {
  std::size_t i0, i1;
  double frac;
};

inline CellLocation locate(const Axis& axis, double q, const char* name) {
  if (!axis.contains(q)) {
    throw DomainError(std::string("point outside grid along ") + name + ": " + std::to_string(q));
  }
  const double u = (q + axis.half_width) / axis.spacing();
  auto i = static_cast<std::size_t>(std::floor(u));
  if (i >= axis.points) i = axis.points - 1;
  return {i, (i + 1) % axis.points, u - static_cast<double>(i)};
}

}  // namespace detail

class SpectralField {
 public:
  explicit SpectralField(const JointWaveFunction& psi)
      : grid_(psi.grid()), spins_(psi.spins()), time_(psi.time()), active_(psi.spins(), false),
        data_(psi.spins()) {
    const std::size_t nx = grid_.x.points, ny = grid_.y.points, n = grid_.size();
    const double scale = 1.0 / static_cast<double>(n);
    std::vector<Complex> spectrum(n);
    peak_density_ = density(psi).peak();
    for (std::size_t s = 0; s < spins_; ++s) {
      if (psi.component_is_zero(s)) continue;
      active_[s] = true;
      const auto src = psi.component(s);
      fft::transform_2d(nx, ny, src.data(), spectrum.data(), fft::Direction::kForward);
      auto& stack = data_[s];
      stack.resize(kDerivCount);
      stack[0].assign(src.begin(), src.end());
      for (std::size_t d = 1; d < kDerivCount; ++d) {
        const auto [ox, oy] = kDerivOrders[d];
        auto& out = stack[d];
        out.resize(n);
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const Complex fx = factor(grid_.x, ix, ox);
          for (std::size_t iy = 0; iy < ny; ++iy) {
            out[grid_.index(ix, iy)] = spectrum[grid_.index(ix, iy)] * fx * factor(grid_.y, iy, oy) * scale;
          }
        }
        fft::transform_2d(nx, ny, out.data(), out.data(), fft::Direction::kBackward);
      }
    }
  }

  const Grid& grid() const { return grid_; }
  std::size_t spins() const { return spins_; }
  double time() const { return time_; }
  /// Largest spin-summed density over the grid nodes.
  double peak_density() const { return peak_density_; }
  /// Components that are identically zero carry no stored data.
  bool active(std::size_t s) const { return active_[s]; }

  std::span<const Complex> data(Deriv d, std::size_t s) const {
    return data_[s][static_cast<std::size_t>(d)];
  }
  Complex node(Deriv d, std::size_t s, std::size_t ix, std::size_t iy) const {
    return active_[s] ? data_[s][static_cast<std::size_t>(d)][grid_.index(ix, iy)] : Complex{};
  }

  /// Bicubic Hermite values of Psi, dPsi/dx, dPsi/dy at (x, y).
  PointSample sample(double x, double y) const {
    const auto cx = detail::locate(grid_.x, x, "x");
    const auto cy = detail::locate(grid_.y, y, "y");
    const auto wx = detail::hermite(cx.frac, grid_.x.spacing());
    const auto wy = detail::hermite(cy.frac, grid_.y.spacing());
    PointSample out;
    out.spins = spins_;
    for (std::size_t s = 0; s < spins_; ++s) {
      if (!active_[s]) continue;
      out.psi[s] = bicubic(s, cx, cy, wx, wy, Deriv::kPsi, Deriv::kX, Deriv::kY, Deriv::kXY);
      out.dx[s] = bicubic(s, cx, cy, wx, wy, Deriv::kX, Deriv::kXX, Deriv::kXY, Deriv::kXXY);
      out.dy[s] = bicubic(s, cx, cy, wx, wy, Deriv::kY, Deriv::kXY, Deriv::kYY, Deriv::kXYY);
    }
    return out;
  }

  /// Values of derivative d of component s along the row y = Y for every x
  /// node, by cubic Hermite interpolation in y. Supported: Psi, Y, YY, XY.
  std::vector<Complex> slice(Deriv d, std::size_t s, double Y) const {
    const std::size_t nx = grid_.x.points;
    std::vector<Complex> out(nx);
    if (!active_[s]) return out;
    const auto cy = detail::locate(grid_.y, Y, "y");
    const auto w = detail::hermite(cy.frac, grid_.y.spacing());
    const auto& f = data_[s][static_cast<std::size_t>(d)];
    const auto& fy = data_[s][static_cast<std::size_t>(y_partner(d))];
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t a = grid_.index(ix, cy.i0), b = grid_.index(ix, cy.i1);
      out[ix] = w.v0 * f[a] + w.v1 * f[b] + w.d0 * fy[a] + w.d1 * fy[b];
    }
    return out;
  }

 private:
  static Complex factor(const Axis& axis, std::size_t i, int order) {
    if (order == 0) return 1.0;
    if (order % 2 == 1 && axis.is_nyquist(i)) return 0.0;
    return std::pow(Complex(0.0, axis.wavenumber(i)), order);
  }

  static Deriv y_partner(Deriv d) {
    switch (d) {
      case Deriv::kPsi: return Deriv::kY;
      case Deriv::kY: return Deriv::kYY;
      case Deriv::kYY: return Deriv::kYYY;
      case Deriv::kXY: return Deriv::kXYY;
      default: throw Error("slice interpolation not available for this derivative");
    }
  }

  Complex bicubic(std::size_t s, const detail::CellLocation& cx, const detail::CellLocation& cy,
                  const detail::HermiteWeights& wx, const detail::HermiteWeights& wy, Deriv f,
                  Deriv fx, Deriv fy, Deriv fxy) const {
    const auto& F = data_[s][static_cast<std::size_t>(f)];
    const auto& FX = data_[s][static_cast<std::size_t>(fx)];
    const auto& FY = data_[s][static_cast<std::size_t>(fy)];
    const auto& FXY = data_[s][static_cast<std::size_t>(fxy)];
    const std::array<std::size_t, 2> ix = {cx.i0, cx.i1};
    const std::array<std::size_t, 2> iy = {cy.i0, cy.i1};
    const std::array<double, 2> vx = {wx.v0, wx.v1}, dxw = {wx.d0, wx.d1};
    const std::array<double, 2> vy = {wy.v0, wy.v1}, dyw = {wy.d0, wy.d1};
    Complex acc{};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const std::size_t k = grid_.index(ix[a], iy[b]);
        acc += vx[a] * vy[b] * F[k] + dxw[a] * vy[b] * FX[k] + vx[a] * dyw[b] * FY[k] +
               dxw[a] * dyw[b] * FXY[k];
      }
    }
    return acc;
  }

  Grid grid_;
  std::size_t spins_;
  double time_;
  double peak_density_ = 0.0;
  std::vector<bool> active_;
  std::vector<std::vector<std::vector<Complex>>> data_;  // [spin][deriv][node]
};

/// Amplitude of every spin component at an off-grid point.
inline std::vector<Complex> interpolate(const JointWaveFunction& psi, double x, double y) {
  const SpectralField field(psi);
  const PointSample p = field.sample(x, y);
  return {p.psi.begin(), p.psi.begin() + static_cast<std::ptrdiff_t>(psi.spins())};
}

}  // namespace bohmflux
