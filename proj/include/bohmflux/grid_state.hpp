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

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bohmflux/error.hpp"
#include "bohmflux/fft.hpp"
#include "bohmflux/parallel.hpp"

namespace bohmflux {

using Complex = std::complex<double>;

/// One periodic axis spanning [-half_width, half_width).
struct Axis {
  std::size_t points = 0;
  double half_width = 0.0;

  double spacing() const { return 2.0 * half_width / static_cast<double>(points); }
  double coordinate(std::size_t i) const {
    return -half_width + spacing() * static_cast<double>(i);
  }
  /// Angular wavenumber of FFT bin i in standard FFT ordering.
  double wavenumber(std::size_t i) const {
    const auto n = static_cast<std::ptrdiff_t>(points);
    auto m = static_cast<std::ptrdiff_t>(i);
    if (m >= n / 2) m -= n;
    return 2.0 * std::numbers::pi / (2.0 * half_width) * static_cast<double>(m);
  }
  bool is_nyquist(std::size_t i) const { return i == points / 2; }
  bool contains(double q) const { return q >= -half_width && q < half_width; }

  void validate(const char* name) const {
    if (points < 16 || !std::has_single_bit(points)) {
      throw ConfigError(std::string("axis ") + name +
                        ": points must be a power of two >= 16, got " + std::to_string(points));
    }
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
      throw ConfigError(std::string("axis ") + name + ": half width must be positive");
    }
  }
  bool operator==(const Axis&) const = default;
};

/// Uniform periodic grid over (x, y); x is the system axis, y the environment.
struct Grid {
  Axis x;
  Axis y;

  Grid() = default;
  Grid(Axis ax, Axis ay) : x(ax), y(ay) { validate(); }
  Grid(std::size_t n, double half_width) : Grid(Axis{n, half_width}, Axis{n, half_width}) {}

  void validate() const {
    x.validate("x");
    y.validate("y");
  }
  std::size_t size() const { return x.points * y.points; }
  double cell_area() const { return x.spacing() * y.spacing(); }
  std::size_t index(std::size_t ix, std::size_t iy) const { return ix * y.points + iy; }
  bool operator==(const Grid&) const = default;
};

/// Spin layout. Four-component states use the ordering
/// {up_Y up_X, down_Y down_X, up_Y down_X, down_Y up_X}.
inline constexpr std::size_t kSpinorComponents = 4;
inline constexpr bool is_environment_spin_up(std::size_t s) { return s == 0 || s == 2; }

/// Joint amplitudes Psi_s(x, y) stored as (spin, ix, iy), row-major.
class JointWaveFunction {
 public:
  JointWaveFunction() = default;
  JointWaveFunction(const Grid& grid, std::size_t spins, double time = 0.0)
      : grid_(grid), spins_(spins), time_(time), amplitudes_(spins * grid.size()) {
    grid_.validate();
    if (spins != 1 && spins != kSpinorComponents) {
      throw ConfigError("spin components must be 1 or 4, got " + std::to_string(spins));
    }
  }

  const Grid& grid() const { return grid_; }
  std::size_t spins() const { return spins_; }
  double time() const { return time_; }
  void set_time(double t) { time_ = t; }

  std::span<Complex> component(std::size_t s) {
    return {amplitudes_.data() + s * grid_.size(), grid_.size()};
  }
  std::span<const Complex> component(std::size_t s) const {
    return {amplitudes_.data() + s * grid_.size(), grid_.size()};
  }
  Complex& operator()(std::size_t s, std::size_t ix, std::size_t iy) {
    return amplitudes_[s * grid_.size() + grid_.index(ix, iy)];
  }
  const Complex& operator()(std::size_t s, std::size_t ix, std::size_t iy) const {
    return amplitudes_[s * grid_.size() + grid_.index(ix, iy)];
  }
  std::vector<Complex>& amplitudes() { return amplitudes_; }
  const std::vector<Complex>& amplitudes() const { return amplitudes_; }

  /// True when every amplitude of component s is exactly zero.
  bool component_is_zero(std::size_t s) const {
    const auto c = component(s);
    return std::all_of(c.begin(), c.end(), [](const Complex& z) { return z == Complex{}; });
  }

  double norm_squared() const {
    std::vector<double> partial(spins_ * grid_.x.points);
    for (std::size_t s = 0; s < spins_; ++s) {
      for (std::size_t ix = 0; ix < grid_.x.points; ++ix) {
        double acc = 0.0;
        for (std::size_t iy = 0; iy < grid_.y.points; ++iy) acc += std::norm((*this)(s, ix, iy));
        partial[s * grid_.x.points + ix] = acc;
      }
    }
    return pairwise_sum(partial) * grid_.cell_area();
  }

  void normalize() {
    const double n2 = norm_squared();
    if (!(n2 > 0.0)) throw NumericalAbort("cannot normalize a zero wave function");
    const double scale = 1.0 / std::sqrt(n2);
    for (auto& a : amplitudes_) a *= scale;
  }

 private:
  Grid grid_;
  std::size_t spins_ = 1;
  double time_ = 0.0;
  std::vector<Complex> amplitudes_;
};

/// Spin-summed probability density on the grid.
struct Density {
  Grid grid;
  std::vector<double> values;

  double at(std::size_t ix, std::size_t iy) const { return values[grid.index(ix, iy)]; }
  double integral() const { return pairwise_sum(values) * grid.cell_area(); }
  double peak() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
};

inline Density density(const JointWaveFunction& psi) {
  Density d{psi.grid(), std::vector<double>(psi.grid().size(), 0.0)};
  for (std::size_t s = 0; s < psi.spins(); ++s) {
    const auto c = psi.component(s);
    for (std::size_t i = 0; i < c.size(); ++i) d.values[i] += std::norm(c[i]);
  }
  return d;
}

enum class SpinPreset { kScalar, kSteering };

/// Normalized 1D Gaussian amplitude with density standard deviation sigma.
inline double gaussian_amplitude(double q, double sigma) {
  return std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25) *
         std::exp(-q * q / (4.0 * sigma * sigma));
}

/// Product of Gaussians f(x) g(y) with density widths sigma_x, sigma_y.
/// Scalar: f(x) g(y) e^{ikx}. Steering: (up-up f g e^{ikx} + down-down f g)/sqrt(2).
inline JointWaveFunction make_gaussian_product(const Grid& grid, double sigma_x, double sigma_y,
                                               double k, SpinPreset preset) {
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) throw ConfigError("Gaussian widths must be positive");
  grid.validate();
  if (grid.x.half_width < 6.0 * sigma_x || grid.y.half_width < 6.0 * sigma_y) {
    throw ConfigError("grid extent must be at least 6 widths on each axis");
  }
  const std::size_t spins = preset == SpinPreset::kScalar ? 1 : kSpinorComponents;
  JointWaveFunction psi(grid, spins);
  const double branch = preset == SpinPreset::kScalar ? 1.0 : std::sqrt(0.5);
  for (std::size_t ix = 0; ix < grid.x.points; ++ix) {
    const double x = grid.x.coordinate(ix);
    const double fx = gaussian_amplitude(x, sigma_x);
    const Complex boosted = fx * std::exp(Complex(0.0, k * x));
    for (std::size_t iy = 0; iy < grid.y.points; ++iy) {
      const double gy = gaussian_amplitude(grid.y.coordinate(iy), sigma_y);
      psi(0, ix, iy) = branch * boosted * gy;
      if (spins == kSpinorComponents) psi(1, ix, iy) = branch * fx * gy;
    }
  }
  psi.normalize();
  return psi;
}

/// Spectral derivative of one grid component: d^ox/dx^ox d^oy/dy^oy.
/// The Nyquist bin is dropped for odd derivative orders along an axis.
inline std::vector<Complex> spectral_derivative(const Grid& grid, std::span<const Complex> data,
                                                int order_x, int order_y) {
  const std::size_t nx = grid.x.points, ny = grid.y.points;
  std::vector<Complex> buf(data.begin(), data.end());
  fft::transform_2d(nx, ny, buf.data(), buf.data(), fft::Direction::kForward);
  const double scale = 1.0 / static_cast<double>(nx * ny);
  std::vector<Complex> fy(ny);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    fy[iy] = (order_y % 2 == 1 && grid.y.is_nyquist(iy))
                 ? Complex{}
                 : std::pow(Complex(0.0, grid.y.wavenumber(iy)), order_y);
  }
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const Complex fx = (order_x % 2 == 1 && grid.x.is_nyquist(ix))
                           ? Complex{}
                           : std::pow(Complex(0.0, grid.x.wavenumber(ix)), order_x);
    for (std::size_t iy = 0; iy < ny; ++iy) buf[grid.index(ix, iy)] *= fx * fy[iy] * scale;
  }
  fft::transform_2d(nx, ny, buf.data(), buf.data(), fft::Direction::kBackward);
  return buf;
}

enum class AxisId { kX, kY };

/// First derivative of every spin component along one axis.
inline JointWaveFunction spectral_gradient(const JointWaveFunction& psi, AxisId axis) {
  JointWaveFunction out(psi.grid(), psi.spins(), psi.time());
  for (std::size_t s = 0; s < psi.spins(); ++s) {
    const auto d = spectral_derivative(psi.grid(), psi.component(s), axis == AxisId::kX ? 1 : 0,
                                       axis == AxisId::kY ? 1 : 0);
    std::copy(d.begin(), d.end(), out.component(s).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Snapshot serialization

inline constexpr char kSnapshotMagic[4] = {'B', 'F', 'X', 'S'};
inline constexpr std::uint32_t kSnapshotVersion = 1;
inline constexpr std::uint32_t kEndianTag = 0x01020304;

namespace detail {
template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("truncated snapshot header");
  return v;
}
}  // namespace detail

inline nlohmann::json snapshot_metadata(const JointWaveFunction& psi) {
  return {{"format", "bohmflux-snapshot"},
          {"version", kSnapshotVersion},
          {"endianness", std::endian::native == std::endian::little ? "little" : "big"},
          {"points", {psi.grid().x.points, psi.grid().y.points}},
          {"half_width", {psi.grid().x.half_width, psi.grid().y.half_width}},
          {"spins", psi.spins()},
          {"time", psi.time()},
          {"layout", "spin,x,y row-major complex128"}};
}

/// Writes `path` (binary) and `path` + ".json" (sidecar metadata).
inline void write_snapshot(const JointWaveFunction& psi, const std::filesystem::path& path) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open snapshot for writing: " + path.string());
    os.write(kSnapshotMagic, 4);
    detail::write_pod(os, kSnapshotVersion);
    detail::write_pod(os, kEndianTag);
    detail::write_pod<std::uint64_t>(os, psi.grid().x.points);
    detail::write_pod<std::uint64_t>(os, psi.grid().y.points);
    detail::write_pod(os, psi.grid().x.half_width);
    detail::write_pod(os, psi.grid().y.half_width);
    detail::write_pod<std::uint64_t>(os, psi.spins());
    detail::write_pod(os, psi.time());
    os.write(reinterpret_cast<const char*>(psi.amplitudes().data()),
             static_cast<std::streamsize>(psi.amplitudes().size() * sizeof(Complex)));
    if (!os) throw Error("failed writing snapshot: " + path.string());
  }
  std::ofstream side(path.string() + ".json");
  side << snapshot_metadata(psi).dump(2) << '\n';
}

inline JointWaveFunction read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open snapshot: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || !std::equal(magic, magic + 4, kSnapshotMagic)) throw Error("not a snapshot file");
  if (detail::read_pod<std::uint32_t>(is) != kSnapshotVersion) throw Error("unsupported snapshot version");
  if (detail::read_pod<std::uint32_t>(is) != kEndianTag) throw Error("snapshot endianness mismatch");
  const auto nx = detail::read_pod<std::uint64_t>(is);
  const auto ny = detail::read_pod<std::uint64_t>(is);
  const auto lx = detail::read_pod<double>(is);
  const auto ly = detail::read_pod<double>(is);
  const auto spins = detail::read_pod<std::uint64_t>(is);
  const auto time = detail::read_pod<double>(is);
  JointWaveFunction psi(Grid(Axis{nx, lx}, Axis{ny, ly}), spins, time);
  is.read(reinterpret_cast<char*>(psi.amplitudes().data()),
          static_cast<std::streamsize>(psi.amplitudes().size() * sizeof(Complex)));
  if (!is) throw Error("truncated snapshot payload");
  return psi;
}

}  // namespace bohmflux
