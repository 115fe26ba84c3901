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

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bohmflux/grid_state.hpp"
#include "bohmflux/parallel.hpp"

namespace bohmflux {

/// Unnormalized conditional wave function phi(x) = Psi(x, Y) on the system
/// axis, one row per spin component.
struct ConditionalState {
  Axis grid_x;
  std::size_t spins = 1;
  std::vector<Complex> amplitudes;  // (spin, ix)
  double weight = 0.0;
  double time = 0.0;
  std::int64_t source = -1;

  ConditionalState() = default;
  ConditionalState(const Axis& axis, std::size_t spin_count, std::vector<Complex> amps,
                   double t = 0.0, std::int64_t src = -1)
      : grid_x(axis), spins(spin_count), amplitudes(std::move(amps)), time(t), source(src) {
    weight = squared_norm(grid_x, amplitudes);
  }

  std::span<Complex> component(std::size_t s) {
    return {amplitudes.data() + s * grid_x.points, grid_x.points};
  }
  std::span<const Complex> component(std::size_t s) const {
    return {amplitudes.data() + s * grid_x.points, grid_x.points};
  }

  static double squared_norm(const Axis& axis, std::span<const Complex> amps) {
    std::vector<double> sq(amps.size());
    for (std::size_t i = 0; i < amps.size(); ++i) sq[i] = std::norm(amps[i]);
    return pairwise_sum(sq) * axis.spacing();
  }
};

/// Quadrature inner product <a|b> over the x axis, summed over spins.
inline Complex inner_product(const Axis& axis, std::span<const Complex> a,
                             std::span<const Complex> b) {
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Complex z = std::conj(a[i]) * b[i];
    re += z.real();
    im += z.imag();
  }
  return Complex(re, im) * axis.spacing();
}

}  // namespace bohmflux
