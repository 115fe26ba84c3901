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

#include <cmath>
#include <complex>

#include <gtest/gtest.h>

#include "bohmflux/hamiltonian.hpp"

namespace bf = bohmflux;

namespace {

std::complex<double> overlap(const bf::JointWaveFunction& a, const bf::JointWaveFunction& b) {
  std::complex<double> acc{};
  for (std::size_t i = 0; i < a.amplitudes().size(); ++i) acc += std::conj(a.amplitudes()[i]) * b.amplitudes()[i];
  return acc * a.grid().cell_area();
}

}  // namespace

TEST(Presets, NamesRoundTrip) {
  for (auto p : {bf::HamiltonianPreset::kQuadraticPair, bf::HamiltonianPreset::kPPCoupling,
                 bf::HamiltonianPreset::kSpinSteering, bf::HamiltonianPreset::kFreeProduct,
                 bf::HamiltonianPreset::kCustom}) {
    EXPECT_EQ(bf::parse_preset(bf::preset_name(p)), p);
  }
  EXPECT_THROW(bf::parse_preset("harmonic"), bf::ConfigError);
}

TEST(Presets, QuadraticPairSplitsThePotential) {
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kQuadraticPair);
  const double x = 0.8, y = -1.3;
  EXPECT_NEAR(h.v_system(x, y, 0) + h.v_env(x, y, 0) + h.v_int(x, y, 0), (x - y) * (x - y) / 4, 1e-15);
  EXPECT_TRUE(h.has_positional_coupling());
  EXPECT_FALSE(h.has_momentum_coupling());
}

TEST(Presets, PPCouplingEvolvesUnderTheInteractionOnly) {
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kPPCoupling, {.lambda = 3.0});
  EXPECT_DOUBLE_EQ(h.a_xx(), 0.0);
  EXPECT_DOUBLE_EQ(h.a_yy(), 0.0);
  EXPECT_DOUBLE_EQ(h.a_xy(), -3.0);
  EXPECT_TRUE(h.dynamics_potential_is_zero());
}

TEST(Presets, SteeringCarriesTheDrive) {
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kSpinSteering, {.drive_speed = 20.0, .drive_duration = 0.3});
  ASSERT_TRUE(h.spin_drive.has_value());
  EXPECT_TRUE(h.spin_drive->active_at(0.0));
  EXPECT_TRUE(h.spin_drive->active_at(0.3));
  EXPECT_FALSE(h.spin_drive->active_at(0.31));
  EXPECT_DOUBLE_EQ(h.spin_drive->displacement(1.0), 6.0);
  EXPECT_NEAR(h.spin_drive->active_time(0.2, 0.5), 0.1, 1e-15);
}

TEST(HamiltonianSpec, ValidationRejectsInconsistentTerms) {
  bf::HamiltonianSpec h;
  h.mass_x = 0.0;
  EXPECT_THROW(h.validate(), bf::ConfigError);
  h = {};
  h.v_system = bf::Expression::parse("x*y");
  EXPECT_THROW(h.validate(), bf::ConfigError);
  h = {};
  h.v_env = bf::Expression::parse("y*t");
  EXPECT_THROW(h.validate(), bf::ConfigError);
  h = {};
  h.v_int = bf::Expression::parse("x*y");
  h.p_coupling = 1.0;
  EXPECT_THROW(h.validate(), bf::ConfigError);
}

TEST(Operators, SystemEnergyOfTheQuadraticPairGroundPacket) {
  const bf::Grid g(128, 10.0);
  const auto psi = bf::make_gaussian_product(g, std::sqrt(0.5), std::sqrt(0.5), 0.0, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kQuadraticPair);
  EXPECT_NEAR(bf::expectation_system_energy(psi, h, 0.0), 0.375, 1e-12);
  EXPECT_NEAR(bf::expectation_dHS_dt(psi, h, 0.0), 0.0, 1e-15);
}

TEST(Operators, TimeDependentSystemPotentialHasARate) {
  const bf::Grid g(64, 8.0);
  const auto psi = bf::make_gaussian_product(g, 1.0, 1.0, 0.0, bf::SpinPreset::kScalar);
  bf::HamiltonianSpec h;
  h.v_system = bf::Expression::parse("t*x^2");
  EXPECT_NEAR(bf::expectation_dHS_dt(psi, h, 0.4), 1.0, 1e-12);
}

TEST(Operators, GeneratorIsHermitian) {
  const bf::Grid g(64, 8.0);
  const auto a = bf::make_gaussian_product(g, 1.0, 0.8, 1.0, bf::SpinPreset::kScalar);
  auto b = bf::make_gaussian_product(g, 0.7, 1.1, -0.5, bf::SpinPreset::kScalar);
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) b(0, ix, iy) *= std::exp(std::complex<double>(0, 0.3 * g.y.coordinate(iy)));
  }
  for (auto preset : {bf::HamiltonianPreset::kQuadraticPair, bf::HamiltonianPreset::kPPCoupling}) {
    const auto h = bf::expand_preset(preset);
    const auto ha = bf::apply_hamiltonian(a, h, 0.0), hb = bf::apply_hamiltonian(b, h, 0.0);
    EXPECT_NEAR(std::abs(overlap(a, hb) - std::conj(overlap(b, ha))), 0.0, 1e-12);
  }
}

TEST(Operators, MomentumCouplingActsAsMixedDerivative) {
  const bf::Grid g(64, 8.0);
  const auto psi = bf::make_gaussian_product(g, 1.0, 1.0, 0.0, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kPPCoupling, {.lambda = 2.0});
  const auto out = bf::apply_interaction_part(psi, h, 0.0);
  const auto dxy = bf::spectral_derivative(g, psi.component(0), 1, 1);
  // -lambda P_X P_Y = +lambda d_x d_y
  double err = 0.0;
  for (std::size_t i = 0; i < dxy.size(); ++i) err = std::max(err, std::abs(out.amplitudes()[i] - 2.0 * dxy[i]));
  EXPECT_LT(err, 1e-14);
}

TEST(Operators, SpinDriveTranslatesTheUpBranch) {
  const bf::Grid g(64, 8.0);
  const auto psi = bf::make_gaussian_product(g, 1.0, 1.0, 0.0, bf::SpinPreset::kSteering);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kSpinSteering, {.drive_speed = 5.0, .drive_duration = 1.0});
  const auto out = bf::apply_drive_part(psi, h, 0.5);
  const auto dy = bf::spectral_derivative(g, psi.component(0), 0, 1);
  double err = 0.0, down = 0.0;
  for (std::size_t i = 0; i < dy.size(); ++i) {
    err = std::max(err, std::abs(out.component(0)[i] - std::complex<double>(0, -5.0) * dy[i]));
    down = std::max(down, std::abs(out.component(1)[i]));
  }
  EXPECT_LT(err, 1e-13);
  EXPECT_EQ(down, 0.0);
  const auto off = bf::apply_drive_part(psi, h, 1.5);
  for (const auto& z : off.amplitudes()) ASSERT_EQ(z, std::complex<double>{});
}
