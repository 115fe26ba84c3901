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

#include "bohmflux/oracles.hpp"
#include "bohmflux/propagator.hpp"

namespace bf = bohmflux;

namespace {

double width_y(const bf::JointWaveFunction& psi) {
  const auto rho = bf::density(psi);
  const auto& g = psi.grid();
  double m = 0.0, s = 0.0;
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) {
      m += rho.at(ix, iy) * g.y.coordinate(iy);
      s += rho.at(ix, iy) * g.y.coordinate(iy) * g.y.coordinate(iy);
    }
  }
  m *= g.cell_area();
  s *= g.cell_area();
  return std::sqrt(s - m * m);
}

double mean_y(const bf::JointWaveFunction& psi, std::size_t s) {
  const auto& g = psi.grid();
  double w = 0.0, m = 0.0;
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) {
      w += std::norm(psi(s, ix, iy));
      m += std::norm(psi(s, ix, iy)) * g.y.coordinate(iy);
    }
  }
  return m / w;
}

}  // namespace

TEST(PropagationPlan, Validation) {
  EXPECT_THROW((bf::PropagationPlan{0.0, 1.0, 1}.validate()), bf::ConfigError);
  EXPECT_THROW((bf::PropagationPlan{0.3, 1.0, 1}.validate()), bf::ConfigError);
  EXPECT_THROW((bf::PropagationPlan{0.1, 1.0, 3}.validate()), bf::ConfigError);
  const bf::PropagationPlan p{0.01, 1.0, 10};
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.steps(), 100u);
  EXPECT_EQ(p.snapshot_count(), 11u);
  EXPECT_DOUBLE_EQ(p.snapshot_time(3), 0.3);
}

TEST(Propagator, FreePacketSpreadsAnalytically) {
  const bf::Grid g(128, 16.0);
  const double sigma = 1.0;
  const auto psi0 = bf::make_gaussian_product(g, sigma, sigma, 0.0, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  const auto snaps = bf::evolve(psi0, h, {0.05, 2.0, 20});
  for (const auto& psi : snaps) {
    const double t = psi.time();
    EXPECT_NEAR(width_y(psi), sigma * std::sqrt(1.0 + t * t / (4.0 * std::pow(sigma, 4))), 1e-10);
  }
}

TEST(Propagator, ExactPathMatchesSplitSteps) {
  const bf::Grid g(64, 10.0);
  const auto psi0 = bf::make_gaussian_product(g, 1.0, 1.0, 0.5, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kPPCoupling, {.lambda = 2.0});
  const auto fast = bf::evolve(psi0, h, {0.01, 0.5, 50}).back();
  bf::Propagator prop(g, h, 0.01);
  ASSERT_TRUE(prop.potential_free());
  auto psi = psi0;
  for (int n = 0; n < 50; ++n) prop.step(psi, n * 0.01);
  double err = 0.0;
  for (std::size_t i = 0; i < psi.amplitudes().size(); ++i) err = std::max(err, std::abs(psi.amplitudes()[i] - fast.amplitudes()[i]));
  EXPECT_LT(err, 1e-12);
}

TEST(Propagator, QuadraticPairFollowsClosedForm) {
  const bf::Grid g(128, 12.0);
  const auto psi0 = bf::make_gaussian_product(g, std::sqrt(0.5), std::sqrt(0.5), 0.0, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kQuadraticPair);
  const auto stats = bf::evolve(psi0, h, {1e-3, 0.5, 500}, [&](const bf::JointWaveFunction& psi) {
    std::complex<double> ov{};
    for (std::size_t ix = 0; ix < g.x.points; ++ix) {
      for (std::size_t iy = 0; iy < g.y.points; ++iy) {
        ov += std::conj(bf::QuadraticPairOracle::psi(g.x.coordinate(ix), g.y.coordinate(iy), psi.time())) * psi(0, ix, iy);
      }
    }
    EXPECT_GT(std::norm(ov * g.cell_area()), 1.0 - 1e-8) << "t=" << psi.time();
  });
  EXPECT_LT(stats.max_norm_drift, 1e-12);
  EXPECT_EQ(stats.snapshots, 2u);
}

TEST(Propagator, PPCouplingDensityMatchesClosedForm) {
  const bf::Grid g(128, 12.0);
  const auto psi0 = bf::make_gaussian_product(g, std::sqrt(0.5), std::sqrt(0.5), 0.0, bf::SpinPreset::kScalar);
  const bf::PPCouplingOracle o{5.0};
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kPPCoupling, {.lambda = o.lambda});
  const auto psi = bf::evolve(psi0, h, {1e-3, 0.2, 200}).back();
  double l1 = 0.0;
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) {
      l1 += std::abs(std::norm(psi(0, ix, iy)) - o.density(g.x.coordinate(ix), g.y.coordinate(iy), 0.2));
    }
  }
  EXPECT_LT(l1 * g.cell_area(), 1e-10);
}

TEST(Propagator, SpinDriveDisplacesOnlyTheUpBranch) {
  const bf::Grid g(bf::Axis{64, 8.0}, bf::Axis{128, 16.0});
  const auto psi0 = bf::make_gaussian_product(g, 1.0, 1.0, 2.0, bf::SpinPreset::kSteering);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kSpinSteering, {.drive_speed = 20.0, .drive_duration = 0.3});
  const auto snaps = bf::evolve(psi0, h, {1e-3, 0.4, 100});
  for (const auto& psi : snaps) {
    EXPECT_NEAR(mean_y(psi, 0), h.spin_drive->displacement(psi.time()), 1e-9) << psi.time();
    EXPECT_NEAR(mean_y(psi, 1), 0.0, 1e-9);
  }
  const auto shifted = bf::apply_spin_drive(psi0, 20.0, 0.3);
  EXPECT_NEAR(mean_y(shifted, 0), 6.0, 1e-9);
  EXPECT_THROW(bf::apply_spin_drive(psi0, 20.0, 0.6), bf::ConfigError);
}

TEST(Propagator, HorizonCheckRejectsEscapingPackets) {
  const bf::Grid g(64, 8.0);
  const auto psi0 = bf::make_gaussian_product(g, 1.0, 1.0, 0.0, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  EXPECT_NO_THROW(bf::validate_horizon(psi0, h, {0.1, 1.0, 1}));
  EXPECT_THROW(bf::validate_horizon(psi0, h, {0.1, 10.0, 1}), bf::ConfigError);
}

TEST(Propagator, StrangSplittingIsSecondOrder) {
  const bf::Grid g(64, 10.0);
  const auto psi0 = bf::make_gaussian_product(g, std::sqrt(0.5), std::sqrt(0.5), 0.0, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kQuadraticPair);
  auto error = [&](double dt) {
    const auto psi = bf::evolve(psi0, h, {dt, 1.0, static_cast<std::size_t>(std::llround(1.0 / dt))}).back();
    double e = 0.0;
    for (std::size_t ix = 0; ix < g.x.points; ++ix) {
      for (std::size_t iy = 0; iy < g.y.points; ++iy) {
        e += std::norm(psi(0, ix, iy) - bf::QuadraticPairOracle::psi(g.x.coordinate(ix), g.y.coordinate(iy), 1.0));
      }
    }
    return std::sqrt(e * g.cell_area());
  };
  const double e1 = error(0.1), e2 = error(0.05);
  EXPECT_NEAR(e1 / e2, 4.0, 0.6);
}
