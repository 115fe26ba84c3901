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

#include <array>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "bohmflux/propagator.hpp"
#include "bohmflux/trajectories.hpp"

namespace bf = bohmflux;

namespace {

bf::JointWaveFunction ground(const bf::Grid& g, double sigma = std::sqrt(0.5), double k = 0.0) {
  return bf::make_gaussian_product(g, sigma, sigma, k, bf::SpinPreset::kScalar);
}

}  // namespace

TEST(Seeds, DerivedStreamsAreDeterministicAndDistinct) {
  EXPECT_EQ(bf::derive_seed(42, 7), bf::derive_seed(42, 7));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(bf::derive_seed(42, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(bf::derive_seed(42, 0), bf::derive_seed(43, 0));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = bf::uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(BornSampling, ReproducesMoments) {
  const bf::Grid g(128, 8.0);
  const auto samples = bf::sample_born(ground(g, 1.0), 20000, 123);
  double mx = 0.0, my = 0.0, sx = 0.0, sy = 0.0;
  for (const auto& s : samples) {
    mx += s.x0;
    my += s.y0;
    sx += s.x0 * s.x0;
    sy += s.y0 * s.y0;
  }
  const double n = static_cast<double>(samples.size());
  EXPECT_NEAR(mx / n, 0.0, 0.03);
  EXPECT_NEAR(my / n, 0.0, 0.03);
  EXPECT_NEAR(sx / n, 1.0 + g.x.spacing() * g.x.spacing() / 12.0, 0.04);
  EXPECT_NEAR(sy / n, 1.0 + g.y.spacing() * g.y.spacing() / 12.0, 0.04);
}

TEST(BornSampling, SampleStreamsDependOnlyOnSeedAndIndex) {
  const bf::Grid g(64, 8.0);
  const auto a = bf::sample_born(ground(g), 50, 99);
  const auto b = bf::sample_born(ground(g), 200, 99);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x0, b[i].x0);
    EXPECT_EQ(a[i].y0, b[i].y0);
    EXPECT_EQ(a[i].index, i);
  }
  EXPECT_THROW(bf::sample_born(ground(g), 0, 1), bf::ConfigError);
}

TEST(Quadrature, WeightsAreNormalizedBornMasses) {
  const bf::Grid g(128, 8.0);
  const auto q = bf::quadrature_samples(ground(g), 48, 6.0, 6.0);
  double sum = 0.0, var = 0.0;
  for (std::size_t i = 0; i < q.samples.size(); ++i) {
    sum += q.weights[i];
    var += q.weights[i] * q.samples[i].x0 * q.samples[i].x0;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_NEAR(var, 0.5, 1e-6);
  EXPECT_LT(q.samples.size(), 48u * 48u);
  EXPECT_THROW(bf::quadrature_samples(ground(g), 48, 1.0, 1.0), bf::ConfigError);
}

TEST(Velocity, PlaneWavePacketMovesAtItsWavenumber) {
  const bf::Grid g(128, 8.0);
  const bf::SpectralField f(ground(g, 1.0, 1.5));
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  const auto v = bf::velocity_field(f, h, 0.37, -0.81);
  EXPECT_NEAR(v.vx, 1.5, 1e-6);
  EXPECT_NEAR(v.vy, 0.0, 1e-6);
  EXPECT_FALSE(v.capped);
}

TEST(Velocity, MomentumCouplingMixesComponents) {
  const bf::Grid g(128, 8.0);
  auto psi = ground(g, 1.0, 0.0);
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) psi(0, ix, iy) *= std::exp(std::complex<double>(0, 0.5 * g.x.coordinate(ix) + 2.0 * g.y.coordinate(iy)));
  }
  const bf::SpectralField f(psi);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kPPCoupling, {.lambda = 3.0});
  const auto v = bf::velocity_field(f, h, g.x.coordinate(66), g.y.coordinate(65));
  EXPECT_NEAR(v.vx, -3.0 * 2.0, 1e-6);
  EXPECT_NEAR(v.vy, -3.0 * 0.5, 1e-6);
}

TEST(Velocity, NodesAreCapped) {
  const bf::Grid g(64, 8.0);
  const bf::SpectralField f(ground(g, 1.0));
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  const auto v = bf::velocity_field(f, h, 7.9, 7.9, 1.0);
  EXPECT_TRUE(v.capped);
  EXPECT_LE(std::hypot(v.vx, v.vy), 1.0);
}

TEST(Integrator, FreeTrajectoriesScaleWithTheWidth) {
  const bf::Grid g(128, 12.0);
  const double sigma = 1.0;
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  const std::vector<bf::InitialSample> s{{0.5, -1.0, 0, 0}, {-1.5, 0.3, 0, 1}, {2.0, 2.0, 0, 2}};
  auto max_error = [&](std::size_t stride) {
    const auto snaps = bf::evolve(ground(g, sigma), h, {0.01, 1.0, stride});
    const auto set = bf::integrate_ensemble(snaps, s, bf::uniform_weights(3), h, 1);
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t k = 0; k < set.times.size(); ++k) {
        const double t = set.times[k];
        const double scale = std::sqrt(1.0 + t * t / (4.0 * std::pow(sigma, 4)));
        e = std::max({e, std::abs(set.positions[i][k][0] - s[i].x0 * scale),
                      std::abs(set.positions[i][k][1] - s[i].y0 * scale)});
      }
    }
    return e;
  };
  const double fine = max_error(1), coarse = max_error(5);
  EXPECT_LT(fine, 1e-5);
  EXPECT_NEAR(coarse / fine, 25.0, 5.0);
}

TEST(Integrator, ResultsDoNotDependOnTheThreadCount) {
  const bf::Grid g(64, 10.0);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kQuadraticPair);
  const auto snaps = bf::evolve(ground(g), h, {0.01, 0.5, 5});
  const auto samples = bf::sample_born(snaps.front(), 64, 5);
  const auto one = bf::integrate_ensemble(snaps, samples, bf::uniform_weights(64), h, 1);
  const auto four = bf::integrate_ensemble(snaps, samples, bf::uniform_weights(64), h, 4);
  EXPECT_EQ(one.positions, four.positions);
}

TEST(Integrator, AbortsWhenTooManyTrajectoriesLeave) {
  const bf::Grid g(64, 8.0);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  const auto snaps = bf::evolve(ground(g), h, {0.01, 0.1, 5});
  std::vector<bf::InitialSample> s{{0.0, 0.0, 0, 0}, {7.95, 0.0, 0, 1}};
  EXPECT_THROW(bf::integrate_ensemble(snaps, s, bf::uniform_weights(2), h, 1), bf::NumericalAbort);
}

TEST(Equivariance, BornSamplesPassAndDisplacedSamplesFail) {
  const bf::Grid g(128, 8.0);
  const auto psi = ground(g, 1.0);
  const bf::SpectralField f(psi);
  const auto samples = bf::sample_born(psi, 10000, 2026);
  std::vector<std::array<double, 2>> pts, shifted;
  for (const auto& s : samples) {
    pts.push_back({s.x0, s.y0});
    shifted.push_back({s.x0 + 0.3, s.y0});
  }
  const auto w = bf::uniform_weights(pts.size());
  const auto good = bf::equivariance_statistic(pts, w, f, false);
  EXPECT_TRUE(good.passed()) << good.statistic << " vs " << good.budget;
  const auto bad = bf::equivariance_statistic(shifted, w, f, false);
  EXPECT_FALSE(bad.passed()) << bad.statistic << " vs " << bad.budget;
  EXPECT_THROW(bf::equivariance_statistic(std::span(pts).first(100), std::span(w).first(100), f, false),
               bf::ConfigError);
}
