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
#include <vector>

#include <gtest/gtest.h>

#include "bohmflux/conditional.hpp"
#include "bohmflux/oracles.hpp"
#include "bohmflux/pipeline.hpp"

namespace bf = bohmflux;
using Q = bf::QuadraticPairOracle;

namespace {

bf::JointWaveFunction quadratic_pair_state(const bf::Grid& g, double t) {
  bf::JointWaveFunction psi(g, 1, t);
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t iy = 0; iy < g.y.points; ++iy) psi(0, ix, iy) = Q::psi(g.x.coordinate(ix), g.y.coordinate(iy), t);
  }
  return psi;
}

}  // namespace

TEST(ConditionalState, ProductStateSliceIsTheSystemFactor) {
  const bf::Grid g(128, 8.0);
  const auto psi = bf::make_gaussian_product(g, 0.9, 1.1, 0.0, bf::SpinPreset::kScalar);
  const auto c = bf::extract_cwf(psi, 0.4);
  const double gy = bf::gaussian_amplitude(0.4, 1.1);
  EXPECT_NEAR(c.weight, gy * gy, 1e-6);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  EXPECT_NEAR(bf::conditional_energy(c, h, 0.0), 1.0 / (8.0 * 0.81), 1e-12);
}

TEST(ConditionalState, EmptySliceIsDegenerate) {
  const bf::Grid g(64, 8.0);
  const auto psi = bf::make_gaussian_product(g, 0.5, 0.5, 0.0, bf::SpinPreset::kScalar);
  EXPECT_THROW(bf::extract_cwf(psi, 7.5), bf::DegenerateSliceError);
}

TEST(SliceMoments, QuadraticPairMatchesClosedForms) {
  const bf::Grid g(256, 12.0);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kQuadraticPair);
  for (double t : {0.0, 0.7, 1.9}) {
    const bf::SpectralField f(quadratic_pair_state(g, t));
    for (double Y : {-1.3, 0.2, 0.95}) {
      const double vy = 0.4 * Y + 0.1;
      const auto m = bf::slice_moments(f, Y, vy, h);
      const auto fl = m.flows();
      EXPECT_NEAR(m.u(), Q::u(t, Y), 1e-6) << t << " " << Y;
      EXPECT_NEAR(fl.du_ext, 0.0, 1e-12);
      EXPECT_NEAR(fl.du_int, Q::du_int(t, Y), 1e-6) << t << " " << Y;
      EXPECT_NEAR(fl.du_ent, Q::du_ent(t, Y, vy), 1e-6) << t << " " << Y;
    }
  }
}

TEST(Ledger, FiniteDifferenceIsExactForQuadratics) {
  std::vector<double> t, f;
  for (int k = 0; k <= 10; ++k) {
    t.push_back(0.1 * k);
    f.push_back(3.0 * t.back() * t.back() - t.back() + 2.0);
  }
  const auto d = bf::finite_difference(t, f);
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_NEAR(d[k], 6.0 * t[k] - 1.0, 1e-12);
}

TEST(Ledger, CumulativeSumsAndClosure) {
  std::vector<double> t, u;
  std::vector<bf::FlowTerms> flows;
  for (int k = 0; k <= 20; ++k) {
    const double tk = 0.05 * k;
    t.push_back(tk);
    u.push_back(1.0 + tk * tk);
    flows.push_back({0.5 * tk, tk, 0.5 * tk});
  }
  const auto L = bf::accumulate_ledger(t, u, flows, 7);
  EXPECT_EQ(L.source, 7);
  EXPECT_TRUE(L.closure_ok);
  EXPECT_NEAR(L.cum_int.back(), 0.5, 1e-12);
  EXPECT_NEAR(L.cum_ext.back() + L.cum_int.back() + L.cum_ent.back(), u.back() - u.front(), 1e-12);
  flows[10].du_ent += 0.01;
  EXPECT_FALSE(bf::accumulate_ledger(t, u, flows).closure_ok);
  t[5] += 0.01;
  EXPECT_THROW(bf::accumulate_ledger(t, u, flows), bf::ConfigError);
}

TEST(Ledger, ProductStateHasNoEntanglementFlow) {
  const bf::Grid g(128, 12.0);
  const auto psi0 = bf::make_gaussian_product(g, 0.8, 1.0, 0.7, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  std::vector<bf::EnsembleInput> in(1);
  in[0].label = "main";
  in[0].samples = {{0.3, -0.5, 0, 0}, {-1.0, 1.2, 0, 1}, {1.1, 0.1, 0, 2}};
  in[0].weights = bf::uniform_weights(3);
  const auto r = bf::run_pipeline(psi0, h, {0.01, 1.0, 5}, in, {.threads = 1, .keep_u_of_y = false});
  double worst = 0.0;
  for (const auto& L : r.ensembles[0].ledgers) {
    ASSERT_EQ(L.size(), r.times.size());
    EXPECT_TRUE(L.closure_ok);
    for (double d : L.du_ent) worst = std::max(worst, std::abs(d));
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(MixedState, ValidationRules) {
  const bf::Grid g(32, 8.0);
  const auto a = bf::make_gaussian_product(g, 1.0, 1.0, 0.0, bf::SpinPreset::kScalar);
  EXPECT_THROW((bf::MixedState{{0.5, 0.4}, {a, a}}.validate()), bf::ConfigError);
  EXPECT_THROW((bf::MixedState{{1.0}, {}}.validate()), bf::ConfigError);
  EXPECT_THROW((bf::MixedState{std::vector<double>(17, 1.0 / 17), std::vector(17, a)}.validate()), bf::ConfigError);
  EXPECT_NO_THROW((bf::MixedState{{0.25, 0.75}, {a, a}}.validate()));
}

TEST(MixedState, SingleComponentIsExactlyThePureState) {
  const bf::Grid g(128, 12.0);
  const auto psi = quadratic_pair_state(g, 1.2);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kQuadraticPair);
  const bf::SpectralField f(psi);
  const bf::MixedField m(bf::MixedState{{1.0}, {psi}});
  for (double Y : {-0.7, 0.0, 1.4}) {
    const auto pure = bf::slice_moments(f, Y, 0.3, h);
    const auto mixed = bf::mixed_slice_moments(m, Y, 0.3, h);
    EXPECT_EQ(pure.weight, mixed.weight);
    EXPECT_EQ(pure.energy, mixed.energy);
    EXPECT_EQ(pure.a_int, mixed.a_int);
    EXPECT_EQ(pure.b_ent, mixed.b_ent);
    EXPECT_EQ(pure.u(), bf::mixed_conditional_energy(m, Y, h));
    const auto v = bf::velocity_field(f, h, 0.4, Y), vm = bf::mixed_velocity_field(m, h, 0.4, Y);
    EXPECT_EQ(v.vx, vm.vx);
    EXPECT_EQ(v.vy, vm.vy);
  }
}

TEST(MixedState, IncoherentMixtureAveragesSliceMoments) {
  const bf::Grid g(128, 10.0);
  const auto a = bf::make_gaussian_product(g, 0.8, 1.0, 0.0, bf::SpinPreset::kScalar);
  const auto b = bf::make_gaussian_product(g, 1.2, 1.0, 0.0, bf::SpinPreset::kScalar);
  const auto h = bf::expand_preset(bf::HamiltonianPreset::kFreeProduct);
  const bf::MixedField m(bf::MixedState{{0.3, 0.7}, {a, b}});
  // Equal y factors: u is the probability-weighted system energy.
  const double expected = 0.3 / (8 * 0.64) + 0.7 / (8 * 1.44);
  EXPECT_NEAR(bf::mixed_conditional_energy(m, 0.25, h), expected, 1e-10);
}
