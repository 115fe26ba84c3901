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
#include <numbers>

#include <gtest/gtest.h>

#include "bohmflux/expression.hpp"

namespace bf = bohmflux;
using Op = bf::Expression::Op;

TEST(Expression, EvaluatesArithmeticWithPrecedence) {
  const auto e = bf::Expression::parse("1 + 2*x^2 - y/4");
  EXPECT_DOUBLE_EQ(e(3.0, 2.0, 0.0), 1.0 + 18.0 - 0.5);
  EXPECT_DOUBLE_EQ(bf::Expression::parse("-x^2")(3.0, 0.0, 0.0), -9.0);
  EXPECT_DOUBLE_EQ(bf::Expression::parse("2^3^2")(0.0, 0.0, 0.0), 512.0);
}

TEST(Expression, SupportsFunctionsAndPi) {
  const auto e = bf::Expression::parse("exp(-t) * sin(pi*x) + cos(y)");
  EXPECT_NEAR(e(0.5, 0.0, 1.0), std::exp(-1.0) + 1.0, 1e-15);
}

TEST(Expression, TracksVariables) {
  const auto e = bf::Expression::parse("x*y + t");
  EXPECT_TRUE(e.depends_on(Op::kX));
  EXPECT_TRUE(e.depends_on(Op::kY));
  EXPECT_TRUE(e.depends_on(Op::kT));
  EXPECT_FALSE(bf::Expression::parse("x^2/4").depends_on(Op::kY));
  EXPECT_TRUE(bf::Expression().is_zero());
  EXPECT_TRUE(bf::Expression::parse("2*pi").is_constant());
}

TEST(Expression, TimeDerivativeIsSymbolic) {
  const auto e = bf::Expression::parse("x^2 * (1 + t^2) + sin(3*t) + exp(x*t)");
  const auto d = e.derivative_t();
  const double x = 0.7, t = 0.9;
  const double expected = x * x * 2 * t + 3 * std::cos(3 * t) + x * std::exp(x * t);
  EXPECT_NEAR(d(x, 0.0, t), expected, 1e-13);
  EXPECT_TRUE(bf::Expression::parse("x^2/4").derivative_t().is_zero());
}

TEST(Expression, PowerWithTimeExponentDifferentiates) {
  const auto d = bf::Expression::parse("x^t").derivative_t();
  EXPECT_NEAR(d(2.0, 0.0, 1.5), std::pow(2.0, 1.5) * std::log(2.0), 1e-13);
}

TEST(Expression, ReportsSyntaxErrors) {
  for (const char* bad : {"", "x +", "(x", "foo(x)", "x y", "1..2", "x^^2"}) {
    EXPECT_THROW(bf::Expression::parse(bad), bf::ConfigError) << bad;
  }
}

TEST(Expression, PrintsReadableForm) {
  const auto e = bf::Expression::parse("x*y/2");
  const auto back = bf::Expression::parse(e.to_string());
  EXPECT_DOUBLE_EQ(back(1.3, -0.4, 0.0), e(1.3, -0.4, 0.0));
}
