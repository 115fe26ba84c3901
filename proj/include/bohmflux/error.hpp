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

#include <stdexcept>
#include <string>

namespace bohmflux {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid grid, Hamiltonian, plan or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The numerics left their validity envelope (norm drift, too many
/// trajectories leaving the box). Runs abort with diagnostics.
class NumericalAbort : public Error {
 public:
  using Error::Error;
};

/// A query point lies outside the periodic grid box.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The conditional slice at the requested environment position carries
/// (numerically) no weight.
class DegenerateSliceError : public Error {
 public:
  using Error::Error;
};

}  // namespace bohmflux
