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

// Thin RAII layer over FFTW. Plans are created once per shape under a lock
// and executed through the new-array interface, which FFTW guarantees to be
// thread safe. All transforms are unnormalized.

#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

namespace bohmflux::fft {

using Complex = std::complex<double>;

enum class Direction : int { kForward = FFTW_FORWARD, kBackward = FFTW_BACKWARD };

namespace detail {

struct PlanDeleter {
  void operator()(fftw_plan_s* plan) const { fftw_destroy_plan(plan); }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;

inline fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }
inline fftw_complex* as_fftw(const Complex* p) {
  // Out-of-place complex transforms never write to their input.
  return reinterpret_cast<fftw_complex*>(const_cast<Complex*>(p));
}

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  // rank-1 when rows == 0
  fftw_plan get(std::size_t rows, std::size_t cols, Direction dir, bool in_place) {
    const auto key = std::make_tuple(rows, cols, static_cast<int>(dir), in_place);
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second.get();

    const std::size_t total = rows == 0 ? cols : rows * cols;
    std::vector<Complex> a(total), b(total);
    fftw_complex* in = as_fftw(a.data());
    fftw_complex* out = in_place ? in : as_fftw(b.data());
    constexpr unsigned kFlags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan =
        rows == 0 ? fftw_plan_dft_1d(static_cast<int>(cols), in, out, static_cast<int>(dir), kFlags)
                  : fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), in, out,
                                     static_cast<int>(dir), kFlags);
    auto [it, inserted] = plans_.emplace(key, PlanHandle(plan));
    return it->second.get();
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int, bool>, PlanHandle> plans_;
};

}  // namespace detail

/// 2D transform of a row-major rows x cols block. `in` and `out` may alias.
inline void transform_2d(std::size_t rows, std::size_t cols, const Complex* in, Complex* out,
                         Direction dir) {
  const bool in_place = in == out;
  fftw_plan plan = detail::PlanCache::instance().get(rows, cols, dir, in_place);
  fftw_execute_dft(plan, detail::as_fftw(in), detail::as_fftw(out));
}

/// 1D transform of length n. `in` and `out` may alias.
inline void transform_1d(std::size_t n, const Complex* in, Complex* out, Direction dir) {
  const bool in_place = in == out;
  fftw_plan plan = detail::PlanCache::instance().get(0, n, dir, in_place);
  fftw_execute_dft(plan, detail::as_fftw(in), detail::as_fftw(out));
}

}  // namespace bohmflux::fft
