/**
 * Copyright 2026 The fedotp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Vector kernels used by the solver and encoder inner loops.
//
// Each kernel has a scalar reference implementation and an AVX2/FMA variant.
// The variant is chosen once at startup from CPUID and can be overridden with
// select() (tests run both and compare). Results differ between variants only
// by floating-point reassociation; within one variant they are deterministic.

#ifndef FEDOTP_KERNELS_HPP_
#define FEDOTP_KERNELS_HPP_

#include <cstddef>
#include <span>

namespace fedotp::kernels {

enum class Isa { kScalar, kAvx2 };

const char* to_string(Isa isa);

struct KernelTable {
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // out[i] = min(num[i] / max(den[i], floor), cap); returns how many
  // denominators were raised to `floor`.
  std::size_t (*capped_ratio)(const double* num, const double* den, double floor,
                              double cap, double* out, std::size_t n);
  // max_i |x[i] - y[i]|
  double (*max_abs_diff)(const double* x, const double* y, std::size_t n);
};

bool supported(Isa isa) noexcept;
const KernelTable& table(Isa isa);

// Currently selected variant.
Isa active_isa() noexcept;
const KernelTable& active() noexcept;

// Throws Error(kUnsupportedIsa) when the CPU lacks the instruction set.
void select(Isa isa);

// Restores the previous selection on destruction.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { select(isa); }
  ~ScopedIsa() { select(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
inline double max_abs_diff(std::span<const double> x, std::span<const double> y) {
  return active().max_abs_diff(x.data(), y.data(), x.size());
}

namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
std::size_t capped_ratio(const double* num, const double* den, double floor, double cap,
                         double* out, std::size_t n);
double max_abs_diff(const double* x, const double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
bool available() noexcept;
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
std::size_t capped_ratio(const double* num, const double* den, double floor, double cap,
                         double* out, std::size_t n);
double max_abs_diff(const double* x, const double* y, std::size_t n);
}  // namespace avx2

}  // namespace fedotp::kernels

#endif  // FEDOTP_KERNELS_HPP_
