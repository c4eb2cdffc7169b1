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

// AVX2/FMA variants. Functions carry a target attribute instead of compiling
// the translation unit with -mavx2, so nothing here leaks wider instructions
// into inline code shared with the scalar path.

#include "fedotp/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#define FEDOTP_HAVE_X86 1
#include <immintrin.h>
#else
#define FEDOTP_HAVE_X86 0
#endif

namespace fedotp::kernels::avx2 {

#if FEDOTP_HAVE_X86

#define FEDOTP_AVX2 __attribute__((target("avx2,fma")))

namespace {

FEDOTP_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

FEDOTP_AVX2 inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

}  // namespace

bool available() noexcept {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

FEDOTP_AVX2 double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

FEDOTP_AVX2 void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

FEDOTP_AVX2 double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

FEDOTP_AVX2 std::size_t capped_ratio(const double* num, const double* den, double floor,
                                     double cap, double* out, std::size_t n) {
  const __m256d vfloor = _mm256_set1_pd(floor);
  const __m256d vcap = _mm256_set1_pd(cap);
  std::size_t floored = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_loadu_pd(den + i);
    __m256d low = _mm256_cmp_pd(d, vfloor, _CMP_LT_OQ);
    floored += static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_pd(low)));
    d = _mm256_blendv_pd(d, vfloor, low);
    __m256d r = _mm256_div_pd(_mm256_loadu_pd(num + i), d);
    _mm256_storeu_pd(out + i, _mm256_min_pd(r, vcap));
  }
  for (; i < n; ++i) {
    double d = den[i];
    if (d < floor) {
      d = floor;
      ++floored;
    }
    const double r = num[i] / d;
    out[i] = r < cap ? r : cap;
  }
  return floored;
}

FEDOTP_AVX2 double max_abs_diff(const double* x, const double* y, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    m = _mm256_max_pd(m, _mm256_andnot_pd(sign, d));
  }
  double r = hmax(m);
  for (; i < n; ++i) {
    double d = x[i] - y[i];
    d = d < 0 ? -d : d;
    r = d > r ? d : r;
  }
  return r;
}

#undef FEDOTP_AVX2

#else  // !FEDOTP_HAVE_X86

bool available() noexcept { return false; }
double dot(const double* x, const double* y, std::size_t n) { return scalar::dot(x, y, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { scalar::axpy(a, x, y, n); }
double sum(const double* x, std::size_t n) { return scalar::sum(x, n); }
std::size_t capped_ratio(const double* num, const double* den, double floor, double cap,
                         double* out, std::size_t n) {
  return scalar::capped_ratio(num, den, floor, cap, out, n);
}
double max_abs_diff(const double* x, const double* y, std::size_t n) {
  return scalar::max_abs_diff(x, y, n);
}

#endif

}  // namespace fedotp::kernels::avx2
