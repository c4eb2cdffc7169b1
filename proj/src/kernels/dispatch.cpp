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

#include <atomic>

#include "fedotp/common.hpp"
#include "fedotp/kernels.hpp"

namespace fedotp::kernels {

namespace {

constexpr KernelTable kScalarTable{scalar::dot, scalar::axpy, scalar::sum,
                                   scalar::capped_ratio, scalar::max_abs_diff};
constexpr KernelTable kAvx2Table{avx2::dot, avx2::axpy, avx2::sum, avx2::capped_ratio,
                                 avx2::max_abs_diff};

Isa detect() noexcept { return avx2::available() ? Isa::kAvx2 : Isa::kScalar; }

std::atomic<Isa>& selection() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const char* to_string(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
      return avx2::available();
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) {
    throw Error(ErrorCode::kUnsupportedIsa, "instruction set not available on this CPU",
                to_string(isa));
  }
  return isa == Isa::kAvx2 ? kAvx2Table : kScalarTable;
}

Isa active_isa() noexcept { return selection().load(std::memory_order_relaxed); }

const KernelTable& active() noexcept {
  return active_isa() == Isa::kAvx2 ? kAvx2Table : kScalarTable;
}

void select(Isa isa) {
  if (!supported(isa)) {
    throw Error(ErrorCode::kUnsupportedIsa, "instruction set not available on this CPU",
                to_string(isa));
  }
  selection().store(isa, std::memory_order_relaxed);
}

}  // namespace fedotp::kernels
