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

// Shared pieces of the two scaling solvers. Internal to the library.

#ifndef FEDOTP_SRC_OT_SCALING_HPP_
#define FEDOTP_SRC_OT_SCALING_HPP_

#include <cstddef>
#include <vector>

#include "fedotp/common.hpp"

namespace fedotp::ot::detail {

// Gibbs kernel exp(-(C - shift) / lambda) stored column by column, so both
// Q v (axpy over columns) and Q^T u (dot per column) run over contiguous rows.
struct GibbsKernel {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> by_column;

  const double* column(std::size_t j) const { return by_column.data() + j * rows; }
};

// Subtracting a constant from a whole column only rescales v, so the plan is
// unchanged; it keeps every column's largest kernel entry at 1. When
// shift_rows is set each row is shifted first (valid only when row sums are
// equality-constrained).
GibbsKernel make_kernel(const Matrix& cost, double lambda, bool shift_rows);

// out = Q v
void apply(const GibbsKernel& q, const std::vector<double>& v, std::vector<double>& out);
// out = Q^T u
void apply_transpose(const GibbsKernel& q, const std::vector<double>& u,
                     std::vector<double>& out);

Matrix assemble(const GibbsKernel& q, const std::vector<double>& u,
                const std::vector<double>& v);

// Moves a near-feasible plan onto the feasible set with an O(violation)
// change: over-full rows and columns are scaled down, then the column
// deficits are spread over rows in proportion to their slack. When
// sum(alpha) = sum(beta) this lands on both equalities.
void repair(Matrix& plan, const std::vector<double>& alpha, const std::vector<double>& beta);

}  // namespace fedotp::ot::detail

#endif  // FEDOTP_SRC_OT_SCALING_HPP_
