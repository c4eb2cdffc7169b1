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

// Unbalanced entropic OT by the scaling form of Dykstra's alternating KL
// projections onto {T 1 <= alpha} and {T^T 1 = beta}:
//
//   u <- min(alpha / (Q v), 1)
//   v <- beta / (Q^T u)
//
// starting from v = 1, where Q = exp(-C / lambda). Dividing Q row-wise by
// alpha (Q_alpha) and column-wise by beta (Q_beta) as in the textbook
// statement is the same as putting alpha and beta in the numerators here.
// The fixed point is the KKT system of the relaxed problem: u_i = 1 exactly
// where row i has slack.

#include <limits>

#include "fedotp/kernels.hpp"
#include "fedotp/ot.hpp"
#include "scaling.hpp"

namespace fedotp::ot {

TransportPlan solve_dykstra_unbalanced(const TransportProblem& problem,
                                       const SolverConfig& config) {
  problem.validate();
  config.validate();

  const std::size_t rows = problem.rows();
  const std::size_t cols = problem.cols();
  const auto q = detail::make_kernel(problem.cost, problem.lambda, /*shift_rows=*/false);
  const auto& k = kernels::active();

  std::vector<double> u(rows, 1.0);
  std::vector<double> v(cols, 1.0);
  std::vector<double> next_v(cols);
  std::vector<double> qv(rows);
  std::vector<double> qtu(cols);

  TransportPlan out;
  std::size_t floored = 0;
  for (int n = 1; n <= config.max_iter; ++n) {
    detail::apply(q, v, qv);
    floored += k.capped_ratio(problem.alpha.data(), qv.data(), config.denom_floor, 1.0,
                              u.data(), rows);
    detail::apply_transpose(q, u, qtu);
    floored += k.capped_ratio(problem.beta.data(), qtu.data(), config.denom_floor,
                              std::numeric_limits<double>::infinity(), next_v.data(), cols);
    const double delta = k.max_abs_diff(next_v.data(), v.data(), cols);
    v.swap(next_v);
    out.iterations = n;
    if (delta < config.epsilon) {
      out.converged = true;
      break;
    }
  }

  out.plan = detail::assemble(q, u, v);
  detail::repair(out.plan, problem.alpha, problem.beta);
  out.underflow = floored > 0;
  out.objective = kernels::dot(out.plan.flat(), problem.cost.flat());
  return out;
}

}  // namespace fedotp::ot
