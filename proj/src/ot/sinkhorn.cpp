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

#include <cmath>
#include <limits>
#include <string>

#include "fedotp/kernels.hpp"
#include "fedotp/ot.hpp"
#include "scaling.hpp"

namespace fedotp::ot {

TransportPlan solve_sinkhorn(const TransportProblem& problem, const SolverConfig& config) {
  problem.validate();
  config.validate();
  const double mismatch = std::abs(problem.capacity() - problem.gamma());
  if (mismatch > 1e-9) {
    throw Error(ErrorCode::kInfeasibleMarginals,
                "balanced transport needs sum(alpha) = sum(beta), off by " +
                    std::to_string(mismatch),
                "beta");
  }

  const std::size_t rows = problem.rows();
  const std::size_t cols = problem.cols();
  const auto q = detail::make_kernel(problem.cost, problem.lambda, /*shift_rows=*/true);
  const auto& k = kernels::active();
  constexpr double kNoCap = std::numeric_limits<double>::infinity();

  std::vector<double> u(rows, 1.0);
  std::vector<double> v(cols, 1.0);
  std::vector<double> next_v(cols);
  std::vector<double> qv(rows);
  std::vector<double> qtu(cols);

  TransportPlan out;
  std::size_t floored = 0;
  for (int n = 1; n <= config.max_iter; ++n) {
    detail::apply(q, v, qv);
    floored += k.capped_ratio(problem.alpha.data(), qv.data(), config.denom_floor, kNoCap,
                              u.data(), rows);
    detail::apply_transpose(q, u, qtu);
    floored += k.capped_ratio(problem.beta.data(), qtu.data(), config.denom_floor, kNoCap,
                              next_v.data(), cols);
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
