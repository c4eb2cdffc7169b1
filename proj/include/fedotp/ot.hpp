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

// Entropic optimal transport between V feature-map patches (rows) and P
// prompt features (columns).
//
// Two feasible sets are supported:
//   balanced:   T 1 = alpha,  T^T 1 = beta
//   unbalanced: T 1 <= alpha, T^T 1 = beta, with sum(beta) = gamma <= sum(alpha)
// The entropic solutions have the form diag(u) exp(-C / lambda) diag(v).

#ifndef FEDOTP_OT_HPP_
#define FEDOTP_OT_HPP_

#include <cstddef>
#include <vector>

#include "fedotp/common.hpp"

namespace fedotp::ot {

struct TransportProblem {
  Matrix cost;                // V x P, entries finite and >= 0
  std::vector<double> alpha;  // V row capacities, > 0
  std::vector<double> beta;   // P column targets, > 0
  double lambda = 0.1;        // entropic weight, > 0

  std::size_t rows() const noexcept { return cost.rows(); }
  std::size_t cols() const noexcept { return cost.cols(); }
  // Total transported mass, sum(beta).
  double gamma() const;
  double capacity() const;

  // Throws kDimensionMismatch / kInvalidValue / kInfeasibleMarginals.
  void validate() const;
};

// alpha = 1/V everywhere, beta = gamma/P everywhere.
TransportProblem uniform_problem(Matrix cost, double gamma, double lambda);

struct TransportPlan {
  Matrix plan;
  double objective = 0.0;  // <C, T>
  int iterations = 0;
  bool converged = false;
  bool underflow = false;  // some denominator was raised to the floor
};

struct SolverConfig {
  int max_iter = 100;
  double epsilon = 1e-3;  // stop once max_j |v_j^(n) - v_j^(n-1)| < epsilon
  // Legitimate denominators reach ~1e-87 at lambda = 0.01 with costs up to
  // 2, so the floor only guards against exact underflow.
  double denom_floor = 1e-300;

  void validate() const;
  bool operator==(const SolverConfig&) const = default;
};

// Tighter defaults for the balanced solver: its plans must hit both
// marginals, and callers rarely tune it.
SolverConfig sinkhorn_defaults();

TransportPlan solve_sinkhorn(const TransportProblem& problem,
                             const SolverConfig& config = sinkhorn_defaults());

TransportPlan solve_dykstra_unbalanced(const TransportProblem& problem,
                                       const SolverConfig& config = {});

// Exact linear program min <C,T> over the unbalanced set, no entropy term.
// Dense two-phase simplex; limited to V <= 8, P <= 3.
TransportPlan brute_force_ot_oracle(const TransportProblem& problem);

inline constexpr std::size_t kOracleMaxRows = 8;
inline constexpr std::size_t kOracleMaxCols = 3;

// Frobenius inner product <T, C>.
double wasserstein_distance(const TransportPlan& plan, const Matrix& cost);

// <C,T> + lambda <T, log T>, with 0 log 0 = 0.
double entropic_objective(const Matrix& plan, const Matrix& cost, double lambda);

struct MarginalError {
  double column = 0.0;      // max_j |sum_i T_ij - beta_j|
  double row_excess = 0.0;  // max_i max(0, sum_j T_ij - alpha_i)
  double row = 0.0;         // max_i |sum_j T_ij - alpha_i|
  double min_entry = 0.0;
};

MarginalError marginal_error(const Matrix& plan, const TransportProblem& problem);

}  // namespace fedotp::ot

#endif  // FEDOTP_OT_HPP_
