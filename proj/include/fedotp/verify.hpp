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

// Self-check suites behind `fedotp verify`: solver against the LP oracle,
// balanced reduction, convergence rate, and prompt gradients against central
// differences.

#ifndef FEDOTP_VERIFY_HPP_
#define FEDOTP_VERIFY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedotp/alignment.hpp"
#include "fedotp/ot.hpp"

namespace fedotp::verify {

// Instance i has V = 2 + i mod 5 rows, two columns, uniform[0, 2] costs,
// uniform marginals and gamma cycling through 0.5, 0.8, 1.0.
ot::TransportProblem oracle_instance(std::uint64_t seed, std::size_t index, double lambda);

struct OracleGap {
  std::size_t instances = 0;
  std::size_t within = 0;       // |<C,T> - LP| <= tolerance * gamma * max(C)
  double worst_ratio = 0.0;     // max |<C,T> - LP| / (gamma * max(C))
  double worst_marginal = 0.0;  // column error or row excess
};

OracleGap oracle_gap(std::size_t instances, std::uint64_t seed, double lambda,
                     const ot::SolverConfig& config, double tolerance = 0.02);

struct Reduction {
  std::size_t instances = 0;
  double worst_diff = 0.0;  // max elementwise |T_unbalanced - T_balanced|
};

// gamma = sum(alpha) = 1, V in [2, 16], uniform[0, 2] costs.
Reduction balanced_reduction(std::size_t instances, std::uint64_t seed, double lambda,
                             const ot::SolverConfig& dykstra);

enum class CostModel {
  kCosine,   // 1 - <g_i, h_j> between random unit vectors
  kUniform,  // i.i.d. uniform[0, 2]
};

struct Convergence {
  std::size_t instances = 0;
  std::size_t converged = 0;
  double mean_iterations = 0.0;
  double rate() const { return instances ? double(converged) / double(instances) : 0.0; }
};

Convergence convergence_rate(std::size_t instances, std::uint64_t seed, std::size_t rows,
                             CostModel model, double gamma, double lambda,
                             const ot::SolverConfig& config, std::size_t feature_dim = 24);

enum class PlanHandling {
  kResolve,  // differences re-solve every plan
  kFrozen,   // differences reuse the plans solved at the base point
};

struct GradientProbe {
  std::size_t coordinates = 0;
  double worst_relative = 0.0;
  double median_relative = 0.0;
  double norm_relative = 0.0;  // ||a - n|| / ||n|| over the probed coordinates
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares grad_prompts with central differences on `coordinates` random
// entries drawn without replacement from both prompt blocks.
GradientProbe probe_gradient(const alignment::Batch& batch, const encoders::PromptPair& prompts,
                             const encoders::FrozenTextEncoder& encoder,
                             const alignment::MatchingMode& mode, const ot::SolverConfig& config,
                             std::size_t coordinates, std::uint64_t seed, PlanHandling handling,
                             double step = 1e-5);

struct SuiteResult {
  std::string name;
  bool passed = false;
  bool gating = true;  // non-gating suites are reported but never fail the run
  std::string detail;
};

std::vector<SuiteResult> run_suites();
bool all_passed(std::span<const SuiteResult> results);

}  // namespace fedotp::verify

#endif  // FEDOTP_VERIFY_HPP_
