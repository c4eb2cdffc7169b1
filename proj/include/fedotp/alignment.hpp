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

// Prompt-to-patch matching, class probabilities, loss and prompt gradients.
//
// For class k the cost between patch v and prompt column j (0 = global,
// 1 = local) is C_vj = 1 - <G_m[v], h_{k,j}>. The class distance d_k comes
// from the matching variant and q(y = k | x) = softmax_k((1 - d_k) / tau).

#ifndef FEDOTP_ALIGNMENT_HPP_
#define FEDOTP_ALIGNMENT_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedotp/common.hpp"
#include "fedotp/encoders.hpp"
#include "fedotp/ot.hpp"

namespace fedotp::alignment {

enum class MatchingVariant {
  kSimilarityAvg,  // mean of the 2V cost entries
  kClassicalOt,    // balanced plan, beta = (1/2, 1/2)
  kUnbalancedOt,   // relaxed rows, beta = (gamma/2, gamma/2)
  kClassToken,     // 1 - <G_c, h_k> on one prompt slot, no patches
};

enum class PromptSlot { kGlobal, kLocal };

// What an OT variant reports as d_k for a solved plan.
enum class DistanceKind {
  kTransportCost,  // <C, T*>
  kEntropic,       // <C, T*> + lambda <T*, log T*>
};

const char* to_string(MatchingVariant variant);
const char* to_string(PromptSlot slot);
const char* to_string(DistanceKind kind);
MatchingVariant parse_variant(const std::string& name);
PromptSlot parse_slot(const std::string& name);
DistanceKind parse_distance_kind(const std::string& name);

struct MatchingMode {
  MatchingVariant variant = MatchingVariant::kUnbalancedOt;
  double gamma = 0.8;
  double lambda = 0.1;
  double tau = 0.07;
  PromptSlot token_slot = PromptSlot::kGlobal;
  DistanceKind distance = DistanceKind::kTransportCost;

  bool is_ot() const noexcept {
    return variant == MatchingVariant::kClassicalOt || variant == MatchingVariant::kUnbalancedOt;
  }
  void validate() const;
  bool operator==(const MatchingMode&) const = default;
};

// V x 2, entries clamped to [0, 2].
Matrix cost_matrix(const encoders::FeatureMap& features, std::span<const double> h_global,
                   std::span<const double> h_local);

struct Distance {
  double value = 0.0;
  std::optional<ot::TransportPlan> plan;
};

// Not defined for kClassToken, which never builds a cost matrix.
Distance class_distance(const Matrix& cost, const MatchingMode& mode,
                        const ot::SolverConfig& config);

// The transport problem an OT variant solves for `cost`.
ot::TransportProblem matching_problem(const Matrix& cost, const MatchingMode& mode);

// Softmax of (1 - d) / tau with max subtraction.
std::vector<double> predict_proba(std::span<const double> distances, double tau);

double ce_loss(std::span<const double> probabilities, std::size_t label);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct SolverStats {
  std::size_t solves = 0;
  std::size_t iterations = 0;
  std::size_t nonconverged = 0;
  std::size_t underflow = 0;

  void record(const ot::TransportPlan& plan);
  void merge(const SolverStats& other);
  double mean_iterations() const;
};

// Text features of every class under both prompt blocks.
struct PromptFeatures {
  encoders::TextForward global;
  encoders::TextForward local;
};

PromptFeatures encode_prompts(const encoders::FrozenTextEncoder& encoder,
                              const encoders::PromptPair& prompts);

struct ClassScore {
  std::vector<double> distances;
  std::vector<ot::TransportPlan> plans;  // empty for non-OT variants
  std::vector<double> probabilities;
};

ClassScore score(const encoders::FeatureMap& features, const PromptFeatures& text,
                 const MatchingMode& mode, const ot::SolverConfig& config,
                 SolverStats* stats = nullptr, bool keep_plans = false);

struct Example {
  encoders::FeatureMap features;
  std::size_t label = 0;
};

using Batch = std::vector<const Example*>;

Batch batch_of(std::span<const Example> examples);

// Mean cross-entropy over the batch.
double batch_loss(const Batch& batch, const encoders::PromptPair& prompts,
                  const encoders::FrozenTextEncoder& encoder, const MatchingMode& mode,
                  const ot::SolverConfig& config, SolverStats* stats = nullptr);

struct PromptGradient {
  Matrix global;  // dL/dP_g
  Matrix local;   // dL/dP_l
  double loss = 0.0;
  SolverStats stats;
};

// Gradient of the mean loss with every transport plan held fixed.
PromptGradient grad_prompts(const Batch& batch, const encoders::PromptPair& prompts,
                            const encoders::FrozenTextEncoder& encoder,
                            const MatchingMode& mode, const ot::SolverConfig& config);

}  // namespace fedotp::alignment

#endif  // FEDOTP_ALIGNMENT_HPP_
