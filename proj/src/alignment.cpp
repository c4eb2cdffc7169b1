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

#include "fedotp/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedotp/kernels.hpp"

namespace fedotp::alignment {
namespace {

bool positive_finite(double x) { return x > 0.0 && std::isfinite(x); }

void check_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw Error(ErrorCode::kLabelOutOfRange,
                "label " + std::to_string(label) + " with " + std::to_string(classes) + " classes");
  }
}

}  // namespace

const char* to_string(MatchingVariant variant) {
  switch (variant) {
    case MatchingVariant::kSimilarityAvg: return "similarity_avg";
    case MatchingVariant::kClassicalOt: return "classical_ot";
    case MatchingVariant::kUnbalancedOt: return "unbalanced_ot";
    case MatchingVariant::kClassToken: return "class_token";
  }
  return "unknown";
}

const char* to_string(PromptSlot slot) {
  return slot == PromptSlot::kGlobal ? "global" : "local";
}

const char* to_string(DistanceKind kind) {
  return kind == DistanceKind::kTransportCost ? "transport_cost" : "entropic";
}

MatchingVariant parse_variant(const std::string& name) {
  for (auto v : {MatchingVariant::kSimilarityAvg, MatchingVariant::kClassicalOt,
                 MatchingVariant::kUnbalancedOt, MatchingVariant::kClassToken}) {
    if (name == to_string(v)) return v;
  }
  throw Error(ErrorCode::kInvalidValue, "unknown matching variant '" + name + "'", "variant");
}

PromptSlot parse_slot(const std::string& name) {
  if (name == "global") return PromptSlot::kGlobal;
  if (name == "local") return PromptSlot::kLocal;
  throw Error(ErrorCode::kInvalidValue, "unknown prompt slot '" + name + "'", "token_slot");
}

DistanceKind parse_distance_kind(const std::string& name) {
  if (name == "transport_cost") return DistanceKind::kTransportCost;
  if (name == "entropic") return DistanceKind::kEntropic;
  throw Error(ErrorCode::kInvalidValue, "unknown distance kind '" + name + "'", "distance");
}

void MatchingMode::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidValue, "gamma must lie in (0, 1]", "gamma");
  }
  if (!positive_finite(lambda)) throw Error(ErrorCode::kInvalidValue, "lambda must be > 0", "lambda");
  if (!positive_finite(tau)) throw Error(ErrorCode::kInvalidValue, "tau must be > 0", "tau");
}

Matrix cost_matrix(const encoders::FeatureMap& features, std::span<const double> h_global,
                   std::span<const double> h_local) {
  const std::size_t d = features.dim();
  if (h_global.size() != d || h_local.size() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "text feature width differs from patch width");
  }
  Matrix cost(features.size(), 2);
  for (std::size_t v = 0; v < features.size(); ++v) {
    const auto g = features.patches.row(v);
    cost(v, 0) = std::clamp(1.0 - kernels::dot(g, h_global), 0.0, 2.0);
    cost(v, 1) = std::clamp(1.0 - kernels::dot(g, h_local), 0.0, 2.0);
  }
  return cost;
}

ot::TransportProblem matching_problem(const Matrix& cost, const MatchingMode& mode) {
  const double mass = mode.variant == MatchingVariant::kUnbalancedOt ? mode.gamma : 1.0;
  ot::TransportProblem problem = ot::uniform_problem(cost, mass, mode.lambda);
  return problem;
}

Distance class_distance(const Matrix& cost, const MatchingMode& mode,
                        const ot::SolverConfig& config) {
  switch (mode.variant) {
    case MatchingVariant::kSimilarityAvg:
      if (cost.empty()) throw Error(ErrorCode::kDimensionMismatch, "empty cost matrix");
      return {cost.sum() / static_cast<double>(cost.size()), std::nullopt};
    case MatchingVariant::kClassicalOt:
    case MatchingVariant::kUnbalancedOt: {
      const ot::TransportProblem problem = matching_problem(cost, mode);
      ot::TransportPlan plan = mode.variant == MatchingVariant::kClassicalOt
                                   ? ot::solve_sinkhorn(problem, config)
                                   : ot::solve_dykstra_unbalanced(problem, config);
      const double value = mode.distance == DistanceKind::kTransportCost
                               ? plan.objective
                               : ot::entropic_objective(plan.plan, cost, mode.lambda);
      return {value, std::move(plan)};
    }
    case MatchingVariant::kClassToken:
      break;
  }
  throw Error(ErrorCode::kInvalidValue, "class-token matching has no cost matrix", "variant");
}

std::vector<double> predict_proba(std::span<const double> distances, double tau) {
  if (!positive_finite(tau)) throw Error(ErrorCode::kInvalidValue, "tau must be > 0", "tau");
  std::vector<double> p(distances.size());
  if (p.empty()) return p;
  // Largest logit is the smallest distance.
  const double dmin = *std::min_element(distances.begin(), distances.end());
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp((dmin - distances[k]) / tau);
    total += p[k];
  }
  for (double& x : p) x /= total;
  return p;
}

double ce_loss(std::span<const double> probabilities, std::size_t label) {
  check_label(label, probabilities.size());
  const double p = probabilities[label];
  return p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity();
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

void SolverStats::record(const ot::TransportPlan& plan) {
  ++solves;
  iterations += static_cast<std::size_t>(plan.iterations);
  if (!plan.converged) ++nonconverged;
  if (plan.underflow) ++underflow;
}

void SolverStats::merge(const SolverStats& other) {
  solves += other.solves;
  iterations += other.iterations;
  nonconverged += other.nonconverged;
  underflow += other.underflow;
}

double SolverStats::mean_iterations() const {
  return solves ? static_cast<double>(iterations) / static_cast<double>(solves) : 0.0;
}

PromptFeatures encode_prompts(const encoders::FrozenTextEncoder& encoder,
                              const encoders::PromptPair& prompts) {
  return {encoders::encode_text_all(encoder, prompts.global_prompt),
          encoders::encode_text_all(encoder, prompts.local_prompt)};
}

ClassScore score(const encoders::FeatureMap& features, const PromptFeatures& text,
                 const MatchingMode& mode, const ot::SolverConfig& config, SolverStats* stats,
                 bool keep_plans) {
  const std::size_t K = text.global.features.rows();
  if (features.dim() != text.global.features.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "text feature width differs from patch width");
  }
  ClassScore out;
  out.distances.resize(K);
  if (keep_plans && mode.is_ot()) out.plans.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (mode.variant == MatchingVariant::kClassToken) {
      const auto& block = mode.token_slot == PromptSlot::kGlobal ? text.global : text.local;
      out.distances[k] = 1.0 - kernels::dot(features.class_token, block.features.row(k));
      continue;
    }
    const Matrix cost =
        cost_matrix(features, text.global.features.row(k), text.local.features.row(k));
    Distance d = class_distance(cost, mode, config);
    out.distances[k] = d.value;
    if (d.plan) {
      if (stats) stats->record(*d.plan);
      if (keep_plans) out.plans.push_back(std::move(*d.plan));
    }
  }
  out.probabilities = predict_proba(out.distances, mode.tau);
  return out;
}

Batch batch_of(std::span<const Example> examples) {
  Batch batch;
  batch.reserve(examples.size());
  for (const Example& e : examples) batch.push_back(&e);
  return batch;
}

double batch_loss(const Batch& batch, const encoders::PromptPair& prompts,
                  const encoders::FrozenTextEncoder& encoder, const MatchingMode& mode,
                  const ot::SolverConfig& config, SolverStats* stats) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidValue, "empty batch");
  mode.validate();
  const PromptFeatures text = encode_prompts(encoder, prompts);
  double total = 0.0;
  for (const Example* e : batch) {
    check_label(e->label, encoder.num_classes());
    const ClassScore s = score(e->features, text, mode, config, stats);
    total += ce_loss(s.probabilities, e->label);
  }
  return total / static_cast<double>(batch.size());
}

PromptGradient grad_prompts(const Batch& batch, const encoders::PromptPair& prompts,
                            const encoders::FrozenTextEncoder& encoder,
                            const MatchingMode& mode, const ot::SolverConfig& config) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidValue, "empty batch");
  mode.validate();
  prompts.validate();
  const PromptFeatures text = encode_prompts(encoder, prompts);
  const std::size_t K = encoder.num_classes();
  const std::size_t d_f = encoder.feature_dim();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  Matrix grad_g(K, d_f), grad_l(K, d_f);
  PromptGradient out;
  std::vector<double> pooled(d_f);
  for (const Example* e : batch) {
    check_label(e->label, K);
    const encoders::FeatureMap& fm = e->features;
    const ClassScore s = score(fm, text, mode, config, &out.stats, true);
    out.loss += ce_loss(s.probabilities, e->label) * inv_batch;

    if (mode.variant == MatchingVariant::kSimilarityAvg) {
      std::fill(pooled.begin(), pooled.end(), 0.0);
      for (std::size_t v = 0; v < fm.size(); ++v) kernels::axpy(1.0, fm.patches.row(v), pooled);
    }
    for (std::size_t k = 0; k < K; ++k) {
      // dL/dd_k, scaled by the batch mean.
      const double dd = ((k == e->label ? 1.0 : 0.0) - s.probabilities[k]) / mode.tau * inv_batch;
      switch (mode.variant) {
        case MatchingVariant::kClassToken: {
          Matrix& target = mode.token_slot == PromptSlot::kGlobal ? grad_g : grad_l;
          kernels::axpy(-dd, fm.class_token, target.row(k));
          break;
        }
        case MatchingVariant::kSimilarityAvg: {
          const double w = -dd / (2.0 * static_cast<double>(fm.size()));
          kernels::axpy(w, pooled, grad_g.row(k));
          kernels::axpy(w, pooled, grad_l.row(k));
          break;
        }
        case MatchingVariant::kClassicalOt:
        case MatchingVariant::kUnbalancedOt: {
          const Matrix& T = s.plans[k].plan;
          for (std::size_t v = 0; v < fm.size(); ++v) {
            const auto g = fm.patches.row(v);
            kernels::axpy(-dd * T(v, 0), g, grad_g.row(k));
            kernels::axpy(-dd * T(v, 1), g, grad_l.row(k));
          }
          break;
        }
      }
    }
  }
  out.global = encoders::backward_text(encoder, text.global, grad_g);
  out.local = encoders::backward_text(encoder, text.local, grad_l);
  return out;
}

}  // namespace fedotp::alignment
