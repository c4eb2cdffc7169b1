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

#include "fedotp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "fedotp/federated.hpp"

namespace fedotp::verify {
namespace {

using alignment::MatchingMode;
using encoders::PromptPair;

constexpr double kGammas[] = {0.5, 0.8, 1.0};

Matrix uniform_cost(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = dist(rng);
  return m;
}

std::vector<double> unit_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  double norm = 0.0;
  for (double& x : v) {
    x = dist(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double max_entry(const Matrix& m) {
  return *std::max_element(m.flat().begin(), m.flat().end());
}

double frozen_distance(const ot::TransportPlan& plan, const Matrix& cost,
                       const MatchingMode& mode) {
  return mode.distance == alignment::DistanceKind::kEntropic
             ? ot::entropic_objective(plan.plan, cost, mode.lambda)
             : ot::wasserstein_distance(plan, cost);
}

using FrozenPlans = std::vector<std::vector<ot::TransportPlan>>;

double frozen_loss(const alignment::Batch& batch, const PromptPair& prompts,
                   const encoders::FrozenTextEncoder& encoder, const MatchingMode& mode,
                   const FrozenPlans& plans) {
  const auto text = alignment::encode_prompts(encoder, prompts);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const alignment::Example& e = *batch[i];
    std::vector<double> d(encoder.num_classes());
    for (std::size_t k = 0; k < d.size(); ++k) {
      const Matrix c = alignment::cost_matrix(e.features, text.global.features.row(k),
                                              text.local.features.row(k));
      d[k] = frozen_distance(plans[i][k], c, mode);
    }
    total += alignment::ce_loss(alignment::predict_proba(d, mode.tau), e.label);
  }
  return total / static_cast<double>(batch.size());
}

std::string format(const char* fmt, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, a, b, c);
  return buf;
}

ot::SolverConfig tight_solver() {
  ot::SolverConfig c;
  c.max_iter = 100000;
  c.epsilon = 1e-12;
  return c;
}

struct GradientWorld {
  fed::Environment env;
  alignment::Batch batch;
};

GradientWorld gradient_world(std::uint64_t seed) {
  fed::ExperimentConfig config;
  config.seed = seed;
  config.test_per_class = 4;
  GradientWorld w{fed::build_environment(config), {}};
  w.batch = alignment::batch_of(w.env.clients[0].train);
  // Separate the two blocks so the OT columns are not symmetric.
  std::mt19937_64 rng(mix_seed(seed, 11));
  std::normal_distribution<double> noise(0.0, 0.02);
  for (double& x : w.env.clients[0].prompts.local_prompt.flat()) x += noise(rng);
  return w;
}

SuiteResult gradient_suite(const std::string& name, const MatchingMode& mode,
                           const ot::SolverConfig& solver, PlanHandling handling,
                           double tolerance, bool gating, double step) {
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    GradientWorld w = gradient_world(seed);
    const auto probe = probe_gradient(w.batch, w.env.clients[0].prompts, w.env.text, mode,
                                      solver, 50, seed, handling, step);
    worst = std::max(worst, probe.worst_relative);
    coords += probe.coordinates;
  }
  return {name, worst <= tolerance, gating,
          format("worst relative error %.3g over %.0f coordinates (tolerance %.0e)", worst,
                 static_cast<double>(coords), tolerance)};
}

}  // namespace

ot::TransportProblem oracle_instance(std::uint64_t seed, std::size_t index, double lambda) {
  std::mt19937_64 rng(mix_seed(seed, index));
  const std::size_t rows = 2 + index % 5;
  return ot::uniform_problem(uniform_cost(rng, rows, 2), kGammas[index % 3], lambda);
}

OracleGap oracle_gap(std::size_t instances, std::uint64_t seed, double lambda,
                     const ot::SolverConfig& config, double tolerance) {
  OracleGap out;
  out.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto p = oracle_instance(seed, i, lambda);
    const auto plan = ot::solve_dykstra_unbalanced(p, config);
    const auto lp = ot::brute_force_ot_oracle(p);
    const double ratio = std::abs(plan.objective - lp.objective) / (p.gamma() * max_entry(p.cost));
    out.worst_ratio = std::max(out.worst_ratio, ratio);
    out.within += ratio <= tolerance;
    const auto err = ot::marginal_error(plan.plan, p);
    out.worst_marginal = std::max({out.worst_marginal, err.column, err.row_excess});
  }
  return out;
}

Reduction balanced_reduction(std::size_t instances, std::uint64_t seed, double lambda,
                             const ot::SolverConfig& dykstra) {
  Reduction out;
  out.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    const std::size_t rows = 2 + i % 15;
    const auto p = ot::uniform_problem(uniform_cost(rng, rows, 2), 1.0, lambda);
    const auto a = ot::solve_dykstra_unbalanced(p, dykstra);
    const auto b = ot::solve_sinkhorn(p);
    for (std::size_t e = 0; e < a.plan.size(); ++e) {
      out.worst_diff = std::max(out.worst_diff, std::abs(a.plan.flat()[e] - b.plan.flat()[e]));
    }
  }
  return out;
}

Convergence convergence_rate(std::size_t instances, std::uint64_t seed, std::size_t rows,
                             CostModel model, double gamma, double lambda,
                             const ot::SolverConfig& config, std::size_t feature_dim) {
  Convergence out;
  out.instances = instances;
  double iterations = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    Matrix cost;
    if (model == CostModel::kUniform) {
      cost = uniform_cost(rng, rows, 2);
    } else {
      const auto h0 = unit_vector(rng, feature_dim);
      const auto h1 = unit_vector(rng, feature_dim);
      cost = Matrix(rows, 2);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto g = unit_vector(rng, feature_dim);
        cost(r, 0) = 1.0 - std::inner_product(g.begin(), g.end(), h0.begin(), 0.0);
        cost(r, 1) = 1.0 - std::inner_product(g.begin(), g.end(), h1.begin(), 0.0);
      }
    }
    const auto plan =
        ot::solve_dykstra_unbalanced(ot::uniform_problem(std::move(cost), gamma, lambda), config);
    out.converged += plan.converged;
    iterations += plan.iterations;
  }
  out.mean_iterations = instances ? iterations / static_cast<double>(instances) : 0.0;
  return out;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

GradientProbe probe_gradient(const alignment::Batch& batch, const PromptPair& prompts,
                             const encoders::FrozenTextEncoder& encoder, const MatchingMode& mode,
                             const ot::SolverConfig& config, std::size_t coordinates,
                             std::uint64_t seed, PlanHandling handling, double step) {
  const auto grad = alignment::grad_prompts(batch, prompts, encoder, mode, config);
  const std::size_t block = prompts.global_prompt.size();
  const std::size_t total = 2 * block;
  coordinates = std::min(coordinates, total);

  FrozenPlans plans;
  const bool frozen = handling == PlanHandling::kFrozen && mode.is_ot();
  if (frozen) {
    const auto text = alignment::encode_prompts(encoder, prompts);
    for (const auto* e : batch) {
      plans.push_back(alignment::score(e->features, text, mode, config, nullptr, true).plans);
    }
  }
  auto loss = [&](const PromptPair& p) {
    return frozen ? frozen_loss(batch, p, encoder, mode, plans)
                  : alignment::batch_loss(batch, p, encoder, mode, config);
  };

  std::vector<std::size_t> index(total);
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 12));
  for (std::size_t i = 0; i < coordinates; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(index[i], index[pick(rng)]);
  }

  std::vector<double> errors;
  double diff2 = 0.0, norm2 = 0.0;
  for (std::size_t i = 0; i < coordinates; ++i) {
    const std::size_t flat = index[i];
    const bool global = flat < block;
    const std::size_t at = global ? flat : flat - block;
    PromptPair plus = prompts, minus = prompts;
    (global ? plus.global_prompt : plus.local_prompt).flat()[at] += step;
    (global ? minus.global_prompt : minus.local_prompt).flat()[at] -= step;
    const double numeric = (loss(plus) - loss(minus)) / (2.0 * step);
    const double analytic = (global ? grad.global : grad.local).flat()[at];
    errors.push_back(relative_error(analytic, numeric));
    diff2 += (analytic - numeric) * (analytic - numeric);
    norm2 += numeric * numeric;
  }
  GradientProbe out;
  out.coordinates = coordinates;
  if (!errors.empty()) {
    out.worst_relative = *std::max_element(errors.begin(), errors.end());
    std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
    out.median_relative = errors[errors.size() / 2];
    out.norm_relative = std::sqrt(diff2 / std::max(norm2, 1e-300));
  }
  return out;
}

std::vector<SuiteResult> run_suites() {
  std::vector<SuiteResult> out;

  {
    ot::SolverConfig c;
    c.max_iter = 5000;
    const auto r = oracle_gap(200, 1, 0.01, c);
    out.push_back({"oracle_gap", r.within == r.instances && r.worst_marginal <= 1e-6, true,
                   format("worst gap %.4g of gamma*max(C), worst marginal %.2g, %.0f instances",
                          r.worst_ratio, r.worst_marginal, static_cast<double>(r.instances))});
  }
  {
    const auto r = balanced_reduction(100, 2, 0.1, tight_solver());
    out.push_back({"balanced_reduction", r.worst_diff <= 1e-4, true,
                   format("worst elementwise difference %.3g (tolerance 1e-4)", r.worst_diff)});
  }
  {
    const auto r = convergence_rate(1000, 3, 196, CostModel::kCosine, 0.8, 0.1, {});
    out.push_back({"convergence_cosine", r.rate() >= 0.99, true,
                   format("%.1f%% converged, mean %.1f iterations", 100 * r.rate(),
                          r.mean_iterations)});
    const auto u = convergence_rate(200, 3, 196, CostModel::kUniform, 0.8, 0.1, {});
    out.push_back({"convergence_uniform", u.rate() >= 0.99, false,
                   format("%.1f%% converged, mean %.1f iterations", 100 * u.rate(),
                          u.mean_iterations)});
  }
  {
    MatchingMode sim;
    sim.variant = alignment::MatchingVariant::kSimilarityAvg;
    out.push_back(gradient_suite("gradient_similarity_avg", sim, {}, PlanHandling::kResolve,
                                 1e-5, true, 1e-5));
    MatchingMode ot_mode;
    out.push_back(gradient_suite("gradient_frozen_plan", ot_mode, {}, PlanHandling::kFrozen,
                                 1e-5, true, 1e-5));
    MatchingMode entropic;
    entropic.distance = alignment::DistanceKind::kEntropic;
    out.push_back(gradient_suite("gradient_entropic", entropic, tight_solver(),
                                 PlanHandling::kResolve, 1e-3, true, 1e-4));
    out.push_back(gradient_suite("gradient_transport_cost", ot_mode, {}, PlanHandling::kResolve,
                                 1e-3, false, 1e-4));
  }
  {
    const Matrix p{{0.5, -1.25}, {2.0, 0.0}};
    Matrix q = p;
    for (double& x : q.flat()) x = -x;
    const bool identity = fed::aggregate_global(std::vector<fed::ClientUpdate>{{0, p, 7}}) == p;
    const bool cancel = fed::aggregate_global(std::vector<fed::ClientUpdate>{
                            {0, p, 4}, {1, q, 4}}) == Matrix(2, 2, 0.0);
    const Matrix w = fed::aggregate_global(std::vector<fed::ClientUpdate>{
        {0, Matrix(1, 1, 0.3), 1}, {1, Matrix(1, 1, -1.7), 2}, {2, Matrix(1, 1, 2.9), 3}});
    const bool weighted = w(0, 0) == (0.3 + 2 * -1.7 + 3 * 2.9) / 6;
    out.push_back({"aggregation", identity && cancel && weighted, true,
                   std::string("identity ") + (identity ? "ok" : "FAIL") + ", cancellation " +
                       (cancel ? "ok" : "FAIL") + ", weighted " + (weighted ? "ok" : "FAIL")});
  }
  return out;
}

bool all_passed(std::span<const SuiteResult> results) {
  return std::all_of(results.begin(), results.end(),
                     [](const SuiteResult& r) { return r.passed || !r.gating; });
}

}  // namespace fedotp::verify
