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
#include <random>
#include <vector>

#include "doctest.h"
#include "fedotp/alignment.hpp"
#include "support/random.hpp"

using namespace fedotp;
using namespace fedotp::alignment;
using encoders::FeatureMap;
using encoders::PromptPair;
using fedotp::testing::gaussian_matrix;
using fedotp::testing::unit_vector;

namespace {

ot::SolverConfig tight() {
  ot::SolverConfig c;
  c.max_iter = 100000;
  c.epsilon = 1e-13;
  return c;
}

FeatureMap random_map(std::mt19937_64& rng, std::size_t V, std::size_t d) {
  FeatureMap m{gaussian_matrix(rng, V, d), unit_vector(rng, d)};
  fedotp::testing::normalize_rows(m.patches);
  return m;
}

struct World {
  encoders::FrozenTextEncoder text;
  std::vector<Example> examples;
  PromptPair prompts;
};

World small_world(std::uint64_t seed, std::size_t K = 3, std::size_t batch = 4) {
  encoders::TextEncoderSpec spec;
  spec.num_classes = K;
  spec.prompt_length = 4;
  spec.embed_dim = 6;
  spec.feature_dim = 8;
  spec.prompt_gain = 2.0;
  spec.seed = seed;
  World w{encoders::FrozenTextEncoder(spec), {}, encoders::init_prompts(seed, 4, 6)};
  std::mt19937_64 rng(seed + 100);
  for (std::size_t i = 0; i < batch; ++i) {
    w.examples.push_back({random_map(rng, 6, 8), i % K});
  }
  // Pull the two blocks apart so the columns are not symmetric.
  w.prompts.local_prompt = gaussian_matrix(rng, 4, 6, 0.3);
  w.prompts.global_prompt = gaussian_matrix(rng, 4, 6, 0.3);
  return w;
}

double loss_at(const World& w, const PromptPair& p, const MatchingMode& mode,
               const ot::SolverConfig& config) {
  return batch_loss(batch_of(w.examples), p, w.text, mode, config);
}

// Worst relative error between the analytic gradient and central differences
// of the full forward pass over every prompt entry.
double worst_relative_error(const World& w, const MatchingMode& mode,
                            const ot::SolverConfig& config, double step) {
  const PromptGradient g = grad_prompts(batch_of(w.examples), w.prompts, w.text, mode, config);
  double worst = 0.0;
  for (int block = 0; block < 2; ++block) {
    const Matrix& analytic = block == 0 ? g.global : g.local;
    for (std::size_t r = 0; r < analytic.size(); ++r) {
      PromptPair plus = w.prompts, minus = w.prompts;
      (block == 0 ? plus.global_prompt : plus.local_prompt).flat()[r] += step;
      (block == 0 ? minus.global_prompt : minus.local_prompt).flat()[r] -= step;
      const double fd = (loss_at(w, plus, mode, config) - loss_at(w, minus, mode, config)) /
                        (2 * step);
      const double a = analytic.flat()[r];
      const double scale = std::max(std::abs(fd), 1e-6);
      worst = std::max(worst, std::abs(a - fd) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("matching mode") {
  TEST_CASE("defaults and validation") {
    MatchingMode m;
    CHECK(m.variant == MatchingVariant::kUnbalancedOt);
    CHECK(m.gamma == 0.8);
    CHECK(m.lambda == 0.1);
    CHECK(m.tau == 0.07);
    CHECK_NOTHROW(m.validate());
    m.gamma = 1.5;
    CHECK_THROWS_AS(m.validate(), Error);
    m = {};
    m.tau = 0;
    CHECK_THROWS_AS(m.validate(), Error);
  }

  TEST_CASE("names round-trip") {
    for (auto v : {MatchingVariant::kSimilarityAvg, MatchingVariant::kClassicalOt,
                   MatchingVariant::kUnbalancedOt, MatchingVariant::kClassToken}) {
      CHECK(parse_variant(to_string(v)) == v);
    }
    CHECK_THROWS_AS(parse_variant("ot"), Error);
    CHECK(parse_distance_kind("entropic") == DistanceKind::kEntropic);
  }
}

TEST_SUITE("cost matrix") {
  TEST_CASE("identical and antipodal features") {
    std::mt19937_64 rng(1);
    FeatureMap m = random_map(rng, 3, 5);
    const auto hg = unit_vector(rng, 5);
    const auto hl = unit_vector(rng, 5);
    for (std::size_t j = 0; j < 5; ++j) {
      m.patches(0, j) = hg[j];
      m.patches(1, j) = -hl[j];
    }
    const Matrix c = cost_matrix(m, hg, hl);
    CHECK(c(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
  }

  TEST_CASE("matches direct dot products") {
    std::mt19937_64 rng(2);
    const FeatureMap m = random_map(rng, 16, 24);
    const auto hg = unit_vector(rng, 24);
    const auto hl = unit_vector(rng, 24);
    const Matrix c = cost_matrix(m, hg, hl);
    for (std::size_t v = 0; v < 16; ++v) {
      double a = 0, b = 0;
      for (std::size_t j = 0; j < 24; ++j) {
        a += m.patches(v, j) * hg[j];
        b += m.patches(v, j) * hl[j];
      }
      CHECK(std::abs(c(v, 0) - (1 - a)) <= 1e-12);
      CHECK(std::abs(c(v, 1) - (1 - b)) <= 1e-12);
    }
  }

  TEST_CASE("width mismatch") {
    std::mt19937_64 rng(3);
    const FeatureMap m = random_map(rng, 4, 5);
    CHECK_THROWS_AS(cost_matrix(m, std::vector<double>(4), std::vector<double>(5)), Error);
  }
}

TEST_SUITE("class distance") {
  TEST_CASE("constant cost reproduces the transported mass") {
    const Matrix c(16, 2, 0.7);
    MatchingMode m;
    m.variant = MatchingVariant::kSimilarityAvg;
    CHECK(class_distance(c, m, {}).value == doctest::Approx(0.7).epsilon(1e-12));
    CHECK_FALSE(class_distance(c, m, {}).plan.has_value());
    m.variant = MatchingVariant::kClassicalOt;
    CHECK(class_distance(c, m, {}).value == doctest::Approx(0.7).epsilon(1e-9));
    m.variant = MatchingVariant::kUnbalancedOt;
    const Distance d = class_distance(c, m, {});
    CHECK(d.value == doctest::Approx(0.8 * 0.7).epsilon(1e-6));
    REQUIRE(d.plan.has_value());
    CHECK(d.plan->plan.sum() == doctest::Approx(0.8).epsilon(1e-6));
  }

  TEST_CASE("unbalanced with gamma 1 equals classical") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
      const FeatureMap f = random_map(rng, 16, 24);
      const Matrix c = cost_matrix(f, unit_vector(rng, 24), unit_vector(rng, 24));
      MatchingMode m;
      m.gamma = 1.0;
      const double u = class_distance(c, m, tight()).value;
      m.variant = MatchingVariant::kClassicalOt;
      const double b = class_distance(c, m, tight()).value;
      CHECK(std::abs(u - b) <= 1e-4);
    }
  }

  TEST_CASE("class-token variant has no cost matrix") {
    MatchingMode m;
    m.variant = MatchingVariant::kClassToken;
    CHECK_THROWS_AS(class_distance(Matrix(2, 2), m, {}), Error);
  }
}

TEST_SUITE("probabilities") {
  TEST_CASE("symmetric distances give a uniform distribution") {
    const auto p = predict_proba(std::vector<double>(4, 0.3), 0.07);
    for (double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("two-class example") {
    const auto p = predict_proba(std::vector<double>{0.0, 2.0}, 1.0);
    CHECK(std::abs(p[0] - 0.8808) <= 1e-4);
    CHECK(std::abs(p[1] - 0.1192) <= 1e-4);
  }

  TEST_CASE("shift invariance and stability") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 2);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> d(10), shifted(10);
      for (std::size_t k = 0; k < 10; ++k) {
        d[k] = u(rng);
        shifted[k] = d[k] + 3.7;
      }
      const auto p = predict_proba(d, 0.01);
      const auto q = predict_proba(shifted, 0.01);
      double total = 0;
      for (std::size_t k = 0; k < 10; ++k) {
        CHECK(std::abs(p[k] - q[k]) <= 1e-12);
        CHECK(p[k] >= 0.0);
        total += p[k];
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("cross-entropy") {
    CHECK(ce_loss(std::vector<double>{0, 1, 0}, 1) == 0.0);
    CHECK(ce_loss(std::vector<double>(10, 0.1), 7) == doctest::Approx(2.302585).epsilon(1e-6));
    try {
      ce_loss(std::vector<double>(3, 1.0 / 3), 3);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kLabelOutOfRange);
    }
  }

  TEST_CASE("batch loss is the mean of per-sample losses") {
    World w = small_world(6);
    MatchingMode m;
    const double mean = loss_at(w, w.prompts, m, {});
    const PromptFeatures text = encode_prompts(w.text, w.prompts);
    double manual = 0;
    for (const Example& e : w.examples) {
      manual += ce_loss(score(e.features, text, m, {}).probabilities, e.label);
    }
    CHECK(std::abs(mean - manual / w.examples.size()) <= 1e-12);
  }

  TEST_CASE("argmax breaks ties toward the lowest index") {
    CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
    CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  }
}

TEST_SUITE("gradients") {
  TEST_CASE("single class gives the trivial stationary point") {
    World w = small_world(7, 1);
    const PromptGradient g = grad_prompts(batch_of(w.examples), w.prompts, w.text, {}, {});
    double n = 0;
    for (double x : g.global.flat()) n += x * x;
    for (double x : g.local.flat()) n += x * x;
    CHECK(std::sqrt(n) < 1e-6);
    CHECK(g.loss == 0.0);
  }

  TEST_CASE("similarity averaging matches central differences") {
    for (std::uint64_t seed : {1, 2, 3}) {
      World w = small_world(seed);
      MatchingMode m;
      m.variant = MatchingVariant::kSimilarityAvg;
      CHECK(worst_relative_error(w, m, {}, 1e-5) <= 1e-5);
    }
  }

  TEST_CASE("class-token variant touches one slot only") {
    World w = small_world(4);
    MatchingMode m;
    m.variant = MatchingVariant::kClassToken;
    m.token_slot = PromptSlot::kLocal;
    CHECK(worst_relative_error(w, m, {}, 1e-5) <= 1e-5);
    const PromptGradient g = grad_prompts(batch_of(w.examples), w.prompts, w.text, m, {});
    for (double x : g.global.flat()) CHECK(x == 0.0);
  }

  TEST_CASE("fixed-plan gradient is exact for the entropic distance") {
    for (auto variant : {MatchingVariant::kUnbalancedOt, MatchingVariant::kClassicalOt}) {
      World w = small_world(5);
      MatchingMode m;
      m.variant = variant;
      m.distance = DistanceKind::kEntropic;
      CHECK(worst_relative_error(w, m, tight(), 1e-5) <= 1e-3);
    }
  }

  TEST_CASE("fixed-plan gradient matches differences with the plan frozen") {
    World w = small_world(8);
    MatchingMode m;
    const PromptGradient g = grad_prompts(batch_of(w.examples), w.prompts, w.text, m, tight());
    const PromptFeatures text0 = encode_prompts(w.text, w.prompts);
    std::vector<std::vector<ot::TransportPlan>> frozen;
    for (const Example& e : w.examples) {
      frozen.push_back(score(e.features, text0, m, tight(), nullptr, true).plans);
    }
    auto frozen_loss = [&](const PromptPair& p) {
      const PromptFeatures text = encode_prompts(w.text, p);
      double total = 0;
      for (std::size_t i = 0; i < w.examples.size(); ++i) {
        const Example& e = w.examples[i];
        std::vector<double> d(w.text.num_classes());
        for (std::size_t k = 0; k < d.size(); ++k) {
          const Matrix c = cost_matrix(e.features, text.global.features.row(k),
                                       text.local.features.row(k));
          d[k] = ot::wasserstein_distance(frozen[i][k], c);
        }
        total += ce_loss(predict_proba(d, m.tau), e.label);
      }
      return total / w.examples.size();
    };
    const double step = 1e-5;
    for (std::size_t r = 0; r < g.global.size(); ++r) {
      PromptPair plus = w.prompts, minus = w.prompts;
      plus.local_prompt.flat()[r] += step;
      minus.local_prompt.flat()[r] -= step;
      const double fd = (frozen_loss(plus) - frozen_loss(minus)) / (2 * step);
      CHECK(std::abs(fd - g.local.flat()[r]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }

  TEST_CASE("identical blocks get identical gradients under similarity averaging") {
    World w = small_world(9);
    w.prompts = encoders::init_prompts(9, 4, 6);
    MatchingMode m;
    m.variant = MatchingVariant::kSimilarityAvg;
    const PromptGradient g = grad_prompts(batch_of(w.examples), w.prompts, w.text, m, {});
    CHECK(g.global == g.local);
  }

  TEST_CASE("solver diagnostics are collected") {
    World w = small_world(10);
    const PromptGradient g = grad_prompts(batch_of(w.examples), w.prompts, w.text, {}, {});
    CHECK(g.stats.solves == w.examples.size() * w.text.num_classes());
    CHECK(g.stats.mean_iterations() > 0.0);
  }
}
