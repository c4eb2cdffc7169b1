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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "doctest.h"
#include "fedotp/federated.hpp"
#include "support/random.hpp"

using namespace fedotp;
using namespace fedotp::fed;

namespace {

ExperimentConfig quick_config(Method method = Method::kFedOtp) {
  ExperimentConfig c;
  c.method = method;
  c.rounds = 2;
  c.local_epochs = 1;
  c.test_per_class = 8;
  return c;
}

bool reports_equal(const RoundReport& a, const RoundReport& b) {
  return a.round == b.round && a.sampled == b.sampled && a.client_accuracy == b.client_accuracy &&
         a.client_loss == b.client_loss && a.mean_acc == b.mean_acc && a.std_acc == b.std_acc &&
         a.mean_loss == b.mean_loss && a.solver_mean_iters == b.solver_mean_iters &&
         a.aggregation_weights == b.aggregation_weights;
}

bool contains_bytes(const std::vector<std::uint8_t>& hay, const void* needle, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(needle);
  return std::search(hay.begin(), hay.end(), p, p + n) != hay.end();
}

}  // namespace

TEST_SUITE("aggregation") {
  TEST_CASE("single client is returned unchanged") {
    std::mt19937_64 rng(1);
    const Matrix p = fedotp::testing::gaussian_matrix(rng, 4, 3);
    const std::vector<ClientUpdate> u{{0, p, 7}};
    CHECK(aggregate_global(u) == p);
  }

  TEST_CASE("opposite prompts with equal mass cancel") {
    std::mt19937_64 rng(2);
    const Matrix p = fedotp::testing::gaussian_matrix(rng, 4, 3);
    Matrix q = p;
    for (double& x : q.flat()) x = -x;
    const std::vector<ClientUpdate> u{{0, p, 5}, {1, q, 5}};
    CHECK(aggregate_global(u) == Matrix(4, 3, 0.0));
  }

  TEST_CASE("mass-weighted arithmetic") {
    const double c1 = 0.3, c2 = -1.7, c3 = 2.9;
    const std::vector<ClientUpdate> u{
        {0, Matrix(2, 2, c1), 1}, {1, Matrix(2, 2, c2), 2}, {2, Matrix(2, 2, c3), 3}};
    const Matrix g = aggregate_global(u);
    for (double x : g.flat()) CHECK(x == (c1 + 2 * c2 + 3 * c3) / 6);
    const auto w = aggregation_weights(u);
    CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) <= 1e-12);
  }

  TEST_CASE("empty cohort and shape mismatch") {
    try {
      aggregate_global(std::vector<ClientUpdate>{});
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kEmptyCohort);
    }
    const std::vector<ClientUpdate> u{{0, Matrix(2, 2), 1}, {1, Matrix(2, 3), 1}};
    try {
      aggregate_global(u);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kShapeMismatch);
    }
  }
}

TEST_SUITE("sampling") {
  TEST_CASE("full participation takes everyone") {
    const auto s = sample_clients(10, 1.0, 3, 1);
    CHECK(s.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(s[i] == i);
  }

  TEST_CASE("ten percent of a hundred") {
    for (std::size_t round = 1; round <= 20; ++round) {
      const auto s = sample_clients(100, 0.1, 3, round);
      CHECK(s.size() == 10);
      CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 10);
      CHECK(s == sample_clients(100, 0.1, 3, round));
    }
    CHECK(sample_clients(100, 0.1, 3, 1) != sample_clients(100, 0.1, 3, 2));
    CHECK(sample_clients(7, 0.2, 0, 1).size() == 2);
  }
}

TEST_SUITE("messages") {
  TEST_CASE("updates round-trip") {
    std::mt19937_64 rng(4);
    const ClientUpdate u{3, fedotp::testing::gaussian_matrix(rng, 16, 32), 16};
    const auto bytes = serialize_update(u);
    CHECK(bytes.size() == 40 + 8 * 16 * 32);
    const ClientUpdate back = deserialize_update(bytes);
    CHECK(back.client_id == 3);
    CHECK(back.num_samples == 16);
    CHECK(back.global_prompt == u.global_prompt);
    auto broken = bytes;
    broken.pop_back();
    CHECK_THROWS_AS(deserialize_update(broken), Error);
  }

  TEST_CASE("local prompt never enters the message") {
    // The blocks start equal and stay equal until the first aggregation.
    Environment env = build_environment(quick_config());
    const RoundSetup setup = round_setup(env);
    env.server = run_round(env.server, env.clients, setup).server;
    ClientState trained = local_train(env.clients[0], env.server.global_prompt, setup.training, 2);
    REQUIRE_FALSE(trained.prompts.local_prompt == trained.prompts.global_prompt);
    const auto bytes = serialize_update(make_update(trained));
    const Matrix& local = trained.prompts.local_prompt;
    CHECK_FALSE(contains_bytes(bytes, local.data(), local.size() * sizeof(double)));
    for (std::size_t r = 0; r < local.rows(); ++r) {
      CHECK_FALSE(contains_bytes(bytes, local.row(r).data(), local.cols() * sizeof(double)));
    }
    CHECK(contains_bytes(bytes, trained.prompts.global_prompt.data(),
                         trained.prompts.global_prompt.size() * sizeof(double)));
  }
}

TEST_SUITE("local training") {
  TEST_CASE("zero epochs keeps [incoming global, previous local]") {
    Environment env = build_environment(quick_config());
    LocalTraining setup = round_setup(env).training;
    setup.epochs = 0;
    const Matrix incoming(16, 32, 0.25);
    const ClientState out = local_train(env.clients[1], incoming, setup, 1);
    CHECK(out.prompts.global_prompt == incoming);
    CHECK(out.prompts.local_prompt == env.clients[1].prompts.local_prompt);
  }

  TEST_CASE("zero learning rate leaves the prompts as received") {
    Environment env = build_environment(quick_config());
    LocalTraining setup = round_setup(env).training;
    setup.epochs = 5;
    ClientState c = env.clients[2];
    c.learning_rate = 0.0;
    const Matrix incoming(16, 32, -0.1);
    const ClientState out = local_train(c, incoming, setup, 1);
    CHECK(out.prompts.global_prompt == incoming);
    CHECK(out.prompts.local_prompt == c.prompts.local_prompt);
  }

  TEST_CASE("wrong incoming shape") {
    Environment env = build_environment(quick_config());
    CHECK_THROWS_AS(local_train(env.clients[0], Matrix(3, 3), round_setup(env).training, 1), Error);
  }

  TEST_CASE("training loss falls over every ten-step window") {
    Environment env = build_environment(ExperimentConfig{});
    LocalTraining setup = round_setup(env).training;
    setup.epochs = 50;
    TrainLog log;
    local_train(env.clients[0], env.server.global_prompt, setup, 1, &log);
    REQUIRE(log.step_losses.size() == 50);
    for (std::size_t t = 0; t + 10 < 50; ++t) CHECK(log.step_losses[t + 10] < log.step_losses[t]);
    CHECK(log.step_losses.front() == doctest::Approx(0.876250580872).epsilon(1e-8));
    CHECK(log.step_losses.back() == doctest::Approx(0.263388350302).epsilon(1e-8));
  }

  TEST_CASE("batch order depends on client and round only") {
    Environment env = build_environment(quick_config());
    LocalTraining setup = round_setup(env).training;
    setup.batch_size = 4;
    const ClientState a = local_train(env.clients[0], env.server.global_prompt, setup, 1);
    const ClientState b = local_train(env.clients[0], env.server.global_prompt, setup, 1);
    const ClientState c = local_train(env.clients[0], env.server.global_prompt, setup, 2);
    CHECK(a.prompts.local_prompt == b.prompts.local_prompt);
    CHECK_FALSE(a.prompts.local_prompt == c.prompts.local_prompt);
  }

  TEST_CASE("single client under similarity averaging keeps the blocks equal") {
    ExperimentConfig cfg = quick_config(Method::kSimilarityAvg);
    cfg.partition.num_clients = 1;
    cfg.partition.classes_per_client = 10;
    Environment env = build_environment(cfg);
    LocalTraining setup = round_setup(env).training;
    setup.epochs = 1;
    setup.batch_size = 1000;
    const ClientState out = local_train(env.clients[0], env.server.global_prompt, setup, 1);
    CHECK_FALSE(out.prompts.global_prompt == env.clients[0].prompts.global_prompt);
    CHECK(out.prompts.global_prompt == out.prompts.local_prompt);
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("patches on the class text direction are classified perfectly") {
    Environment env = build_environment(quick_config());
    ClientState c = env.clients[0];
    const alignment::PromptFeatures text = alignment::encode_prompts(env.text, c.prompts);
    for (auto& ex : c.test) {
      const auto h = text.global.features.row(ex.label);
      for (std::size_t v = 0; v < ex.features.size(); ++v) {
        std::copy(h.begin(), h.end(), ex.features.patches.row(v).begin());
      }
      ex.features.class_token.assign(h.begin(), h.end());
    }
    CHECK(evaluate_personalized(c, env.text, env.config.method_matching(), env.config.solver)
              .accuracy == 1.0);
  }

  TEST_CASE("symmetric classes tie toward the lower index") {
    encoders::TextEncoderSpec spec;
    spec.num_classes = 2;
    const encoders::FrozenTextEncoder text(spec, Matrix(2, 32, 0.1));
    ClientState c;
    c.prompts = encoders::init_prompts(1, 16, 32);
    std::mt19937_64 rng(3);
    for (std::size_t i = 0; i < 6; ++i) {
      encoders::FeatureMap m{fedotp::testing::gaussian_matrix(rng, 16, 24),
                             fedotp::testing::unit_vector(rng, 24)};
      fedotp::testing::normalize_rows(m.patches);
      c.test.push_back({m, i % 2});
    }
    const Evaluation e = evaluate_personalized(c, text, alignment::MatchingMode{}, {});
    CHECK(e.accuracy == 0.5);
  }
}

TEST_SUITE("rounds") {
  TEST_CASE("identical seeds give identical reports") {
    const ExperimentConfig cfg = quick_config();
    const ExperimentResult a = run_experiment(cfg);
    const ExperimentResult b = run_experiment(cfg);
    REQUIRE(a.rounds.size() == 2);
    for (std::size_t t = 0; t < 2; ++t) CHECK(reports_equal(a.rounds[t], b.rounds[t]));
    for (const auto& r : a.rounds) {
      CHECK(r.sampled.size() == 10);
      double w = 0;
      for (double x : r.aggregation_weights) w += x;
      CHECK(std::abs(w - 1.0) <= 1e-12);
      for (double acc : r.client_accuracy) CHECK((acc >= 0.0 && acc <= 1.0));
    }
  }

  TEST_CASE("partial participation evaluates every client") {
    ExperimentConfig cfg = quick_config();
    cfg.participation = 0.3;
    Environment env = build_environment(cfg);
    const Matrix before = env.clients[0].prompts.global_prompt;
    const RoundResult r = run_round(env.server, env.clients, round_setup(env));
    CHECK(r.report.sampled.size() == 3);
    CHECK(r.report.client_accuracy.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
      const bool sampled =
          std::find(r.report.sampled.begin(), r.report.sampled.end(), i) != r.report.sampled.end();
      if (sampled) CHECK(env.clients[i].prompts.global_prompt == r.server.global_prompt);
      else CHECK(env.clients[i].prompts.global_prompt == before);
    }
  }

  TEST_CASE("no rounds reports the initial state only") {
    ExperimentConfig cfg = quick_config();
    cfg.rounds = 0;
    const ExperimentResult r = run_experiment(cfg);
    CHECK(r.rounds.empty());
    CHECK(r.final.round == 0);
    CHECK(r.final.mean_acc == r.initial.mean_acc);
  }

  TEST_CASE("baselines train only their own block") {
    Environment shared = build_environment(quick_config(Method::kSharedOnly));
    const Matrix local0 = shared.clients[0].prompts.local_prompt;
    run_experiment(shared);
    CHECK(shared.clients[0].prompts.local_prompt == local0);
    CHECK_FALSE(shared.server.global_prompt == local0);

    Environment local = build_environment(quick_config(Method::kLocalOnly));
    const Matrix global0 = local.server.global_prompt;
    run_experiment(local);
    CHECK(local.server.global_prompt == global0);
    CHECK(local.clients[0].prompts.global_prompt == global0);
    CHECK_FALSE(local.clients[0].prompts.local_prompt == global0);
  }

  TEST_CASE("default experiment regression fixture") {
    const ExperimentResult r = run_experiment(ExperimentConfig{});
    CHECK(r.rounds.size() == 10);
    CHECK(r.final.mean_acc == 1.0);
    CHECK(r.initial.mean_acc == 0.9);
    CHECK(r.rounds[6].mean_acc == doctest::Approx(0.903125).epsilon(1e-12));
  }

  TEST_CASE("defaults scale with the client count") {
    ExperimentConfig c;
    CHECK(c.resolved_rounds() == 10);
    CHECK(c.resolved_participation() == 1.0);
    c.partition.num_clients = 100;
    CHECK(c.resolved_rounds() == 150);
    CHECK(c.resolved_participation() == 0.1);
    CHECK(c.resolved_epochs() == 1);
  }

  TEST_CASE("invalid config is reported before any compute") {
    ExperimentConfig c;
    c.matching.gamma = 1.5;
    try {
      build_environment(c);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfigInvalid);
      CHECK(e.subject() == "gamma");
    }
  }
}
