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
#include "fedotp/ot.hpp"
#include "support/random.hpp"

using namespace fedotp;
using namespace fedotp::ot;
using fedotp::testing::max_abs_diff;
using fedotp::testing::uniform_matrix;

namespace {

TransportProblem problem_of(Matrix cost, std::vector<double> alpha, std::vector<double> beta,
                            double lambda) {
  TransportProblem p;
  p.cost = std::move(cost);
  p.alpha = std::move(alpha);
  p.beta = std::move(beta);
  p.lambda = lambda;
  return p;
}

SolverConfig tight() {
  SolverConfig c;
  c.max_iter = 100000;
  c.epsilon = 1e-12;
  return c;
}

void check_feasible(const TransportPlan& plan, const TransportProblem& problem) {
  const auto e = marginal_error(plan.plan, problem);
  CHECK(e.min_entry >= 0.0);
  CHECK(e.column <= 1e-6);
  CHECK(e.row_excess <= 1e-6);
}

}  // namespace

TEST_SUITE("problem") {
  TEST_CASE("validation rejects malformed problems") {
    auto p = problem_of(Matrix{{0, 1}, {1, 0}}, {0.5, 0.5}, {0.4, 0.4}, 0.1);
    CHECK_NOTHROW(p.validate());

    auto bad = p;
    bad.alpha = {0.5};
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = p;
    bad.cost(0, 0) = -0.1;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = p;
    bad.beta = {0.6, 0.6};
    try {
      bad.validate();
      FAIL("expected InfeasibleMarginals");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInfeasibleMarginals);
    }

    bad = p;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("uniform marginals") {
    auto p = uniform_problem(Matrix(4, 2, 1.0), 0.8, 0.1);
    CHECK(p.alpha == std::vector<double>(4, 0.25));
    CHECK(p.beta == std::vector<double>{0.4, 0.4});
    CHECK(p.gamma() == doctest::Approx(0.8));
  }

  TEST_CASE("solver config validation") {
    SolverConfig c;
    CHECK(c.max_iter == 100);
    CHECK(c.epsilon == 1e-3);
    CHECK(c.denom_floor == 1e-300);
    c.max_iter = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.epsilon = 0;
    CHECK_THROWS_AS(c.validate(), Error);
  }
}

TEST_SUITE("sinkhorn") {
  TEST_CASE("constant cost gives the independent coupling") {
    auto p = problem_of(Matrix(2, 2, 1.0), {0.5, 0.5}, {0.5, 0.5}, 0.1);
    const auto plan = solve_sinkhorn(p);
    for (double t : plan.plan.flat()) CHECK(t == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(plan.converged);
    CHECK(plan.objective == doctest::Approx(1.0));
  }

  TEST_CASE("small lambda approaches the LP solution") {
    auto p = problem_of(Matrix{{0, 1}, {1, 0}}, {0.5, 0.5}, {0.5, 0.5}, 0.01);
    const auto lp = brute_force_ot_oracle(p);
    CHECK(max_abs_diff(lp.plan, Matrix{{0.5, 0}, {0, 0.5}}) < 1e-12);
    const auto plan = solve_sinkhorn(p);
    CHECK(max_abs_diff(plan.plan, lp.plan) < 0.01);
  }

  TEST_CASE("both marginals hold on random problems") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t rows = 2 + trial % 30;
      auto p = uniform_problem(uniform_matrix(rng, rows, 2, 0.0, 2.0), 1.0, 0.05 + 0.01 * trial);
      const auto plan = solve_sinkhorn(p);
      const auto e = marginal_error(plan.plan, p);
      CHECK(plan.converged);
      CHECK(e.column <= 1e-6);
      CHECK(e.row <= 1e-6);
      CHECK(plan.objective == doctest::Approx(wasserstein_distance(plan, p.cost)));
    }
  }

  TEST_CASE("mass mismatch is rejected") {
    auto p = problem_of(Matrix(2, 2, 1.0), {0.5, 0.5}, {0.4, 0.4}, 0.1);
    try {
      solve_sinkhorn(p);
      FAIL("expected InfeasibleMarginals");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInfeasibleMarginals);
    }
  }

  TEST_CASE("iteration cap is flagged rather than thrown") {
    std::mt19937_64 rng(5);
    auto p = uniform_problem(uniform_matrix(rng, 12, 2, 0.0, 2.0), 1.0, 0.01);
    SolverConfig c;
    c.max_iter = 1;
    c.epsilon = 1e-15;
    const auto plan = solve_sinkhorn(p, c);
    CHECK_FALSE(plan.converged);
    CHECK(plan.iterations == 1);
    const auto e = marginal_error(plan.plan, p);
    CHECK(e.column <= 1e-6);
    CHECK(e.row <= 1e-6);
  }
}

TEST_SUITE("dykstra") {
  TEST_CASE("zero-cost diagonal absorbs all transported mass") {
    auto p = problem_of(Matrix{{0, 1}, {1, 0}}, {0.5, 0.5}, {0.4, 0.4}, 0.01);
    const auto lp = brute_force_ot_oracle(p);
    CHECK(lp.objective == doctest::Approx(0.0));
    SolverConfig c;
    c.max_iter = 100;
    const auto plan = solve_dykstra_unbalanced(p, c);
    CHECK(max_abs_diff(plan.plan, Matrix{{0.4, 0}, {0, 0.4}}) < 0.02);
    check_feasible(plan, p);
  }

  TEST_CASE("tight capacity reduces to the balanced solver") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t rows = 2 + trial % 10;
      auto p = uniform_problem(uniform_matrix(rng, rows, 2, 0.0, 2.0), 1.0, 0.1);
      const auto balanced = solve_sinkhorn(p);
      const auto relaxed = solve_dykstra_unbalanced(p, tight());
      CHECK(max_abs_diff(balanced.plan, relaxed.plan) < 1e-4);
    }
  }

  TEST_CASE("196-patch instance converges within the default cap") {
    // Cosine-distance costs between unit features, the form the model produces.
    std::mt19937_64 rng(19);
    auto g = fedotp::testing::gaussian_matrix(rng, 196, 24);
    fedotp::testing::normalize_rows(g);
    const auto h0 = fedotp::testing::unit_vector(rng, 24);
    const auto h1 = fedotp::testing::unit_vector(rng, 24);
    Matrix cost(196, 2);
    for (std::size_t i = 0; i < 196; ++i) {
      double d0 = 0, d1 = 0;
      for (std::size_t k = 0; k < 24; ++k) {
        d0 += g(i, k) * h0[k];
        d1 += g(i, k) * h1[k];
      }
      cost(i, 0) = 1.0 - d0;
      cost(i, 1) = 1.0 - d1;
    }
    auto p = uniform_problem(cost, 0.8, 0.1);
    const auto plan = solve_dykstra_unbalanced(p);
    CHECK(plan.converged);
    CHECK(plan.iterations <= 100);
    check_feasible(plan, p);
  }

  TEST_CASE("plan keeps the scaling form when converged") {
    std::mt19937_64 rng(23);
    auto p = uniform_problem(uniform_matrix(rng, 9, 2, 0.0, 2.0), 0.7, 0.2);
    const auto plan = solve_dykstra_unbalanced(p, tight());
    // T_ij / exp(-C_ij / lambda) factorizes as u_i v_j with u_i <= u_max,
    // and u attains its cap exactly on rows with slack.
    std::vector<double> ratio0(p.rows()), ratio1(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      ratio0[i] = plan.plan(i, 0) / std::exp(-p.cost(i, 0) / p.lambda);
      ratio1[i] = plan.plan(i, 1) / std::exp(-p.cost(i, 1) / p.lambda);
    }
    const double v_ratio = ratio1[0] / ratio0[0];
    double u_max = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      CHECK(ratio1[i] / ratio0[i] == doctest::Approx(v_ratio).epsilon(1e-8));
      u_max = std::max(u_max, ratio0[i]);
    }
    for (std::size_t i = 0; i < p.rows(); ++i) {
      const double row = plan.plan(i, 0) + plan.plan(i, 1);
      const bool slack = row < p.alpha[i] - 1e-9;
      if (slack) CHECK(ratio0[i] == doctest::Approx(u_max).epsilon(1e-8));
    }
  }

  TEST_CASE("underflowing kernels are flagged, not fatal") {
    // Tiny targets drive Q^T u below a 1e-30 floor.
    auto p = problem_of(Matrix{{0.0, 2.0}, {2.0, 0.0}}, {1e-40, 1e-40}, {1e-40, 1e-40}, 0.01);
    SolverConfig c;
    c.denom_floor = 1e-30;
    const auto plan = solve_dykstra_unbalanced(p, c);
    CHECK(plan.underflow);
    CHECK(std::isfinite(plan.objective));
    for (double t : plan.plan.flat()) CHECK(std::isfinite(t));
  }

  TEST_CASE("iteration cap returns the flagged last iterate") {
    std::mt19937_64 rng(29);
    auto p = uniform_problem(uniform_matrix(rng, 6, 2, 0.0, 2.0), 0.8, 0.01);
    SolverConfig c;
    c.max_iter = 2;
    c.epsilon = 1e-14;
    const auto plan = solve_dykstra_unbalanced(p, c);
    CHECK_FALSE(plan.converged);
    CHECK(plan.iterations == 2);
    check_feasible(plan, p);
  }
}

TEST_SUITE("oracle") {
  TEST_CASE("hand-checkable optima") {
    auto diag = problem_of(Matrix{{0, 1}, {1, 0}}, {0.5, 0.5}, {0.4, 0.4}, 0.1);
    CHECK(brute_force_ot_oracle(diag).objective == doctest::Approx(0.0).epsilon(1e-12));

    auto ones = problem_of(Matrix(3, 2, 1.0), {0.3, 0.3, 0.4}, {0.4, 0.4}, 0.1);
    CHECK(brute_force_ot_oracle(ones).objective == doctest::Approx(0.8).epsilon(1e-12));

    // Rows 1 and 2 each have capacity 1/3 >= 0.3 on their zero-cost cell, so
    // the whole 0.6 of mass moves at zero cost.
    auto three = problem_of(Matrix{{0, 2}, {2, 0}, {1, 1}}, {1.0 / 3, 1.0 / 3, 1.0 / 3},
                            {0.3, 0.3}, 0.1);
    const auto lp = brute_force_ot_oracle(three);
    CHECK(std::abs(lp.objective) <= 1e-9);
    CHECK(max_abs_diff(lp.plan, Matrix{{0.3, 0}, {0, 0.3}, {0, 0}}) < 1e-12);
  }

  TEST_CASE("binding capacity forces mass onto costlier cells") {
    // Column 0 wants 0.6 but its only free cell holds 0.5.
    auto p = problem_of(Matrix{{0, 1}, {1, 1}, {2, 0}}, {0.5, 0.5, 0.5}, {0.6, 0.2}, 0.1);
    const auto lp = brute_force_ot_oracle(p);
    CHECK(lp.objective == doctest::Approx(0.1).epsilon(1e-12));
    check_feasible(lp, p);
  }

  TEST_CASE("matches exhaustive grid search on tiny instances") {
    // Independent check: 2x2 unbalanced plans are determined by (T00, T10);
    // scan a fine grid over the feasible region.
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      auto p = problem_of(uniform_matrix(rng, 2, 2, 0.0, 2.0), {0.5, 0.5}, {0.4, 0.35}, 0.1);
      double best = 1e9;
      const int steps = 400;
      for (int a = 0; a <= steps; ++a) {
        const double t00 = p.beta[0] * a / steps;
        const double t10 = p.beta[0] - t00;
        for (int b = 0; b <= steps; ++b) {
          const double t01 = p.beta[1] * b / steps;
          const double t11 = p.beta[1] - t01;
          if (t00 + t01 > 0.5 + 1e-12 || t10 + t11 > 0.5 + 1e-12) continue;
          best = std::min(best, p.cost(0, 0) * t00 + p.cost(0, 1) * t01 + p.cost(1, 0) * t10 +
                                    p.cost(1, 1) * t11);
        }
      }
      const auto lp = brute_force_ot_oracle(p);
      CHECK(lp.objective <= best + 1e-12);
      CHECK(lp.objective >= best - 2.0 * 0.4 / steps * 2.0);
    }
  }

  TEST_CASE("size cap") {
    auto p = uniform_problem(Matrix(9, 2, 1.0), 0.8, 0.1);
    try {
      brute_force_ot_oracle(p);
      FAIL("expected InstanceTooLarge");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInstanceTooLarge);
    }
  }
}

TEST_SUITE("wasserstein") {
  TEST_CASE("inner product examples") {
    TransportPlan t;
    t.plan = Matrix{{0.4, 0}, {0, 0.4}};
    CHECK(wasserstein_distance(t, Matrix{{0, 1}, {1, 0}}) == 0.0);

    t.plan = Matrix{{0.2, 0.2}, {0.2, 0.2}};
    CHECK(wasserstein_distance(t, Matrix(2, 2, 1.7)) == doctest::Approx(1.7 * 0.8));

    CHECK_THROWS_AS(wasserstein_distance(t, Matrix(3, 2, 1.0)), Error);
  }

  TEST_CASE("matches a direct double loop") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 20; ++trial) {
      TransportPlan t;
      t.plan = uniform_matrix(rng, 17, 2, 0.0, 0.1);
      const auto c = uniform_matrix(rng, 17, 2, 0.0, 2.0);
      double expected = 0.0;
      for (std::size_t i = 0; i < 17; ++i) {
        for (std::size_t j = 0; j < 2; ++j) expected += t.plan(i, j) * c(i, j);
      }
      CHECK(std::abs(wasserstein_distance(t, c) - expected) <= 1e-12);
    }
  }
}

TEST_SUITE("properties") {
  TEST_CASE("oracle gap at small lambda") {
    // At lambda = 0.01 v must grow to ~exp(spread / lambda) and at most
    // doubles per sweep, so the 100-sweep default is too short here.
    SolverConfig config;
    config.max_iter = 5000;
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t rows = 2 + trial % 5;
      const double gamma = (trial % 3 == 0) ? 0.5 : (trial % 3 == 1 ? 0.8 : 1.0);
      auto p = uniform_problem(uniform_matrix(rng, rows, 2, 0.0, 2.0), gamma, 0.01);
      const auto plan = solve_dykstra_unbalanced(p, config);
      const auto lp = brute_force_ot_oracle(p);
      double cmax = 0.0;
      for (double c : p.cost.flat()) cmax = std::max(cmax, c);
      CHECK(std::abs(plan.objective - lp.objective) <= 0.02 * gamma * cmax);
      check_feasible(plan, p);
    }
  }

  TEST_CASE("entropic cost shrinks toward the LP cost as lambda decreases") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 30; ++trial) {
      auto p = uniform_problem(uniform_matrix(rng, 3 + trial % 8, 2, 0.0, 2.0), 0.8, 1.0);
      double previous = 1e9;
      for (double lambda : {1.0, 0.1, 0.01}) {
        p.lambda = lambda;
        const double cost = solve_dykstra_unbalanced(p, tight()).objective;
        CHECK(cost <= previous + 1e-9);
        previous = cost;
      }
    }
  }

  TEST_CASE("constant cost shift leaves the plan unchanged") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 30; ++trial) {
      auto p = uniform_problem(uniform_matrix(rng, 2 + trial % 12, 2, 0.0, 1.5), 0.8, 0.1);
      auto shifted = p;
      for (double& c : shifted.cost.flat()) c += 0.37;
      CHECK(max_abs_diff(solve_dykstra_unbalanced(p).plan,
                         solve_dykstra_unbalanced(shifted).plan) < 1e-8);
      p.alpha.assign(p.rows(), 1.0 / p.rows());
      p.beta = {0.5, 0.5};
      shifted.alpha = p.alpha;
      shifted.beta = p.beta;
      CHECK(max_abs_diff(solve_sinkhorn(p).plan, solve_sinkhorn(shifted).plan) < 1e-8);
    }
  }

  TEST_CASE("identical inputs give bit-identical plans") {
    std::mt19937_64 rng(53);
    auto p = uniform_problem(uniform_matrix(rng, 16, 2, 0.0, 2.0), 0.8, 0.1);
    const auto a = solve_dykstra_unbalanced(p);
    const auto b = solve_dykstra_unbalanced(p);
    CHECK(a.plan == b.plan);
    CHECK(a.iterations == b.iterations);
  }
}
