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

// Exact reference solver for the unregularized problem, used to check the
// entropic solvers. Dense tableau, two phases, Bland's rule; the instances
// are small enough that none of this has to be clever.
//
// Columns: T_ij (row-major), then a slack per row constraint, then an
// artificial per column constraint.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fedotp/ot.hpp"

namespace fedotp::ot {

namespace {

constexpr double kPivotTol = 1e-12;

class Tableau {
 public:
  Tableau(std::size_t constraints, std::size_t variables)
      : m_(constraints), n_(variables), a_(constraints * (variables + 1), 0.0),
        basis_(constraints, 0) {}

  double& at(std::size_t r, std::size_t c) { return a_[r * (n_ + 1) + c]; }
  double at(std::size_t r, std::size_t c) const { return a_[r * (n_ + 1) + c]; }
  double& rhs(std::size_t r) { return at(r, n_); }
  double rhs(std::size_t r) const { return at(r, n_); }
  std::size_t& basic(std::size_t r) { return basis_[r]; }
  std::size_t basic(std::size_t r) const { return basis_[r]; }
  std::size_t constraints() const { return m_; }
  std::size_t variables() const { return n_; }

  void pivot(std::size_t row, std::size_t col) {
    const double p = at(row, col);
    for (std::size_t c = 0; c <= n_; ++c) at(row, c) /= p;
    for (std::size_t r = 0; r < m_; ++r) {
      if (r == row) continue;
      const double f = at(r, col);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c <= n_; ++c) at(r, c) -= f * at(row, c);
    }
    basis_[row] = col;
  }

  // Minimizes cost^T x over columns [0, allowed). Returns the pivot count.
  int minimize(const std::vector<double>& cost, std::size_t allowed) {
    int pivots = 0;
    for (;;) {
      std::size_t enter = allowed;
      for (std::size_t k = 0; k < allowed; ++k) {
        double reduced = cost[k];
        for (std::size_t r = 0; r < m_; ++r) reduced -= cost[basis_[r]] * at(r, k);
        if (reduced < -kPivotTol) {
          enter = k;
          break;
        }
      }
      if (enter == allowed) return pivots;

      std::size_t leave = m_;
      double best = 0.0;
      for (std::size_t r = 0; r < m_; ++r) {
        const double coef = at(r, enter);
        if (coef <= kPivotTol) continue;
        const double ratio = rhs(r) / coef;
        if (leave == m_ || ratio < best - kPivotTol ||
            (std::abs(ratio - best) <= kPivotTol && basis_[r] < basis_[leave])) {
          leave = r;
          best = ratio;
        }
      }
      // The feasible set is a bounded polytope, so some row always blocks.
      if (leave == m_) return pivots;
      pivot(leave, enter);
      ++pivots;
    }
  }

 private:
  std::size_t m_;
  std::size_t n_;
  std::vector<double> a_;
  std::vector<std::size_t> basis_;
};

}  // namespace

TransportPlan brute_force_ot_oracle(const TransportProblem& problem) {
  problem.validate();
  const std::size_t rows = problem.rows();
  const std::size_t cols = problem.cols();
  if (rows > kOracleMaxRows || cols > kOracleMaxCols) {
    throw Error(ErrorCode::kInstanceTooLarge,
                std::to_string(rows) + "x" + std::to_string(cols) + " exceeds the " +
                    std::to_string(kOracleMaxRows) + "x" + std::to_string(kOracleMaxCols) +
                    " exact-solve cap",
                "cost");
  }

  const std::size_t cells = rows * cols;
  const std::size_t slack0 = cells;
  const std::size_t art0 = cells + rows;
  const std::size_t vars = art0 + cols;
  Tableau tab(rows + cols, vars);

  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) tab.at(i, i * cols + j) = 1.0;
    tab.at(i, slack0 + i) = 1.0;
    tab.rhs(i) = problem.alpha[i];
    tab.basic(i) = slack0 + i;
  }
  for (std::size_t j = 0; j < cols; ++j) {
    const std::size_t r = rows + j;
    for (std::size_t i = 0; i < rows; ++i) tab.at(r, i * cols + j) = 1.0;
    tab.at(r, art0 + j) = 1.0;
    tab.rhs(r) = problem.beta[j];
    tab.basic(r) = art0 + j;
  }

  std::vector<double> phase1(vars, 0.0);
  for (std::size_t j = 0; j < cols; ++j) phase1[art0 + j] = 1.0;
  int pivots = tab.minimize(phase1, vars);

  double infeasibility = 0.0;
  for (std::size_t r = 0; r < tab.constraints(); ++r) {
    if (tab.basic(r) >= art0) infeasibility += tab.rhs(r);
  }
  if (infeasibility > 1e-9) {
    throw Error(ErrorCode::kInfeasibleMarginals, "no plan satisfies the marginals", "beta");
  }
  // Degenerate artificials left in the basis at zero level are pivoted out.
  for (std::size_t r = 0; r < tab.constraints(); ++r) {
    if (tab.basic(r) < art0) continue;
    for (std::size_t k = 0; k < art0; ++k) {
      if (std::abs(tab.at(r, k)) > kPivotTol) {
        tab.pivot(r, k);
        ++pivots;
        break;
      }
    }
  }

  std::vector<double> phase2(vars, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) phase2[i * cols + j] = problem.cost(i, j);
  }
  pivots += tab.minimize(phase2, art0);

  TransportPlan out;
  out.plan = Matrix(rows, cols);
  for (std::size_t r = 0; r < tab.constraints(); ++r) {
    const std::size_t b = tab.basic(r);
    if (b < cells) out.plan(b / cols, b % cols) = std::max(0.0, tab.rhs(r));
  }
  out.iterations = pivots;
  out.converged = true;
  out.objective = 0.0;
  for (std::size_t i = 0; i < cells; ++i) out.objective += out.plan.flat()[i] * problem.cost.flat()[i];
  return out;
}

}  // namespace fedotp::ot
