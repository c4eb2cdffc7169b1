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
#include <numeric>
#include <string>

#include "fedotp/kernels.hpp"
#include "fedotp/ot.hpp"
#include "scaling.hpp"

namespace fedotp::ot {

namespace {

constexpr double kMassTolerance = 1e-9;

}  // namespace

double TransportProblem::gamma() const { return std::accumulate(beta.begin(), beta.end(), 0.0); }

double TransportProblem::capacity() const {
  return std::accumulate(alpha.begin(), alpha.end(), 0.0);
}

void TransportProblem::validate() const {
  if (cost.empty()) throw Error(ErrorCode::kDimensionMismatch, "empty cost matrix", "cost");
  if (alpha.size() != cost.rows()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "alpha has " + std::to_string(alpha.size()) + " entries, cost has " +
                    std::to_string(cost.rows()) + " rows",
                "alpha");
  }
  if (beta.size() != cost.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "beta has " + std::to_string(beta.size()) + " entries, cost has " +
                    std::to_string(cost.cols()) + " columns",
                "beta");
  }
  for (double c : cost.flat()) {
    if (!std::isfinite(c) || c < 0.0) {
      throw Error(ErrorCode::kInvalidValue, "cost entries must be finite and >= 0", "cost");
    }
  }
  for (double a : alpha) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw Error(ErrorCode::kInvalidValue, "alpha entries must be > 0", "alpha");
    }
  }
  for (double b : beta) {
    if (!(b > 0.0) || !std::isfinite(b)) {
      throw Error(ErrorCode::kInvalidValue, "beta entries must be > 0", "beta");
    }
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidValue, "lambda must be > 0", "lambda");
  }
  if (capacity() < gamma() - kMassTolerance) {
    throw Error(ErrorCode::kInfeasibleMarginals, "sum(alpha) < sum(beta)", "beta");
  }
}

TransportProblem uniform_problem(Matrix cost, double gamma, double lambda) {
  TransportProblem p;
  const std::size_t rows = cost.rows();
  const std::size_t cols = cost.cols();
  p.cost = std::move(cost);
  p.alpha.assign(rows, rows ? 1.0 / static_cast<double>(rows) : 0.0);
  p.beta.assign(cols, cols ? gamma / static_cast<double>(cols) : 0.0);
  p.lambda = lambda;
  return p;
}

void SolverConfig::validate() const {
  if (max_iter < 1) throw Error(ErrorCode::kInvalidValue, "max_iter must be >= 1", "max_iter");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kInvalidValue, "epsilon must be > 0", "epsilon");
  if (!(denom_floor > 0.0)) {
    throw Error(ErrorCode::kInvalidValue, "denom_floor must be > 0", "denom_floor");
  }
}

SolverConfig sinkhorn_defaults() {
  SolverConfig c;
  c.max_iter = 10000;
  c.epsilon = 1e-10;
  return c;
}

double wasserstein_distance(const TransportPlan& plan, const Matrix& cost) {
  if (!same_shape(plan.plan, cost)) {
    throw Error(ErrorCode::kDimensionMismatch, "plan and cost shapes differ", "cost");
  }
  return kernels::dot(plan.plan.flat(), cost.flat());
}

double entropic_objective(const Matrix& plan, const Matrix& cost, double lambda) {
  if (!same_shape(plan, cost)) {
    throw Error(ErrorCode::kDimensionMismatch, "plan and cost shapes differ", "cost");
  }
  double value = 0.0;
  const auto t = plan.flat();
  const auto c = cost.flat();
  for (std::size_t i = 0; i < t.size(); ++i) {
    value += c[i] * t[i];
    if (t[i] > 0.0) value += lambda * t[i] * std::log(t[i]);
  }
  return value;
}

MarginalError marginal_error(const Matrix& plan, const TransportProblem& problem) {
  MarginalError e;
  e.min_entry = plan.empty() ? 0.0 : *std::min_element(plan.flat().begin(), plan.flat().end());
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double r = 0.0;
    for (double t : plan.row(i)) r += t;
    e.row = std::max(e.row, std::abs(r - problem.alpha[i]));
    e.row_excess = std::max(e.row_excess, r - problem.alpha[i]);
  }
  for (std::size_t j = 0; j < plan.cols(); ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < plan.rows(); ++i) c += plan(i, j);
    e.column = std::max(e.column, std::abs(c - problem.beta[j]));
  }
  return e;
}

namespace detail {

GibbsKernel make_kernel(const Matrix& cost, double lambda, bool shift_rows) {
  const std::size_t rows = cost.rows();
  const std::size_t cols = cost.cols();
  Matrix shifted = cost;
  if (shift_rows) {
    for (std::size_t i = 0; i < rows; ++i) {
      auto r = shifted.row(i);
      const double m = *std::min_element(r.begin(), r.end());
      for (double& x : r) x -= m;
    }
  }
  GibbsKernel q;
  q.rows = rows;
  q.cols = cols;
  q.by_column.resize(rows * cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double m = shifted(0, j);
    for (std::size_t i = 1; i < rows; ++i) m = std::min(m, shifted(i, j));
    for (std::size_t i = 0; i < rows; ++i) {
      q.by_column[j * rows + i] = std::exp(-(shifted(i, j) - m) / lambda);
    }
  }
  return q;
}

void apply(const GibbsKernel& q, const std::vector<double>& v, std::vector<double>& out) {
  out.assign(q.rows, 0.0);
  const auto& k = kernels::active();
  for (std::size_t j = 0; j < q.cols; ++j) k.axpy(v[j], q.column(j), out.data(), q.rows);
}

void apply_transpose(const GibbsKernel& q, const std::vector<double>& u,
                     std::vector<double>& out) {
  out.resize(q.cols);
  const auto& k = kernels::active();
  for (std::size_t j = 0; j < q.cols; ++j) out[j] = k.dot(q.column(j), u.data(), q.rows);
}

Matrix assemble(const GibbsKernel& q, const std::vector<double>& u,
                const std::vector<double>& v) {
  Matrix t(q.rows, q.cols);
  for (std::size_t i = 0; i < q.rows; ++i) {
    for (std::size_t j = 0; j < q.cols; ++j) t(i, j) = u[i] * q.column(j)[i] * v[j];
  }
  return t;
}

namespace {

std::vector<double> row_sums(const Matrix& t) {
  std::vector<double> r(t.rows(), 0.0);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (double x : t.row(i)) r[i] += x;
  }
  return r;
}

std::vector<double> col_sums(const Matrix& t) {
  std::vector<double> c(t.cols(), 0.0);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) c[j] += t(i, j);
  }
  return c;
}

void cap_rows(Matrix& t, const std::vector<double>& alpha) {
  const auto r = row_sums(t);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    if (r[i] > alpha[i]) {
      const double s = alpha[i] / r[i];
      for (double& x : t.row(i)) x *= s;
    }
  }
}

// Adds slack_i * deficit_j / sum(slack): fills every column deficit while
// keeping each row within its capacity.
void fill_deficits(Matrix& t, const std::vector<double>& alpha,
                   const std::vector<double>& beta) {
  const auto r = row_sums(t);
  const auto c = col_sums(t);
  std::vector<double> slack(t.rows());
  std::vector<double> deficit(t.cols());
  double total_slack = 0.0;
  double total_deficit = 0.0;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    slack[i] = std::max(0.0, alpha[i] - r[i]);
    total_slack += slack[i];
  }
  for (std::size_t j = 0; j < t.cols(); ++j) {
    deficit[j] = std::max(0.0, beta[j] - c[j]);
    total_deficit += deficit[j];
  }
  if (total_deficit <= 0.0 || total_slack <= 0.0) return;
  const double scale = 1.0 / std::max(total_slack, total_deficit);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) += slack[i] * deficit[j] * scale;
  }
}

}  // namespace

void repair(Matrix& plan, const std::vector<double>& alpha, const std::vector<double>& beta) {
  cap_rows(plan, alpha);
  const auto c = col_sums(plan);
  for (std::size_t j = 0; j < plan.cols(); ++j) {
    if (c[j] > beta[j]) {
      const double s = beta[j] / c[j];
      for (std::size_t i = 0; i < plan.rows(); ++i) plan(i, j) *= s;
    }
  }
  fill_deficits(plan, alpha, beta);
}

}  // namespace detail

}  // namespace fedotp::ot
