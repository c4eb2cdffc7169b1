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

#include "fedotp/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fedotp/config.hpp"
#include "json.hpp"

namespace fedotp::report {
namespace {

using nlohmann::ordered_json;

ordered_json grid_array(const Matrix& plan, std::size_t column, PatchGrid grid) {
  ordered_json out = ordered_json::array();
  for (std::size_t r = 0; r < grid.rows; ++r) {
    ordered_json row = ordered_json::array();
    for (std::size_t c = 0; c < grid.cols; ++c) row.push_back(plan(r * grid.cols + c, column));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

std::vector<CurvePoint> curve_points(std::span<const fed::RoundReport> reports) {
  std::vector<CurvePoint> out;
  out.reserve(reports.size());
  for (const auto& r : reports) {
    out.push_back({r.round, r.mean_acc, r.std_acc, r.mean_loss, r.solver_mean_iters});
  }
  return out;
}

std::string curves_csv(std::span<const fed::RoundReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::kInvalidValue, "no round reports to export");
  std::string out = std::string(kCurveHeader) + "\n";
  const auto points = curve_points(reports);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const CurvePoint& p = points[i];
    if (i > 0 && p.round <= points[i - 1].round) {
      throw Error(ErrorCode::kInvalidValue,
                  "round " + std::to_string(p.round) + " does not follow round " +
                      std::to_string(points[i - 1].round));
    }
    char line[256];
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f\n", p.round, p.mean_acc,
                  p.std_acc, p.mean_loss, p.solver_mean_iters);
    out += line;
  }
  return out;
}

void export_curves(std::span<const fed::RoundReport> reports, const std::string& path) {
  write_text(path, curves_csv(reports));
}

std::string plan_json(const ot::TransportPlan& plan, PatchGrid grid, const PlanMetadata& meta) {
  const Matrix& t = plan.plan;
  if (t.cols() != 2) {
    throw Error(ErrorCode::kGridMismatch,
                "plan has " + std::to_string(t.cols()) + " columns, expected 2");
  }
  if (grid.rows * grid.cols != t.rows()) {
    throw Error(ErrorCode::kGridMismatch,
                "grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                    " does not cover " + std::to_string(t.rows()) + " patches");
  }
  ordered_json doc;
  doc["gamma"] = meta.gamma;
  doc["lambda"] = meta.lambda;
  doc["converged"] = plan.converged;
  doc["iterations"] = plan.iterations;
  doc["grid"] = {grid.rows, grid.cols};
  doc["global_column"] = grid_array(t, 0, grid);
  doc["local_column"] = grid_array(t, 1, grid);
  return doc.dump(2) + "\n";
}

void export_plan(const ot::TransportPlan& plan, PatchGrid grid, const PlanMetadata& meta,
                 const std::string& path) {
  write_text(path, plan_json(plan, grid, meta));
}

std::size_t support_size(const Matrix& plan, double threshold) {
  std::size_t n = 0;
  for (double x : plan.flat()) n += x > threshold;
  return n;
}

std::string summary_json(const fed::ExperimentConfig& config,
                         const fed::ExperimentResult& result) {
  ordered_json doc;
  doc["mode"] = fed::to_string(config.method);
  doc["seed"] = config.seed;
  doc["config"] = config::serialize_config(config);
  doc["initial_mean_acc"] = result.initial.mean_acc;
  doc["final_mean_acc"] = result.final.mean_acc;
  doc["final_std_acc"] = result.final.std_acc;
  doc["final_mean_loss"] = result.final.mean_loss;
  doc["final_client_accuracy"] = result.final.client_accuracy;
  ordered_json rounds = ordered_json::array();
  for (const auto& r : result.rounds) {
    rounds.push_back({{"round", r.round},
                      {"sampled", r.sampled},
                      {"mean_acc", r.mean_acc},
                      {"std_acc", r.std_acc},
                      {"mean_loss", r.mean_loss},
                      {"mean_train_loss", r.mean_train_loss},
                      {"solver_mean_iters", r.solver_mean_iters},
                      {"solver_nonconverged", r.solver_nonconverged},
                      {"solver_underflow", r.solver_underflow}});
  }
  doc["rounds"] = std::move(rounds);
  return doc.dump(2) + "\n";
}

void export_summary(const fed::ExperimentConfig& config, const fed::ExperimentResult& result,
                    const std::string& path) {
  write_text(path, summary_json(config, result));
}

void write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'", path);
  out << content;
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path + "'", path);
}

}  // namespace fedotp::report
