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

// Exporters for learning curves, run summaries and transport-plan heatmap
// data. Every export is a pure function of its inputs.

#ifndef FEDOTP_REPORT_HPP_
#define FEDOTP_REPORT_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedotp/federated.hpp"
#include "fedotp/ot.hpp"

namespace fedotp::report {

struct CurvePoint {
  std::size_t round = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  double mean_loss = 0.0;
  double solver_mean_iters = 0.0;
};

inline constexpr const char* kCurveHeader = "round,mean_acc,std_acc,mean_loss,solver_mean_iters";

std::vector<CurvePoint> curve_points(std::span<const fed::RoundReport> reports);

// Header plus one row per report, six decimals, newline-terminated.
// Throws kInvalidValue for an empty list or rounds that do not increase.
std::string curves_csv(std::span<const fed::RoundReport> reports);
void export_curves(std::span<const fed::RoundReport> reports, const std::string& path);

struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct PlanMetadata {
  double gamma = 0.0;
  double lambda = 0.0;
};

// JSON document with `global_column` and `local_column` as rows x cols
// arrays (row-major over patches) and the metadata. Throws kGridMismatch
// unless rows * cols = V and the plan has two columns.
std::string plan_json(const ot::TransportPlan& plan, PatchGrid grid, const PlanMetadata& meta);
void export_plan(const ot::TransportPlan& plan, PatchGrid grid, const PlanMetadata& meta,
                 const std::string& path);

inline constexpr double kSupportThreshold = 1e-4;

// Number of entries strictly above `threshold`.
std::size_t support_size(const Matrix& plan, double threshold = kSupportThreshold);

// Config, per-round curves and final per-client accuracies as JSON.
std::string summary_json(const fed::ExperimentConfig& config, const fed::ExperimentResult& result);
void export_summary(const fed::ExperimentConfig& config, const fed::ExperimentResult& result,
                    const std::string& path);

// Writes `content` to `path`, creating parent directories. Throws kIoError.
void write_text(const std::string& path, const std::string& content);

}  // namespace fedotp::report

#endif  // FEDOTP_REPORT_HPP_
