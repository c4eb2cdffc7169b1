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

#include <numeric>

#include "fedotp/common.hpp"

namespace fedotp {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInfeasibleMarginals: return "InfeasibleMarginals";
    case ErrorCode::kInstanceTooLarge: return "InstanceTooLarge";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kUnknownClass: return "UnknownClass";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kInsufficientClasses: return "InsufficientClasses";
    case ErrorCode::kEmptyCohort: return "EmptyCohort";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnknownKey: return "UnknownKey";
    case ErrorCode::kInvalidValue: return "InvalidValue";
    case ErrorCode::kGridMismatch: return "GridMismatch";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kUnsupportedIsa: return "UnsupportedIsa";
  }
  return "Unknown";
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw Error(ErrorCode::kShapeMismatch, "ragged matrix literal");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

double Matrix::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool same_shape(const Matrix& a, const Matrix& b) noexcept {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) noexcept {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fedotp
