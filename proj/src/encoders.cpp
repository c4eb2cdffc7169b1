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

#include "fedotp/encoders.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "fedotp/kernels.hpp"

namespace fedotp::encoders {
namespace {

Matrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = dist(rng);
  return m;
}

void require_positive(std::size_t value, const char* name) {
  if (value == 0) throw Error(ErrorCode::kInvalidValue, std::string(name) + " must be >= 1", name);
}

}  // namespace

void normalize_in_place(std::span<double> v) {
  const double n = std::sqrt(kernels::dot(v, v));
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kInvalidValue, "cannot normalize a zero or non-finite vector");
  }
  for (double& x : v) x /= n;
}

void PromptPair::validate() const {
  if (!same_shape(global_prompt, local_prompt)) {
    throw Error(ErrorCode::kShapeMismatch, "global and local prompts differ in shape");
  }
  for (const Matrix* m : {&global_prompt, &local_prompt}) {
    for (double x : m->flat()) {
      if (!std::isfinite(x)) throw Error(ErrorCode::kInvalidValue, "non-finite prompt entry");
    }
  }
}

PromptPair init_prompts(std::uint64_t seed, std::size_t s, std::size_t d_l) {
  require_positive(s, "prompt_length");
  require_positive(d_l, "embed_dim");
  std::mt19937_64 rng(seed);
  Matrix block = gaussian(rng, s, d_l, kPromptInitStd);
  return {block, block};
}

void TextEncoderSpec::validate() const {
  require_positive(num_classes, "num_classes");
  require_positive(prompt_length, "prompt_length");
  require_positive(embed_dim, "embed_dim");
  require_positive(feature_dim, "feature_dim");
  if (!(prompt_gain > 0.0) || !std::isfinite(prompt_gain)) {
    throw Error(ErrorCode::kInvalidValue, "prompt_gain must be positive", "prompt_gain");
  }
}

FrozenTextEncoder::FrozenTextEncoder(const TextEncoderSpec& spec)
    : FrozenTextEncoder(spec, [&] {
        spec.validate();
        std::mt19937_64 rng(mix_seed(spec.seed, 1));
        return gaussian(rng, spec.num_classes, spec.embed_dim, 1.0);
      }()) {}

FrozenTextEncoder::FrozenTextEncoder(const TextEncoderSpec& spec, Matrix class_embeddings)
    : spec_(spec), class_embeddings_(std::move(class_embeddings)) {
  spec_.validate();
  if (class_embeddings_.rows() != spec_.num_classes ||
      class_embeddings_.cols() != spec_.embed_dim) {
    throw Error(ErrorCode::kShapeMismatch, "class embeddings must be K x d_l");
  }
  const std::size_t d_l = spec_.embed_dim;
  const std::size_t d_f = spec_.feature_dim;
  std::mt19937_64 rng(mix_seed(spec_.seed, 2));
  const double class_std = 1.0 / std::sqrt(static_cast<double>(d_l));
  projection_ = Matrix((spec_.prompt_length + 1) * d_l, d_f);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t r = 0; r < projection_.rows(); ++r) {
    const double scale = r < d_l ? class_std : class_std * spec_.prompt_gain;
    for (double& x : projection_.row(r)) x = scale * dist(rng);
  }
  class_pre_ = Matrix(spec_.num_classes, d_f);
  for (std::size_t k = 0; k < spec_.num_classes; ++k) {
    for (std::size_t c = 0; c < d_l; ++c) {
      kernels::axpy(class_embeddings_(k, c), projection_.row(c), class_pre_.row(k));
    }
  }
}

FrozenTextEncoder FrozenTextEncoder::fit(const TextEncoderSpec& spec,
                                         const Matrix& preactivations) {
  spec.validate();
  if (preactivations.rows() != spec.num_classes || preactivations.cols() != spec.feature_dim) {
    throw Error(ErrorCode::kShapeMismatch, "targets must be K x d_f");
  }
  // The projection depends only on the seed, so build it once with dummy
  // embeddings and solve A^T w_k = t_k against its class block.
  FrozenTextEncoder probe(spec, Matrix(spec.num_classes, spec.embed_dim));
  const std::size_t d_l = spec.embed_dim;
  const std::size_t d_f = spec.feature_dim;
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> block(probe.projection_.data(), d_l, d_f);
  Eigen::Map<const RowMajor> targets(preactivations.data(), spec.num_classes, d_f);
  Eigen::MatrixXd at = block.transpose();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(at);
  Eigen::MatrixXd w = cod.solve(Eigen::MatrixXd(targets.transpose()));  // d_l x K
  Matrix embeddings(spec.num_classes, d_l);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t c = 0; c < d_l; ++c) embeddings(k, c) = w(c, k);
  }
  return FrozenTextEncoder(spec, std::move(embeddings));
}

void FrozenTextEncoder::check_prompt(const Matrix& prompt) const {
  if (prompt.rows() != spec_.prompt_length || prompt.cols() != spec_.embed_dim) {
    throw Error(ErrorCode::kShapeMismatch,
                "prompt must be " + std::to_string(spec_.prompt_length) + " x " +
                    std::to_string(spec_.embed_dim));
  }
}

namespace {

std::vector<double> prompt_preactivation(const FrozenTextEncoder& encoder, const Matrix& prompt) {
  encoder.check_prompt(prompt);
  const std::size_t d_l = encoder.embed_dim();
  const Matrix& proj = encoder.projection();
  std::vector<double> z(encoder.feature_dim(), 0.0);
  const auto entries = prompt.flat();
  for (std::size_t r = 0; r < entries.size(); ++r) {
    if (entries[r] != 0.0) kernels::axpy(entries[r], proj.row(d_l + r), z);
  }
  return z;
}

void check_class(const FrozenTextEncoder& encoder, std::size_t class_id) {
  if (class_id >= encoder.num_classes()) {
    throw Error(ErrorCode::kUnknownClass, "class " + std::to_string(class_id) + " out of range");
  }
}

}  // namespace

TextForward encode_text_all(const FrozenTextEncoder& encoder, const Matrix& prompt) {
  const std::vector<double> zp = prompt_preactivation(encoder, prompt);
  const std::size_t K = encoder.num_classes();
  const std::size_t d_f = encoder.feature_dim();
  TextForward out{Matrix(K, d_f), Matrix(K, d_f), std::vector<double>(K)};
  for (std::size_t k = 0; k < K; ++k) {
    const auto pre = encoder.class_preactivations().row(k);
    auto a = out.activations.row(k);
    for (std::size_t j = 0; j < d_f; ++j) a[j] = std::tanh(pre[j] + zp[j]);
    out.norms[k] = std::sqrt(kernels::dot(a, a));
    auto h = out.features.row(k);
    for (std::size_t j = 0; j < d_f; ++j) h[j] = a[j] / out.norms[k];
  }
  return out;
}

std::vector<double> encode_text(const FrozenTextEncoder& encoder, const Matrix& prompt,
                                std::size_t class_id) {
  check_class(encoder, class_id);
  const std::vector<double> zp = prompt_preactivation(encoder, prompt);
  const auto pre = encoder.class_preactivations().row(class_id);
  std::vector<double> h(zp.size());
  for (std::size_t j = 0; j < h.size(); ++j) h[j] = std::tanh(pre[j] + zp[j]);
  normalize_in_place(h);
  return h;
}

Matrix backward_text(const FrozenTextEncoder& encoder, const TextForward& forward,
                     const Matrix& grad_features) {
  if (!same_shape(grad_features, forward.features)) {
    throw Error(ErrorCode::kShapeMismatch, "feature gradient must be K x d_f");
  }
  const std::size_t d_f = encoder.feature_dim();
  std::vector<double> gz(d_f, 0.0);
  for (std::size_t k = 0; k < forward.features.rows(); ++k) {
    const auto g = grad_features.row(k);
    const auto h = forward.features.row(k);
    const auto a = forward.activations.row(k);
    const double hg = kernels::dot(h, g);
    for (std::size_t j = 0; j < d_f; ++j) {
      gz[j] += (g[j] - h[j] * hg) / forward.norms[k] * (1.0 - a[j] * a[j]);
    }
  }
  const std::size_t d_l = encoder.embed_dim();
  Matrix grad(encoder.prompt_length(), d_l);
  auto out = grad.flat();
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = kernels::dot(encoder.projection().row(d_l + r), gz);
  }
  return grad;
}

Matrix text_jacobian(const FrozenTextEncoder& encoder, const Matrix& prompt,
                     std::size_t class_id) {
  check_class(encoder, class_id);
  const std::vector<double> zp = prompt_preactivation(encoder, prompt);
  const std::size_t d_f = encoder.feature_dim();
  const std::size_t d_l = encoder.embed_dim();
  const auto pre = encoder.class_preactivations().row(class_id);
  std::vector<double> a(d_f), h(d_f);
  for (std::size_t j = 0; j < d_f; ++j) a[j] = std::tanh(pre[j] + zp[j]);
  const double n = std::sqrt(kernels::dot(a, a));
  for (std::size_t j = 0; j < d_f; ++j) h[j] = a[j] / n;

  const std::size_t entries = prompt.size();
  Matrix jac(d_f, entries);
  std::vector<double> da(d_f);
  for (std::size_t r = 0; r < entries; ++r) {
    const auto p = encoder.projection().row(d_l + r);
    for (std::size_t j = 0; j < d_f; ++j) da[j] = (1.0 - a[j] * a[j]) * p[j];
    const double hda = kernels::dot(h, da);
    for (std::size_t i = 0; i < d_f; ++i) jac(i, r) = (da[i] - h[i] * hda) / n;
  }
  return jac;
}

void ImageEncoderSpec::validate() const {
  require_positive(raw_dim, "raw_dim");
  require_positive(feature_dim, "feature_dim");
  require_positive(patches, "patches");
}

FrozenImageEncoder::FrozenImageEncoder(const ImageEncoderSpec& spec) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(mix_seed(spec_.seed, 3));
  projection_ = gaussian(rng, spec_.raw_dim, spec_.feature_dim,
                         1.0 / std::sqrt(static_cast<double>(spec_.raw_dim)));
}

std::vector<double> FrozenImageEncoder::project(std::span<const double> raw) const {
  if (raw.size() != spec_.raw_dim) {
    throw Error(ErrorCode::kShapeMismatch, "raw vector must have length d_raw");
  }
  std::vector<double> out(spec_.feature_dim, 0.0);
  for (std::size_t r = 0; r < raw.size(); ++r) kernels::axpy(raw[r], projection_.row(r), out);
  return out;
}

FeatureMap encode_image(const FrozenImageEncoder& encoder, const Matrix& raw_patches) {
  if (raw_patches.rows() != encoder.patches() || raw_patches.cols() != encoder.raw_dim()) {
    throw Error(ErrorCode::kShapeMismatch,
                "raw patches must be " + std::to_string(encoder.patches()) + " x " +
                    std::to_string(encoder.raw_dim()));
  }
  const std::size_t V = encoder.patches();
  const std::size_t d_f = encoder.feature_dim();
  FeatureMap map{Matrix(V, d_f), std::vector<double>(d_f, 0.0)};
  for (std::size_t v = 0; v < V; ++v) {
    const std::vector<double> g = encoder.project(raw_patches.row(v));
    kernels::axpy(1.0 / static_cast<double>(V), g, map.class_token);
    std::copy(g.begin(), g.end(), map.patches.row(v).begin());
    normalize_in_place(map.patches.row(v));
  }
  normalize_in_place(map.class_token);
  return map;
}

}  // namespace fedotp::encoders
