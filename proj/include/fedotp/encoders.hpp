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

// Frozen stand-ins for the text and image towers and the learnable prompts.
//
// Text:  h_k(P) = normalize(tanh(Proj^T [w_k ; vec(P)]))
// Image: G_m = rows of X Proj_img, each normalized; G_c = normalize(mean rows)

#ifndef FEDOTP_ENCODERS_HPP_
#define FEDOTP_ENCODERS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedotp/common.hpp"

namespace fedotp::encoders {

struct PromptPair {
  Matrix global_prompt;  // s x d_l
  Matrix local_prompt;   // s x d_l

  std::size_t length() const noexcept { return global_prompt.rows(); }
  std::size_t width() const noexcept { return global_prompt.cols(); }
  void validate() const;
};

// Both blocks from one N(0, 0.02^2) draw.
PromptPair init_prompts(std::uint64_t seed, std::size_t s, std::size_t d_l);

inline constexpr double kPromptInitStd = 0.02;

struct TextEncoderSpec {
  std::size_t num_classes = 10;
  std::size_t prompt_length = 16;  // s
  std::size_t embed_dim = 32;      // d_l
  std::size_t feature_dim = 24;    // d_f
  // Scale of the projection rows that read the prompt slots.
  double prompt_gain = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

class FrozenTextEncoder {
 public:
  // Class embeddings drawn N(0, 1).
  explicit FrozenTextEncoder(const TextEncoderSpec& spec);
  // Class embeddings given explicitly (K x d_l).
  FrozenTextEncoder(const TextEncoderSpec& spec, Matrix class_embeddings);

  // Class embeddings chosen so that, with a zero prompt, the pre-activation
  // of class k is as close as possible to row k of `preactivations` (K x d_f)
  // in the least-squares sense (minimum-norm when d_l >= d_f).
  static FrozenTextEncoder fit(const TextEncoderSpec& spec, const Matrix& preactivations);

  const TextEncoderSpec& spec() const noexcept { return spec_; }
  std::size_t num_classes() const noexcept { return spec_.num_classes; }
  std::size_t prompt_length() const noexcept { return spec_.prompt_length; }
  std::size_t embed_dim() const noexcept { return spec_.embed_dim; }
  std::size_t feature_dim() const noexcept { return spec_.feature_dim; }

  const Matrix& class_embeddings() const noexcept { return class_embeddings_; }
  // (s + 1) d_l x d_f. Rows [0, d_l) read the class slot; row d_l + a d_l + c
  // reads entry (a, c) of the prompt.
  const Matrix& projection() const noexcept { return projection_; }
  // K x d_f, class part of the pre-activation (projection applied to w_k).
  const Matrix& class_preactivations() const noexcept { return class_pre_; }

  void check_prompt(const Matrix& prompt) const;

 private:
  TextEncoderSpec spec_;
  Matrix class_embeddings_;
  Matrix projection_;
  Matrix class_pre_;
};

std::vector<double> encode_text(const FrozenTextEncoder& encoder, const Matrix& prompt,
                                std::size_t class_id);

// Forward pass for every class at once; keeps what the backward pass needs.
struct TextForward {
  Matrix features;     // K x d_f, unit rows
  Matrix activations;  // K x d_f, tanh(z)
  std::vector<double> norms;
};

TextForward encode_text_all(const FrozenTextEncoder& encoder, const Matrix& prompt);

// Vector-Jacobian product: given dL/dh_k for every class (K x d_f), returns
// dL/dprompt (s x d_l).
Matrix backward_text(const FrozenTextEncoder& encoder, const TextForward& forward,
                     const Matrix& grad_features);

// Dense Jacobian dh_k / dvec(prompt), d_f x (s d_l).
Matrix text_jacobian(const FrozenTextEncoder& encoder, const Matrix& prompt,
                     std::size_t class_id);

struct ImageEncoderSpec {
  std::size_t raw_dim = 32;      // d_raw
  std::size_t feature_dim = 24;  // d_f
  std::size_t patches = 16;      // V
  std::uint64_t seed = 1;

  void validate() const;
};

class FrozenImageEncoder {
 public:
  explicit FrozenImageEncoder(const ImageEncoderSpec& spec);

  const ImageEncoderSpec& spec() const noexcept { return spec_; }
  std::size_t raw_dim() const noexcept { return spec_.raw_dim; }
  std::size_t feature_dim() const noexcept { return spec_.feature_dim; }
  std::size_t patches() const noexcept { return spec_.patches; }
  const Matrix& patch_projection() const noexcept { return projection_; }

  // Unnormalized projection of one raw vector.
  std::vector<double> project(std::span<const double> raw) const;

 private:
  ImageEncoderSpec spec_;
  Matrix projection_;  // d_raw x d_f
};

struct FeatureMap {
  Matrix patches;                   // V x d_f, unit rows
  std::vector<double> class_token;  // d_f, unit

  std::size_t size() const noexcept { return patches.rows(); }
  std::size_t dim() const noexcept { return patches.cols(); }
};

FeatureMap encode_image(const FrozenImageEncoder& encoder, const Matrix& raw_patches);

// Scales `v` to unit L2 norm; throws kInvalidValue on a zero vector.
void normalize_in_place(std::span<double> v);

}  // namespace fedotp::encoders

#endif  // FEDOTP_ENCODERS_HPP_
