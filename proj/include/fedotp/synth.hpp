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

// Synthetic patch datasets with class and domain structure, and the
// federated partitioning schemes.
//
// Class k in domain d has prototype mu_{k,d} = A_d mu_k + b_d. A sample has
// ceil(core_fraction V) patches drawn around mu_{k,d}, the rest around a
// background prototype shared by all classes (also moved by A_d, b_d).

#ifndef FEDOTP_SYNTH_HPP_
#define FEDOTP_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedotp/common.hpp"

namespace fedotp::synth {

struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t patches_per_sample = 16;  // V
  std::size_t raw_dim = 32;
  double core_fraction = 0.5;
  double noise_std = 0.1;
  std::size_t num_domains = 1;
  std::size_t shots_per_class = 8;
  // Pool size per (class, domain).
  std::size_t samples_per_class = 64;
  double prototype_scale = 1.0;   // entry std of mu_k and of the background
  double background_scale = 2.5;  // background prototype relative to prototype_scale
  // A_d = orth(I + domain_shift G), b_d ~ N(0, domain_bias^2); domain 0 is
  // left untransformed.
  double domain_shift = 0.5;
  double domain_bias = 0.1;
  std::uint64_t seed = 0;

  std::size_t core_patches() const;
  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

struct Sample {
  Matrix raw;  // V x d_raw
  std::size_t label = 0;
  std::size_t domain = 0;
};

struct Pool {
  SynthSpec spec;
  std::vector<Sample> samples;
  Matrix prototypes;                 // K x d_raw, mu_k
  std::vector<double> background;    // d_raw
  std::vector<Matrix> transforms;    // A_d
  Matrix biases;                     // D x d_raw, b_d

  std::vector<double> prototype(std::size_t label, std::size_t domain) const;
  std::vector<double> background_in(std::size_t domain) const;
  std::size_t count(std::size_t label) const;
};

Pool gen_dataset(const SynthSpec& spec);

// Nearest expected sample mean, core_fraction mu_{k,d} + (1 - core_fraction)
// times the domain background.
std::size_t nearest_prototype(const Pool& pool, const Sample& sample);

enum class Scheme { kPathological, kDirichlet, kDomain, kDomainDirichlet };

const char* to_string(Scheme scheme);
Scheme parse_scheme(const std::string& name);

struct PartitionSpec {
  Scheme scheme = Scheme::kPathological;
  std::size_t num_clients = 10;
  std::size_t classes_per_client = 2;
  // Per-client class counts for the pathological scheme; overrides
  // classes_per_client when nonempty.
  std::vector<std::size_t> class_counts;
  // Pathological only: deal classes cyclically so a class may be held by
  // several clients (each client's own classes stay distinct).
  bool allow_class_overlap = false;
  double dirichlet_alpha = 0.3;
  double dirichlet_alpha_domain = 0.1;
  // Dirichlet schemes: per-class share of a client's samples used for
  // training; the rest is its test set.
  double train_fraction = 0.5;
  std::uint64_t seed = 0;

  std::size_t class_count(std::size_t client) const;
  void validate() const;
  bool operator==(const PartitionSpec&) const = default;
};

struct ClientDataset {
  std::size_t client_id = 0;
  std::vector<Sample> train;
  std::vector<Sample> test;

  std::size_t m() const noexcept { return train.size(); }
  // Sorted distinct labels over train and test.
  std::vector<std::size_t> classes() const;
  std::vector<std::size_t> domains() const;
};

std::vector<ClientDataset> partition_pathological(const Pool& pool, const PartitionSpec& spec);
std::vector<ClientDataset> partition_dirichlet(const Pool& pool, const PartitionSpec& spec);
// DOMAIN and DOMAIN_DIRICHLET; client i is assigned domain i mod num_domains.
std::vector<ClientDataset> assign_domains(const Pool& pool, const PartitionSpec& spec);
// Dispatches on spec.scheme.
std::vector<ClientDataset> partition(const Pool& pool, const PartitionSpec& spec);

// Line-delimited JSON, one sample per line.
void write_records(std::ostream& out, const std::vector<ClientDataset>& clients);
void write_records(std::ostream& out, const Pool& pool);
std::vector<ClientDataset> read_records(std::istream& in);
void write_records_file(const std::string& path, const std::vector<ClientDataset>& clients);
std::vector<ClientDataset> read_records_file(const std::string& path);

}  // namespace fedotp::synth

#endif  // FEDOTP_SYNTH_HPP_
