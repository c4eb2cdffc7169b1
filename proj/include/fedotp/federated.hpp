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

// Federated protocol: local training of [global, local] prompt pairs,
// mass-weighted aggregation of the global block, round orchestration and
// personalized evaluation.

#ifndef FEDOTP_FEDERATED_HPP_
#define FEDOTP_FEDERATED_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedotp/alignment.hpp"
#include "fedotp/common.hpp"
#include "fedotp/encoders.hpp"
#include "fedotp/ot.hpp"
#include "fedotp/synth.hpp"

namespace fedotp::fed {

enum class Method {
  kFedOtp,         // unbalanced OT over [global, local], global aggregated
  kSharedOnly,     // class token with the global prompt only, local frozen
  kLocalOnly,      // class token with the local prompt only, no federation
  kSimilarityAvg,  // FedOTP with similarity averaging
  kClassicalOt,    // FedOTP with balanced OT
};

const char* to_string(Method method);
Method parse_method(const std::string& name);

struct ModelSpec {
  std::size_t prompt_length = 16;  // s
  std::size_t embed_dim = 32;      // d_l
  std::size_t feature_dim = 24;    // d_f
  double prompt_gain = 2.0;
  // Zero-prompt text feature of class k points at
  // normalize(fidelity a_k + (1 - fidelity) r_k), a_k the image feature of the
  // class prototype and r_k a random unit vector.
  double text_fidelity = 0.5;
  // Pre-activation length of the zero-prompt text features.
  double text_scale = 1.0;

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

// Experiment defaults differ from the bare generator/partition defaults:
// pool size is derived (samples_per_class = 0) and the pathological scheme
// may reuse a class across clients when N * classes_per_client > K.
synth::SynthSpec default_experiment_data();
synth::PartitionSpec default_experiment_partition();

struct ExperimentConfig {
  synth::SynthSpec data = default_experiment_data();
  synth::PartitionSpec partition = default_experiment_partition();
  ModelSpec model;
  alignment::MatchingMode matching;
  ot::SolverConfig solver;

  Method method = Method::kFedOtp;
  std::optional<std::size_t> rounds;           // T; 10, or 150 when N >= 100
  std::optional<std::size_t> local_epochs;     // R; 5, or 1 when N >= 100
  std::optional<double> participation;         // 1.0, or 0.1 when N >= 100
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t test_batch_size = 100;
  // Pathological scheme: test samples per class per holding client, used
  // when data.samples_per_class is 0.
  std::size_t test_per_class = 32;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  std::size_t num_clients() const noexcept { return partition.num_clients; }
  std::size_t resolved_rounds() const;
  std::size_t resolved_epochs() const;
  double resolved_participation() const;
  // Matching mode the method trains and evaluates with.
  alignment::MatchingMode method_matching() const;

  // Throws Error(kInvalidValue) naming the first offending key;
  // build_environment reports the same failure as kConfigInvalid.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

struct ClientState {
  std::size_t client_id = 0;
  encoders::PromptPair prompts;
  synth::ClientDataset dataset;
  std::vector<alignment::Example> train;  // encoded dataset.train
  std::vector<alignment::Example> test;   // encoded dataset.test
  double learning_rate = 0.001;
};

struct ServerState {
  Matrix global_prompt;
  std::size_t round = 0;
  double participation = 1.0;
};

// Which prompt blocks a method updates.
struct TrainMask {
  bool global = true;
  bool local = true;
};

struct LocalTraining {
  const encoders::FrozenTextEncoder* text = nullptr;
  alignment::MatchingMode mode;
  ot::SolverConfig solver;
  TrainMask mask;
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainLog {
  std::vector<double> step_losses;
  alignment::SolverStats stats;
};

ClientState local_train(const ClientState& state, const Matrix& global_prompt,
                        const LocalTraining& setup, std::size_t round, TrainLog* log = nullptr);

// What a client sends to the server: its trained global block and sample count.
struct ClientUpdate {
  std::size_t client_id = 0;
  Matrix global_prompt;
  std::size_t num_samples = 0;
};

ClientUpdate make_update(const ClientState& state);
std::vector<std::uint8_t> serialize_update(const ClientUpdate& update);
ClientUpdate deserialize_update(std::span<const std::uint8_t> bytes);

// m_i / sum_j m_j over the cohort.
std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates);
Matrix aggregate_global(std::span<const ClientUpdate> updates);

// ceil(fraction N) distinct client indices, sorted; stream seeded by
// (seed, round).
std::vector<std::size_t> sample_clients(std::size_t num_clients, double fraction,
                                        std::uint64_t seed, std::size_t round);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t samples = 0;
  alignment::SolverStats stats;
};

Evaluation evaluate_personalized(const ClientState& client,
                                 const encoders::FrozenTextEncoder& text,
                                 const alignment::MatchingMode& mode,
                                 const ot::SolverConfig& solver);

struct RoundReport {
  std::size_t round = 0;
  std::vector<std::size_t> sampled;
  std::vector<double> client_accuracy;
  std::vector<double> client_loss;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  double mean_loss = 0.0;
  double mean_train_loss = 0.0;
  double solver_mean_iters = 0.0;  // over this round's training solves
  std::size_t solver_nonconverged = 0;
  std::size_t solver_underflow = 0;
  std::vector<double> aggregation_weights;
  double wall_ms = 0.0;
};

struct RoundSetup {
  LocalTraining training;
  ot::SolverConfig eval_solver;
  std::uint64_t seed = 0;
  bool aggregate = true;
};

struct RoundResult {
  ServerState server;
  RoundReport report;
};

RoundResult run_round(const ServerState& server, std::vector<ClientState>& clients,
                      const RoundSetup& setup);

// Evaluates every client and fills the accuracy fields of a report.
RoundReport evaluate_all(const std::vector<ClientState>& clients,
                         const encoders::FrozenTextEncoder& text,
                         const alignment::MatchingMode& mode, const ot::SolverConfig& solver,
                         std::size_t round);

// Everything a run needs, built from the config alone.
struct Environment {
  ExperimentConfig config;
  synth::Pool pool;
  encoders::FrozenImageEncoder image;
  encoders::FrozenTextEncoder text;
  std::vector<ClientState> clients;
  ServerState server;
};

Environment build_environment(const ExperimentConfig& config);

std::vector<alignment::Example> encode_samples(const encoders::FrozenImageEncoder& image,
                                               std::span<const synth::Sample> samples);

RoundSetup round_setup(const Environment& env);

struct ExperimentResult {
  RoundReport initial;              // evaluation before any round
  std::vector<RoundReport> rounds;  // one per round
  RoundReport final;                // last round, or initial when T = 0
};

ExperimentResult run_experiment(const ExperimentConfig& config);
// Runs on a prepared environment and leaves the trained state in it.
ExperimentResult run_experiment(Environment& env);

}  // namespace fedotp::fed

#endif  // FEDOTP_FEDERATED_HPP_
