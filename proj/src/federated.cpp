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

#include "fedotp/federated.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "fedotp/kernels.hpp"

namespace fedotp::fed {
namespace {

constexpr char kUpdateMagic[8] = {'F', 'O', 'T', 'P', 'U', 'P', 'D', '1'};

enum SeedStream : std::uint64_t {
  kDataStream = 1,
  kPartitionStream = 2,
  kImageStream = 3,
  kTextStream = 4,
  kPromptStream = 5,
  kSamplingStream = 6,
  kBatchStream = 7,
};

void invalid(bool bad, const char* key, const std::string& what) {
  if (bad) throw Error(ErrorCode::kInvalidValue, std::string(key) + " " + what, key);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& at) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(in[at++]) << (8 * i);
  return x;
}

TrainMask mask_for(Method method) {
  switch (method) {
    case Method::kSharedOnly: return {true, false};
    case Method::kLocalOnly: return {false, true};
    default: return {true, true};
  }
}

std::size_t auto_samples_per_class(const ExperimentConfig& c) {
  const std::size_t per_holder = c.data.shots_per_class + c.test_per_class;
  const std::size_t N = c.num_clients();
  if (c.partition.scheme == synth::Scheme::kPathological) {
    std::size_t slots = 0;
    for (std::size_t i = 0; i < N; ++i) slots += c.partition.class_count(i);
    const std::size_t K = c.data.num_classes;
    const std::size_t holders =
        c.partition.allow_class_overlap ? std::max<std::size_t>(1, (slots + K - 1) / K) : 1;
    return holders * per_holder;
  }
  const std::size_t D = c.data.num_domains;
  return per_holder * ((N + D - 1) / D);
}

encoders::FrozenTextEncoder make_text_encoder(const ExperimentConfig& c, const synth::Pool& pool,
                                              const encoders::FrozenImageEncoder& image) {
  encoders::TextEncoderSpec spec;
  spec.num_classes = c.data.num_classes;
  spec.prompt_length = c.model.prompt_length;
  spec.embed_dim = c.model.embed_dim;
  spec.feature_dim = c.model.feature_dim;
  spec.prompt_gain = c.model.prompt_gain;
  spec.seed = mix_seed(c.seed, kTextStream);

  std::mt19937_64 rng(mix_seed(spec.seed, 100));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double f = c.model.text_fidelity;
  Matrix targets(spec.num_classes, spec.feature_dim);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    std::vector<double> anchor = image.project(pool.prototypes.row(k));
    encoders::normalize_in_place(anchor);
    std::vector<double> noise(spec.feature_dim);
    for (double& x : noise) x = normal(rng);
    encoders::normalize_in_place(noise);
    auto t = targets.row(k);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = f * anchor[j] + (1.0 - f) * noise[j];
    encoders::normalize_in_place(t);
    for (double& x : t) x *= c.model.text_scale;
  }
  return encoders::FrozenTextEncoder::fit(spec, targets);
}

}  // namespace

const char* to_string(Method method) {
  switch (method) {
    case Method::kFedOtp: return "fedotp";
    case Method::kSharedOnly: return "shared_only";
    case Method::kLocalOnly: return "local_only";
    case Method::kSimilarityAvg: return "similarity_avg";
    case Method::kClassicalOt: return "classical_ot";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (auto m : {Method::kFedOtp, Method::kSharedOnly, Method::kLocalOnly,
                 Method::kSimilarityAvg, Method::kClassicalOt}) {
    if (name == to_string(m)) return m;
  }
  throw Error(ErrorCode::kInvalidValue, "unknown mode '" + name + "'", "mode");
}

void ModelSpec::validate() const {
  invalid(prompt_length == 0, "prompt_length", "must be >= 1");
  invalid(embed_dim == 0, "embed_dim", "must be >= 1");
  invalid(feature_dim == 0, "feature_dim", "must be >= 1");
  invalid(!(prompt_gain > 0.0), "prompt_gain", "must be > 0");
  invalid(!(text_fidelity >= 0.0 && text_fidelity <= 1.0), "text_fidelity", "must lie in [0, 1]");
  invalid(!(text_scale > 0.0), "text_scale", "must be > 0");
}

std::size_t ExperimentConfig::resolved_rounds() const {
  return rounds.value_or(num_clients() >= 100 ? 150 : 10);
}

std::size_t ExperimentConfig::resolved_epochs() const {
  return local_epochs.value_or(num_clients() >= 100 ? 1 : 5);
}

double ExperimentConfig::resolved_participation() const {
  return participation.value_or(num_clients() >= 100 ? 0.1 : 1.0);
}

alignment::MatchingMode ExperimentConfig::method_matching() const {
  alignment::MatchingMode m = matching;
  switch (method) {
    case Method::kFedOtp: m.variant = alignment::MatchingVariant::kUnbalancedOt; break;
    case Method::kSimilarityAvg: m.variant = alignment::MatchingVariant::kSimilarityAvg; break;
    case Method::kClassicalOt: m.variant = alignment::MatchingVariant::kClassicalOt; break;
    case Method::kSharedOnly:
      m.variant = alignment::MatchingVariant::kClassToken;
      m.token_slot = alignment::PromptSlot::kGlobal;
      break;
    case Method::kLocalOnly:
      m.variant = alignment::MatchingVariant::kClassToken;
      m.token_slot = alignment::PromptSlot::kLocal;
      break;
  }
  return m;
}

synth::SynthSpec default_experiment_data() {
  synth::SynthSpec s;
  s.samples_per_class = 0;
  return s;
}

synth::PartitionSpec default_experiment_partition() {
  synth::PartitionSpec p;
  p.allow_class_overlap = true;
  return p;
}

void ExperimentConfig::validate() const {
  synth::SynthSpec resolved = data;
  if (resolved.samples_per_class == 0) resolved.samples_per_class = 1;
  resolved.validate();
  partition.validate();
  model.validate();
  matching.validate();
  solver.validate();
  invalid(!(learning_rate >= 0.0 && std::isfinite(learning_rate)), "learning_rate",
          "must be >= 0");
  invalid(batch_size == 0, "batch_size", "must be >= 1");
  invalid(test_batch_size == 0, "test_batch_size", "must be >= 1");
  invalid(test_per_class == 0, "test_per_class", "must be >= 1");
  invalid(participation && !(*participation > 0.0 && *participation <= 1.0), "participation",
          "must lie in (0, 1]");
  invalid(output_dir.empty(), "output_dir", "must not be empty");
}

ClientState local_train(const ClientState& state, const Matrix& global_prompt,
                        const LocalTraining& setup, std::size_t round, TrainLog* log) {
  if (!same_shape(global_prompt, state.prompts.global_prompt)) {
    throw Error(ErrorCode::kShapeMismatch, "incoming global prompt has the wrong shape");
  }
  if (setup.text == nullptr) throw Error(ErrorCode::kInvalidValue, "no text encoder");
  ClientState out = state;
  out.prompts.global_prompt = global_prompt;
  if (setup.epochs == 0) return out;
  if (out.train.empty()) throw Error(ErrorCode::kInvalidValue, "client has no training data");

  std::mt19937_64 rng(mix_seed(mix_seed(setup.seed, state.client_id), round));
  std::vector<std::size_t> order(out.train.size());
  std::iota(order.begin(), order.end(), 0);
  const double eta = out.learning_rate;
  for (std::size_t epoch = 0; epoch < setup.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += setup.batch_size) {
      const std::size_t stop = std::min(order.size(), start + setup.batch_size);
      alignment::Batch batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&out.train[order[i]]);
      const alignment::PromptGradient g =
          alignment::grad_prompts(batch, out.prompts, *setup.text, setup.mode, setup.solver);
      if (setup.mask.global) kernels::axpy(-eta, g.global.flat(), out.prompts.global_prompt.flat());
      if (setup.mask.local) kernels::axpy(-eta, g.local.flat(), out.prompts.local_prompt.flat());
      if (log) {
        log->step_losses.push_back(g.loss);
        log->stats.merge(g.stats);
      }
    }
  }
  return out;
}

ClientUpdate make_update(const ClientState& state) {
  return {state.client_id, state.prompts.global_prompt, state.train.size()};
}

std::vector<std::uint8_t> serialize_update(const ClientUpdate& update) {
  std::vector<std::uint8_t> out(kUpdateMagic, kUpdateMagic + 8);
  put_u64(out, update.client_id);
  put_u64(out, update.num_samples);
  put_u64(out, update.global_prompt.rows());
  put_u64(out, update.global_prompt.cols());
  for (double x : update.global_prompt.flat()) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    put_u64(out, bits);
  }
  return out;
}

ClientUpdate deserialize_update(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 40 || !std::equal(kUpdateMagic, kUpdateMagic + 8, bytes.begin())) {
    throw Error(ErrorCode::kParseError, "not a client update message");
  }
  std::size_t at = 8;
  ClientUpdate u;
  u.client_id = get_u64(bytes, at);
  u.num_samples = get_u64(bytes, at);
  const std::uint64_t rows = get_u64(bytes, at);
  const std::uint64_t cols = get_u64(bytes, at);
  if (bytes.size() != 40 + 8 * rows * cols) {
    throw Error(ErrorCode::kParseError, "client update length does not match its shape");
  }
  u.global_prompt = Matrix(rows, cols);
  for (double& x : u.global_prompt.flat()) {
    const std::uint64_t bits = get_u64(bytes, at);
    std::memcpy(&x, &bits, sizeof x);
  }
  return u;
}

std::vector<double> aggregation_weights(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw Error(ErrorCode::kEmptyCohort, "no client updates to aggregate");
  double total = 0.0;
  for (const auto& u : updates) total += static_cast<double>(u.num_samples);
  if (!(total > 0.0)) throw Error(ErrorCode::kEmptyCohort, "cohort holds no samples");
  std::vector<double> w;
  for (const auto& u : updates) w.push_back(static_cast<double>(u.num_samples) / total);
  return w;
}

Matrix aggregate_global(std::span<const ClientUpdate> updates) {
  aggregation_weights(updates);
  const Matrix& first = updates.front().global_prompt;
  for (const auto& u : updates) {
    if (!same_shape(u.global_prompt, first)) {
      throw Error(ErrorCode::kShapeMismatch,
                  "update from client " + std::to_string(u.client_id) + " has the wrong shape");
    }
  }
  if (updates.size() == 1) return first;
  Matrix out(first.rows(), first.cols());
  double total = 0.0;
  for (const auto& u : updates) {
    const double m = static_cast<double>(u.num_samples);
    total += m;
    kernels::scalar::axpy(m, u.global_prompt.data(), out.data(), out.size());
  }
  for (double& x : out.flat()) x /= total;
  return out;
}

std::vector<std::size_t> sample_clients(std::size_t num_clients, double fraction,
                                        std::uint64_t seed, std::size_t round) {
  if (num_clients == 0) throw Error(ErrorCode::kEmptyCohort, "no clients to sample");
  const double want = std::ceil(fraction * static_cast<double>(num_clients) - 1e-9);
  const std::size_t count =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(want, 1.0)), 1, num_clients);
  std::vector<std::size_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  if (count < num_clients) {
    std::mt19937_64 rng(mix_seed(seed, round));
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, num_clients - 1);
      std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

Evaluation evaluate_personalized(const ClientState& client,
                                 const encoders::FrozenTextEncoder& text,
                                 const alignment::MatchingMode& mode,
                                 const ot::SolverConfig& solver) {
  if (client.test.empty()) {
    throw Error(ErrorCode::kInvalidValue,
                "client " + std::to_string(client.client_id) + " has no test data");
  }
  const alignment::PromptFeatures features = alignment::encode_prompts(text, client.prompts);
  Evaluation e;
  std::size_t right = 0;
  for (const auto& ex : client.test) {
    const alignment::ClassScore s = alignment::score(ex.features, features, mode, solver, &e.stats);
    right += alignment::argmax(s.probabilities) == ex.label;
    e.loss += alignment::ce_loss(s.probabilities, ex.label);
  }
  e.samples = client.test.size();
  e.accuracy = static_cast<double>(right) / static_cast<double>(e.samples);
  e.loss /= static_cast<double>(e.samples);
  return e;
}

RoundReport evaluate_all(const std::vector<ClientState>& clients,
                         const encoders::FrozenTextEncoder& text,
                         const alignment::MatchingMode& mode, const ot::SolverConfig& solver,
                         std::size_t round) {
  RoundReport r;
  r.round = round;
  for (const ClientState& c : clients) {
    const Evaluation e = evaluate_personalized(c, text, mode, solver);
    r.client_accuracy.push_back(e.accuracy);
    r.client_loss.push_back(e.loss);
  }
  const double n = static_cast<double>(clients.size());
  r.mean_acc = std::accumulate(r.client_accuracy.begin(), r.client_accuracy.end(), 0.0) / n;
  r.mean_loss = std::accumulate(r.client_loss.begin(), r.client_loss.end(), 0.0) / n;
  double var = 0.0;
  for (double a : r.client_accuracy) var += (a - r.mean_acc) * (a - r.mean_acc);
  r.std_acc = std::sqrt(var / n);
  return r;
}

RoundResult run_round(const ServerState& server, std::vector<ClientState>& clients,
                      const RoundSetup& setup) {
  if (clients.empty()) throw Error(ErrorCode::kEmptyCohort, "no clients");
  const auto start = std::chrono::steady_clock::now();
  RoundResult out{server, {}};
  out.server.round = server.round + 1;
  const std::size_t t = out.server.round;

  const auto sampled = sample_clients(clients.size(), server.participation, setup.seed, t);
  std::vector<ClientUpdate> updates;
  TrainLog log;
  for (std::size_t i : sampled) {
    clients[i] = local_train(clients[i], server.global_prompt, setup.training, t, &log);
    // The server sees only the decoded message.
    updates.push_back(deserialize_update(serialize_update(make_update(clients[i]))));
  }
  std::vector<double> weights;
  if (setup.aggregate) {
    weights = aggregation_weights(updates);
    out.server.global_prompt = aggregate_global(updates);
    for (std::size_t i : sampled) clients[i].prompts.global_prompt = out.server.global_prompt;
  }

  out.report = evaluate_all(clients, *setup.training.text, setup.training.mode, setup.eval_solver, t);
  out.report.sampled = sampled;
  out.report.aggregation_weights = std::move(weights);
  if (!log.step_losses.empty()) {
    out.report.mean_train_loss =
        std::accumulate(log.step_losses.begin(), log.step_losses.end(), 0.0) /
        static_cast<double>(log.step_losses.size());
  }
  out.report.solver_mean_iters = log.stats.mean_iterations();
  out.report.solver_nonconverged = log.stats.nonconverged;
  out.report.solver_underflow = log.stats.underflow;
  out.report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<alignment::Example> encode_samples(const encoders::FrozenImageEncoder& image,
                                               std::span<const synth::Sample> samples) {
  std::vector<alignment::Example> out;
  out.reserve(samples.size());
  for (const synth::Sample& s : samples) out.push_back({encoders::encode_image(image, s.raw), s.label});
  return out;
}

Environment build_environment(const ExperimentConfig& config) {
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigInvalid, e.what(), e.subject());
  }
  ExperimentConfig c = config;
  c.data.seed = mix_seed(c.seed, kDataStream);
  c.partition.seed = mix_seed(c.seed, kPartitionStream);
  if (c.data.samples_per_class == 0) c.data.samples_per_class = auto_samples_per_class(c);

  synth::Pool pool = synth::gen_dataset(c.data);
  std::vector<synth::ClientDataset> parts = synth::partition(pool, c.partition);
  encoders::FrozenImageEncoder image({c.data.raw_dim, c.model.feature_dim,
                                      c.data.patches_per_sample, mix_seed(c.seed, kImageStream)});
  encoders::FrozenTextEncoder text = make_text_encoder(c, pool, image);
  const encoders::PromptPair init =
      encoders::init_prompts(mix_seed(c.seed, kPromptStream), c.model.prompt_length,
                             c.model.embed_dim);

  std::vector<ClientState> clients;
  for (auto& part : parts) {
    ClientState s;
    s.client_id = part.client_id;
    s.prompts = init;
    s.train = encode_samples(image, part.train);
    s.test = encode_samples(image, part.test);
    s.dataset = std::move(part);
    s.learning_rate = c.learning_rate;
    clients.push_back(std::move(s));
  }
  ServerState server{init.global_prompt, 0, c.resolved_participation()};
  return Environment{std::move(c), std::move(pool), std::move(image), std::move(text),
                     std::move(clients), std::move(server)};
}

RoundSetup round_setup(const Environment& env) {
  const ExperimentConfig& c = env.config;
  RoundSetup setup;
  setup.training.text = &env.text;
  setup.training.mode = c.method_matching();
  setup.training.solver = c.solver;
  setup.training.mask = mask_for(c.method);
  setup.training.epochs = c.resolved_epochs();
  setup.training.batch_size = c.batch_size;
  setup.training.seed = mix_seed(c.seed, kBatchStream);
  setup.eval_solver = c.solver;
  setup.seed = mix_seed(c.seed, kSamplingStream);
  setup.aggregate = c.method != Method::kLocalOnly;
  return setup;
}

ExperimentResult run_experiment(Environment& env) {
  const RoundSetup setup = round_setup(env);
  ExperimentResult result;
  result.initial = evaluate_all(env.clients, env.text, setup.training.mode, setup.eval_solver, 0);
  const std::size_t T = env.config.resolved_rounds();
  for (std::size_t t = 0; t < T; ++t) {
    RoundResult r = run_round(env.server, env.clients, setup);
    env.server = std::move(r.server);
    result.rounds.push_back(std::move(r.report));
  }
  result.final = result.rounds.empty() ? result.initial : result.rounds.back();
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  Environment env = build_environment(config);
  return run_experiment(env);
}

}  // namespace fedotp::fed
