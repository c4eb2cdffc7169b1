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

#include "fedotp/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

namespace fedotp::synth {
namespace {

using Rng = std::mt19937_64;

void require(bool ok, const char* key, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidValue, std::string(key) + " " + what, key);
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

// Q from the QR factorization of I + scale G, signs fixed so Q -> I as
// scale -> 0.
Matrix near_identity_rotation(Rng& rng, std::size_t n, double scale) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m(i, j) += scale * dist(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  Matrix out(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double s = r(j, j) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out(i, j) = s * q(i, j);
  }
  return out;
}

std::vector<double> apply_affine(const Matrix& a, std::span<const double> x,
                                 std::span<const double> b) {
  std::vector<double> out(b.begin(), b.end());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    out[i] += s;
  }
  return out;
}

std::vector<double> dirichlet(Rng& rng, std::size_t n, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (;;) {
    std::vector<double> p(n);
    double total = 0.0;
    for (double& x : p) total += (x = gamma(rng));
    if (total > 0.0) {
      for (double& x : p) x /= total;
      return p;
    }
  }
}

// Integer split of `total` proportional to p; largest remainders first,
// ties to the lower index.
std::vector<std::size_t> apportion(const std::vector<double>& p, std::size_t total) {
  std::vector<std::size_t> counts(p.size());
  std::vector<std::pair<double, std::size_t>> rest;
  std::size_t used = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double exact = p[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    used += counts[i];
    rest.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rest.begin(), rest.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < total; ++i, ++used) ++counts[rest[i % rest.size()].second];
  return counts;
}

std::map<std::size_t, std::vector<std::size_t>> by_label(const Pool& pool,
                                                         const std::vector<std::size_t>& ids) {
  std::map<std::size_t, std::vector<std::size_t>> out;
  for (std::size_t i : ids) out[pool.samples[i].label].push_back(i);
  return out;
}

void ensure_both_splits(ClientDataset& c) {
  if (c.test.empty() && c.train.size() > 1) {
    c.test.push_back(std::move(c.train.back()));
    c.train.pop_back();
  } else if (c.train.empty() && c.test.size() > 1) {
    c.train.push_back(std::move(c.test.back()));
    c.test.pop_back();
  }
}

// Splits each label's samples: `shots` to train when shots > 0, otherwise
// round(train_fraction n) to train.
ClientDataset make_client(const Pool& pool, std::size_t id, const std::vector<std::size_t>& ids,
                          std::size_t shots, double train_fraction) {
  ClientDataset c;
  c.client_id = id;
  for (const auto& [label, members] : by_label(pool, ids)) {
    std::size_t n_train = shots > 0 ? std::min(shots, members.size())
                                    : static_cast<std::size_t>(std::lround(
                                          train_fraction * static_cast<double>(members.size())));
    for (std::size_t j = 0; j < members.size(); ++j) {
      (j < n_train ? c.train : c.test).push_back(pool.samples[members[j]]);
    }
  }
  ensure_both_splits(c);
  return c;
}

// Dirichlet split of `ids` over `clients` positions; resamples until every
// client has at least two samples.
std::vector<std::vector<std::size_t>> dirichlet_split(const Pool& pool,
                                                      const std::vector<std::size_t>& ids,
                                                      std::size_t clients, double alpha, Rng& rng) {
  const auto labels = by_label(pool, ids);
  if (ids.size() < 2 * clients) {
    throw Error(ErrorCode::kInsufficientClasses,
                "pool too small to give every client two samples");
  }
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<std::vector<std::size_t>> out(clients);
    for (const auto& [label, members] : labels) {
      std::vector<std::size_t> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto counts = apportion(dirichlet(rng, clients, alpha), shuffled.size());
      std::size_t at = 0;
      for (std::size_t c = 0; c < clients; ++c) {
        for (std::size_t j = 0; j < counts[c]; ++j) out[c].push_back(shuffled[at++]);
      }
    }
    if (std::all_of(out.begin(), out.end(), [](const auto& v) { return v.size() >= 2; })) {
      for (auto& v : out) std::sort(v.begin(), v.end());
      return out;
    }
  }
  throw Error(ErrorCode::kInsufficientClasses, "could not draw a partition without empty clients");
}

}  // namespace

std::size_t SynthSpec::core_patches() const {
  return static_cast<std::size_t>(
      std::ceil(core_fraction * static_cast<double>(patches_per_sample) - 1e-12));
}

void SynthSpec::validate() const {
  require(num_classes >= 1, "num_classes", "must be >= 1");
  require(patches_per_sample >= 1, "patches_per_sample", "must be >= 1");
  require(raw_dim >= 1, "raw_dim", "must be >= 1");
  require(core_fraction > 0.0 && core_fraction <= 1.0, "core_fraction", "must lie in (0, 1]");
  require(noise_std >= 0.0 && std::isfinite(noise_std), "noise_std", "must be >= 0");
  require(num_domains >= 1, "num_domains", "must be >= 1");
  require(shots_per_class >= 1, "shots_per_class", "must be >= 1");
  require(samples_per_class >= 1, "samples_per_class", "must be >= 1");
  require(prototype_scale > 0.0, "prototype_scale", "must be > 0");
  require(background_scale >= 0.0, "background_scale", "must be >= 0");
  require(domain_shift >= 0.0, "domain_shift", "must be >= 0");
  require(domain_bias >= 0.0, "domain_bias", "must be >= 0");
}

std::vector<double> Pool::prototype(std::size_t label, std::size_t domain) const {
  return apply_affine(transforms.at(domain), prototypes.row(label), biases.row(domain));
}

std::vector<double> Pool::background_in(std::size_t domain) const {
  return apply_affine(transforms.at(domain), background, biases.row(domain));
}

std::size_t Pool::count(std::size_t label) const {
  return static_cast<std::size_t>(std::count_if(
      samples.begin(), samples.end(), [&](const Sample& s) { return s.label == label; }));
}

Pool gen_dataset(const SynthSpec& spec) {
  spec.validate();
  Pool pool;
  pool.spec = spec;
  const std::size_t K = spec.num_classes, D = spec.num_domains, d = spec.raw_dim;
  const std::size_t V = spec.patches_per_sample;

  Rng world(mix_seed(spec.seed, 10));
  pool.prototypes = Matrix(K, d);
  for (std::size_t k = 0; k < K; ++k) {
    const auto mu = gaussian_vector(world, d, spec.prototype_scale);
    std::copy(mu.begin(), mu.end(), pool.prototypes.row(k).begin());
  }
  pool.background = gaussian_vector(world, d, spec.prototype_scale * spec.background_scale);
  pool.biases = Matrix(D, d);
  for (std::size_t dom = 0; dom < D; ++dom) {
    if (dom == 0) {
      Matrix eye(d, d);
      for (std::size_t i = 0; i < d; ++i) eye(i, i) = 1.0;
      pool.transforms.push_back(std::move(eye));
      continue;
    }
    pool.transforms.push_back(near_identity_rotation(world, d, spec.domain_shift));
    const auto b = gaussian_vector(world, d, spec.domain_bias);
    std::copy(b.begin(), b.end(), pool.biases.row(dom).begin());
  }

  Rng draws(mix_seed(spec.seed, 11));
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t core = spec.core_patches();
  std::vector<std::size_t> order(V);
  for (std::size_t dom = 0; dom < D; ++dom) {
    const auto bg = pool.background_in(dom);
    for (std::size_t k = 0; k < K; ++k) {
      const auto mu = pool.prototype(k, dom);
      for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
        Sample s{Matrix(V, d), k, dom};
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), draws);
        for (std::size_t p = 0; p < V; ++p) {
          const auto& centre = order[p] < core ? mu : bg;
          auto row = s.raw.row(p);
          for (std::size_t j = 0; j < d; ++j) row[j] = centre[j] + spec.noise_std * noise(draws);
        }
        pool.samples.push_back(std::move(s));
      }
    }
  }
  return pool;
}

std::size_t nearest_prototype(const Pool& pool, const Sample& sample) {
  const std::size_t d = pool.spec.raw_dim;
  std::vector<double> mean(d, 0.0);
  for (std::size_t p = 0; p < sample.raw.rows(); ++p) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += sample.raw(p, j) / sample.raw.rows();
  }
  const double cf = static_cast<double>(pool.spec.core_patches()) /
                    static_cast<double>(pool.spec.patches_per_sample);
  const auto bg = pool.background_in(sample.domain);
  std::size_t best = 0;
  double best_dist = INFINITY;
  for (std::size_t k = 0; k < pool.spec.num_classes; ++k) {
    const auto mu = pool.prototype(k, sample.domain);
    double dist = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = mean[j] - (cf * mu[j] + (1 - cf) * bg[j]);
      dist += e * e;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

const char* to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kPathological: return "pathological";
    case Scheme::kDirichlet: return "dirichlet";
    case Scheme::kDomain: return "domain";
    case Scheme::kDomainDirichlet: return "domain_dirichlet";
  }
  return "unknown";
}

Scheme parse_scheme(const std::string& name) {
  for (auto s : {Scheme::kPathological, Scheme::kDirichlet, Scheme::kDomain,
                 Scheme::kDomainDirichlet}) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorCode::kInvalidValue, "unknown partition scheme '" + name + "'", "scheme");
}

std::size_t PartitionSpec::class_count(std::size_t client) const {
  return class_counts.empty() ? classes_per_client : class_counts.at(client);
}

void PartitionSpec::validate() const {
  require(num_clients >= 1, "num_clients", "must be >= 1");
  require(dirichlet_alpha > 0.0, "dirichlet_alpha", "must be > 0");
  require(dirichlet_alpha_domain > 0.0, "dirichlet_alpha_domain", "must be > 0");
  require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction", "must lie in (0, 1)");
  require(class_counts.empty() || class_counts.size() == num_clients, "class_counts",
          "must list one count per client");
  for (std::size_t i = 0; i < num_clients; ++i) {
    require(class_count(i) >= 1, "classes_per_client", "must be >= 1");
  }
}

std::vector<ClientDataset> partition_pathological(const Pool& pool, const PartitionSpec& spec) {
  spec.validate();
  const std::size_t K = pool.spec.num_classes;
  const std::size_t N = spec.num_clients;
  std::size_t slots = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (spec.class_count(i) > K) {
      throw Error(ErrorCode::kInsufficientClasses, "a client asks for more classes than exist");
    }
    slots += spec.class_count(i);
  }
  if (!spec.allow_class_overlap && slots > K) {
    throw Error(ErrorCode::kInsufficientClasses,
                std::to_string(slots) + " disjoint class slots requested from " +
                    std::to_string(K) + " classes");
  }

  Rng rng(mix_seed(spec.seed, 20));
  std::vector<std::size_t> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<std::size_t>> holders(K);
  std::size_t at = 0;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < spec.class_count(i); ++j, ++at) holders[perm[at % K]].push_back(i);
  }

  std::vector<std::vector<std::size_t>> assigned(N);
  const std::size_t shots = pool.spec.shots_per_class;
  std::vector<std::size_t> ids(pool.samples.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto labels = by_label(pool, ids);
  std::vector<std::vector<std::size_t>> train_ids(N), test_ids(N);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& who = holders[k];
    if (who.empty()) continue;
    auto it = labels.find(k);
    std::vector<std::size_t> members = it == labels.end() ? std::vector<std::size_t>{} : it->second;
    if (members.size() < who.size() * (shots + 1)) {
      throw Error(ErrorCode::kInsufficientClasses,
                  "class " + std::to_string(k) + " has too few samples for its holders");
    }
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t pos = 0;
    for (std::size_t h : who) {
      for (std::size_t s = 0; s < shots; ++s) train_ids[h].push_back(members[pos++]);
    }
    const std::size_t rest = members.size() - pos;
    for (std::size_t j = 0; j < who.size(); ++j) {
      const std::size_t n = rest / who.size() + (j < rest % who.size() ? 1 : 0);
      for (std::size_t s = 0; s < n; ++s) test_ids[who[j]].push_back(members[pos++]);
    }
  }
  std::vector<ClientDataset> out(N);
  for (std::size_t i = 0; i < N; ++i) {
    out[i].client_id = i;
    std::sort(train_ids[i].begin(), train_ids[i].end());
    std::sort(test_ids[i].begin(), test_ids[i].end());
    for (std::size_t id : train_ids[i]) out[i].train.push_back(pool.samples[id]);
    for (std::size_t id : test_ids[i]) out[i].test.push_back(pool.samples[id]);
  }
  return out;
}

std::vector<ClientDataset> partition_dirichlet(const Pool& pool, const PartitionSpec& spec) {
  spec.validate();
  if (pool.samples.empty()) throw Error(ErrorCode::kInvalidValue, "empty pool");
  Rng rng(mix_seed(spec.seed, 21));
  std::vector<std::size_t> ids(pool.samples.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto parts = dirichlet_split(pool, ids, spec.num_clients, spec.dirichlet_alpha, rng);
  std::vector<ClientDataset> out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out.push_back(make_client(pool, i, parts[i], 0, spec.train_fraction));
  }
  return out;
}

std::vector<ClientDataset> assign_domains(const Pool& pool, const PartitionSpec& spec) {
  spec.validate();
  const std::size_t D = pool.spec.num_domains;
  const std::size_t N = spec.num_clients;
  Rng rng(mix_seed(spec.seed, 22));
  std::vector<std::vector<std::size_t>> parts(N);
  for (std::size_t dom = 0; dom < D; ++dom) {
    std::vector<std::size_t> members;
    for (std::size_t c = dom; c < N; c += D) members.push_back(c);
    if (members.empty()) continue;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < pool.samples.size(); ++i) {
      if (pool.samples[i].domain == dom) ids.push_back(i);
    }
    if (spec.scheme == Scheme::kDomainDirichlet) {
      const auto split =
          dirichlet_split(pool, ids, members.size(), spec.dirichlet_alpha_domain, rng);
      for (std::size_t j = 0; j < members.size(); ++j) parts[members[j]] = split[j];
      continue;
    }
    // Even split of every label across the domain's clients.
    for (auto [label, by] : by_label(pool, ids)) {
      std::shuffle(by.begin(), by.end(), rng);
      for (std::size_t j = 0; j < by.size(); ++j) parts[members[j % members.size()]].push_back(by[j]);
    }
  }
  std::vector<ClientDataset> out;
  const bool fixed_shots = spec.scheme == Scheme::kDomain;
  for (std::size_t i = 0; i < N; ++i) {
    std::sort(parts[i].begin(), parts[i].end());
    out.push_back(make_client(pool, i, parts[i], fixed_shots ? pool.spec.shots_per_class : 0,
                              spec.train_fraction));
  }
  return out;
}

std::vector<ClientDataset> partition(const Pool& pool, const PartitionSpec& spec) {
  switch (spec.scheme) {
    case Scheme::kPathological: return partition_pathological(pool, spec);
    case Scheme::kDirichlet: return partition_dirichlet(pool, spec);
    case Scheme::kDomain:
    case Scheme::kDomainDirichlet: return assign_domains(pool, spec);
  }
  throw Error(ErrorCode::kInvalidValue, "unknown scheme", "scheme");
}

std::vector<std::size_t> ClientDataset::classes() const {
  std::set<std::size_t> s;
  for (const auto* part : {&train, &test}) {
    for (const Sample& x : *part) s.insert(x.label);
  }
  return {s.begin(), s.end()};
}

std::vector<std::size_t> ClientDataset::domains() const {
  std::set<std::size_t> s;
  for (const auto* part : {&train, &test}) {
    for (const Sample& x : *part) s.insert(x.domain);
  }
  return {s.begin(), s.end()};
}

namespace {

nlohmann::json record(const Sample& s, const nlohmann::json& client, const char* split) {
  nlohmann::json j;
  j["client_id"] = client;
  j["split"] = split;
  j["domain_id"] = s.domain;
  j["label"] = s.label;
  j["rows"] = s.raw.rows();
  j["cols"] = s.raw.cols();
  j["patches"] = std::vector<double>(s.raw.flat().begin(), s.raw.flat().end());
  return j;
}

}  // namespace

void write_records(std::ostream& out, const std::vector<ClientDataset>& clients) {
  for (const ClientDataset& c : clients) {
    for (const Sample& s : c.train) out << record(s, c.client_id, "train").dump() << '\n';
    for (const Sample& s : c.test) out << record(s, c.client_id, "test").dump() << '\n';
  }
}

void write_records(std::ostream& out, const Pool& pool) {
  for (const Sample& s : pool.samples) out << record(s, nullptr, "pool").dump() << '\n';
}

std::vector<ClientDataset> read_records(std::istream& in) {
  std::map<std::size_t, ClientDataset> clients;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::size_t rows = j.at("rows"), cols = j.at("cols");
      const auto flat = j.at("patches").get<std::vector<double>>();
      if (flat.size() != rows * cols) {
        throw Error(ErrorCode::kParseError, "patch list length differs from rows * cols");
      }
      Sample s{Matrix(rows, cols), j.at("label").get<std::size_t>(),
               j.at("domain_id").get<std::size_t>()};
      std::copy(flat.begin(), flat.end(), s.raw.flat().begin());
      const std::size_t id = j.at("client_id").is_null() ? 0 : j.at("client_id").get<std::size_t>();
      ClientDataset& c = clients[id];
      c.client_id = id;
      (j.at("split") == "test" ? c.test : c.train).push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError,
                  "record line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::vector<ClientDataset> out;
  for (auto& [id, c] : clients) out.push_back(std::move(c));
  return out;
}

void write_records_file(const std::string& path, const std::vector<ClientDataset>& clients) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open '" + path + "' for writing", path);
  write_records(out, clients);
  if (!out) throw Error(ErrorCode::kIoError, "write to '" + path + "' failed", path);
}

std::vector<ClientDataset> read_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'", path);
  return read_records(in);
}

}  // namespace fedotp::synth
