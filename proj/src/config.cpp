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

#include "fedotp/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace fedotp::config {
namespace {

using fed::ExperimentConfig;
namespace pt = boost::property_tree;

struct Key {
  const char* section;
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw Error(ErrorCode::kInvalidValue,
              "key '" + key + "': '" + value + "' is not " + expected, key);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    bad_value(key, v, std::is_integral_v<T> ? "a non-negative integer" : "a number");
  }
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return ec == std::errc() ? std::string(buf, end) : "nan";
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& raw) {
  std::vector<std::size_t> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(parse_number<std::size_t>(key, item));
  }
  return out;
}

std::string format_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// Rethrows enum parse failures against the config key.
template <typename F>
auto parse_named(const std::string& key, const std::string& raw, F parse) {
  try {
    return parse(trim(raw));
  } catch (const Error&) {
    bad_value(key, trim(raw), "a recognised name");
  }
}

#define FIELD_SIZE(sec, key, member)                                                 \
  Key{sec, #key,                                                                     \
      [](ExperimentConfig& c, const std::string& v) {                                \
        c.member = parse_number<std::size_t>(#key, v);                               \
      },                                                                             \
      [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define FIELD_U64(sec, key, member)                                                  \
  Key{sec, #key,                                                                     \
      [](ExperimentConfig& c, const std::string& v) {                                \
        c.member = parse_number<std::uint64_t>(#key, v);                             \
      },                                                                             \
      [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define FIELD_INT(sec, key, member)                                                  \
  Key{sec, #key,                                                                     \
      [](ExperimentConfig& c, const std::string& v) { c.member = parse_number<int>(#key, v); }, \
      [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define FIELD_DOUBLE(sec, key, member)                                               \
  Key{sec, #key,                                                                     \
      [](ExperimentConfig& c, const std::string& v) {                                \
        c.member = parse_number<double>(#key, v);                                    \
      },                                                                             \
      [](const ExperimentConfig& c) { return format_double(c.member); }}
#define FIELD_AUTO(sec, key, member, type, format)                                   \
  Key{sec, #key,                                                                     \
      [](ExperimentConfig& c, const std::string& v) {                                \
        if (trim(v) == "auto") c.member.reset();                                     \
        else c.member = parse_number<type>(#key, v);                                 \
      },                                                                             \
      [](const ExperimentConfig& c) {                                                \
        return c.member ? format(*c.member) : std::string("auto");                   \
      }}

std::string size_to_string(std::size_t x) { return std::to_string(x); }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      FIELD_SIZE("data", num_classes, data.num_classes),
      FIELD_SIZE("data", patches_per_sample, data.patches_per_sample),
      FIELD_SIZE("data", raw_dim, data.raw_dim),
      FIELD_DOUBLE("data", core_fraction, data.core_fraction),
      FIELD_DOUBLE("data", noise_std, data.noise_std),
      FIELD_SIZE("data", num_domains, data.num_domains),
      FIELD_SIZE("data", shots_per_class, data.shots_per_class),
      FIELD_SIZE("data", samples_per_class, data.samples_per_class),
      FIELD_DOUBLE("data", prototype_scale, data.prototype_scale),
      FIELD_DOUBLE("data", background_scale, data.background_scale),
      FIELD_DOUBLE("data", domain_shift, data.domain_shift),
      FIELD_DOUBLE("data", domain_bias, data.domain_bias),

      Key{"partition", "scheme",
          [](ExperimentConfig& c, const std::string& v) {
            c.partition.scheme = parse_named("scheme", v, synth::parse_scheme);
          },
          [](const ExperimentConfig& c) { return std::string(synth::to_string(c.partition.scheme)); }},
      FIELD_SIZE("partition", num_clients, partition.num_clients),
      FIELD_SIZE("partition", classes_per_client, partition.classes_per_client),
      Key{"partition", "class_counts",
          [](ExperimentConfig& c, const std::string& v) {
            c.partition.class_counts = parse_list("class_counts", v);
          },
          [](const ExperimentConfig& c) { return format_list(c.partition.class_counts); }},
      Key{"partition", "allow_class_overlap",
          [](ExperimentConfig& c, const std::string& v) {
            c.partition.allow_class_overlap = parse_bool("allow_class_overlap", v);
          },
          [](const ExperimentConfig& c) {
            return std::string(c.partition.allow_class_overlap ? "true" : "false");
          }},
      FIELD_DOUBLE("partition", dirichlet_alpha, partition.dirichlet_alpha),
      FIELD_DOUBLE("partition", dirichlet_alpha_domain, partition.dirichlet_alpha_domain),
      FIELD_DOUBLE("partition", train_fraction, partition.train_fraction),

      FIELD_SIZE("model", prompt_length, model.prompt_length),
      FIELD_SIZE("model", embed_dim, model.embed_dim),
      FIELD_SIZE("model", feature_dim, model.feature_dim),
      FIELD_DOUBLE("model", prompt_gain, model.prompt_gain),
      FIELD_DOUBLE("model", text_fidelity, model.text_fidelity),
      FIELD_DOUBLE("model", text_scale, model.text_scale),

      FIELD_DOUBLE("matching", gamma, matching.gamma),
      FIELD_DOUBLE("matching", lambda, matching.lambda),
      FIELD_DOUBLE("matching", tau, matching.tau),
      Key{"matching", "distance",
          [](ExperimentConfig& c, const std::string& v) {
            c.matching.distance = parse_named("distance", v, alignment::parse_distance_kind);
          },
          [](const ExperimentConfig& c) {
            return std::string(alignment::to_string(c.matching.distance));
          }},

      FIELD_INT("solver", max_iter, solver.max_iter),
      FIELD_DOUBLE("solver", epsilon, solver.epsilon),
      FIELD_DOUBLE("solver", denom_floor, solver.denom_floor),

      Key{"runtime", "mode",
          [](ExperimentConfig& c, const std::string& v) {
            c.method = parse_named("mode", v, fed::parse_method);
          },
          [](const ExperimentConfig& c) { return std::string(fed::to_string(c.method)); }},
      FIELD_AUTO("runtime", rounds, rounds, std::size_t, size_to_string),
      FIELD_AUTO("runtime", local_epochs, local_epochs, std::size_t, size_to_string),
      FIELD_AUTO("runtime", participation, participation, double, format_double),
      FIELD_DOUBLE("runtime", learning_rate, learning_rate),
      FIELD_SIZE("runtime", batch_size, batch_size),
      FIELD_SIZE("runtime", test_batch_size, test_batch_size),
      FIELD_SIZE("runtime", test_per_class, test_per_class),
      FIELD_U64("runtime", seed, seed),
      Key{"runtime", "output_dir",
          [](ExperimentConfig& c, const std::string& v) { c.output_dir = trim(v); },
          [](const ExperimentConfig& c) { return c.output_dir; }},
  };
  return keys;
}

#undef FIELD_SIZE
#undef FIELD_U64
#undef FIELD_INT
#undef FIELD_DOUBLE
#undef FIELD_AUTO

const Key* find_key(const std::string& section, const std::string& name) {
  for (const Key& k : registry()) {
    if (name == k.name && (section.empty() || section == k.section)) return &k;
  }
  return nullptr;
}

// Drops "# ..." and "; ..." tails that follow whitespace.
std::string strip_inline_comments(const std::string& text) {
  std::istringstream in(text);
  std::string out, line;
  while (std::getline(in, line)) {
    for (std::size_t i = 1; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.erase(i);
        break;
      }
    }
    out += line + "\n";
  }
  return out;
}

}  // namespace

fed::ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(strip_inline_comments(text));
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::kParseError,
                "line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig config;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      const Key* key = find_key("", name);
      if (!key) throw Error(ErrorCode::kUnknownKey, "unknown key '" + name + "'", name);
      key->set(config, node.data());
      continue;
    }
    for (const auto& [child, value] : node) {
      const Key* key = find_key(name, child);
      if (!key) {
        const std::string full = name + "." + child;
        throw Error(ErrorCode::kUnknownKey, "unknown key '" + full + "'", full);
      }
      key->set(config, value.data());
    }
  }
  config.validate();
  return config;
}

fed::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read config file '" + path + "'", path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParseError) {
      throw Error(ErrorCode::kParseError, path + ": " + e.what(), path);
    }
    throw;
  }
}

std::string serialize_config(const fed::ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const Key& k : registry()) {
    if (section != k.section) {
      section = k.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(k.name) + " = " + k.get(config) + "\n";
  }
  return out;
}

void apply_environment(fed::ExperimentConfig& config) {
  const char* dir = std::getenv(kOutputDirVariable);
  if (dir && *dir) config.output_dir = dir;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const Key& k : registry()) out.push_back(std::string(k.section) + "." + k.name);
  return out;
}

}  // namespace fedotp::config
