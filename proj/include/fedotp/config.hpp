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

// Experiment configuration files.
//
// INI text with sections [data] [partition] [model] [matching] [solver]
// [runtime]. Key names are unique across sections, so a key may also be
// given before the first section header. Missing keys keep their defaults,
// unknown keys are rejected, `auto` restores a derived default. `#` or `;`
// after whitespace starts a comment.

#ifndef FEDOTP_CONFIG_HPP_
#define FEDOTP_CONFIG_HPP_

#include <string>
#include <vector>

#include "fedotp/federated.hpp"

namespace fedotp::config {

// Throws ParseError, UnknownKey or InvalidValue naming the key.
fed::ExperimentConfig parse_config(const std::string& text);
// As parse_config; also IoError when the file cannot be read.
fed::ExperimentConfig load_config(const std::string& path);

// Every key, in section order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const fed::ExperimentConfig& config);

// Replaces output_dir with $FEDOTP_OUTPUT_DIR when it is set and nonempty.
void apply_environment(fed::ExperimentConfig& config);

inline constexpr const char* kOutputDirVariable = "FEDOTP_OUTPUT_DIR";

// "section.key" for every accepted key.
std::vector<std::string> known_keys();

}  // namespace fedotp::config

#endif  // FEDOTP_CONFIG_HPP_
