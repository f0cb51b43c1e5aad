// Copyright 2026 The microreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Experiment configuration in line-oriented `key = value` text:
//
//   [data]
//   source = synthetic
//   [update]
//   rule = sgd
//   lr = 0.1
//
// Blank lines and lines starting with '#' or ';' are ignored. Unknown
// sections and keys are rejected with the offending line number.

#include "microreg/data.hpp"
#include "microreg/model.hpp"
#include "microreg/regularizers.hpp"
#include "microreg/update_rules.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace microreg {

struct DataConfig {
    /// "synthetic" or "idx".
    std::string source = "synthetic";
    SyntheticSpec synthetic;
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    bool whiten = false;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct ExperimentConfig {
    std::string name = "run";
    std::string output_dir = "runs/run";

    DataConfig data;
    /// input_dim and class_count are taken from the data at run time.
    ModelSpec model;

    std::size_t batch_size = 32;
    std::size_t micro_size = 32;
    std::uint64_t steps = 5000;
    std::uint64_t metric_every = 10;
    /// Metrics are also recorded at every step t ≤ metric_warmup.
    std::uint64_t metric_warmup = 0;
    std::size_t eval_batch = 1280;
    std::size_t eval_micro = 128;
    std::size_t threads = 1;
    bool track_fisher = true;
    bool record_wall_time = false;
    std::uint64_t sampler_seed = 0;
    std::uint64_t metric_seed = 0;

    bool regularize = false;
    /// micro_size mirrors `micro_size` above.
    RegularizerSpec regularizer;
    UpdateConfig update;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// One `key = value` line, with its section.
struct ConfigEntry {
    std::string section;
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// Tokenizes config text. Section headers may carry a label: `[variant LB]`.
std::vector<ConfigEntry> read_entries(std::string_view text);

/// 1-based source line for "section.key", used to attribute validation errors.
using LineMap = std::map<std::string, std::size_t>;

/// Applies "section.key = value"; throws ConfigError for unknown keys or bad values.
void apply_setting(ExperimentConfig& cfg, std::string_view section, std::string_view key,
                   std::string_view value, std::size_t line);

/// Cross-field checks. Errors name the line from `lines` when known.
void validate_config(const ExperimentConfig& cfg, const LineMap& lines = {});

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize(const ExperimentConfig& cfg);

/// Reads a whole file into a string.
std::string read_text(const std::filesystem::path& path);

} // namespace microreg
