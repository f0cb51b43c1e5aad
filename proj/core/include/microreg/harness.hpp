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

#include "microreg/config.hpp"
#include "microreg/telemetry.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace microreg {

inline constexpr std::string_view kVersionTag = "microreg 0.1.0";

struct LoadedData {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Synthetic splits, or IDX files with the validation split carved from the
/// tail of the training file (val_size rows).
LoadedData load_data(const DataConfig& cfg);

using LogFn = std::function<void(std::string_view)>;

struct RunOptions {
    /// Receives progress and diagnostic lines; defaults to stderr.
    LogFn log;
    bool quiet = false;
};

struct RunResult {
    std::string name;
    std::filesystem::path dir;
    std::filesystem::path telemetry;
    std::filesystem::path manifest;
    std::filesystem::path result;
    /// Written only when a run aborts.
    std::optional<std::filesystem::path> checkpoint;
    double final_test_acc = 0.0;
    double best_val_acc = 0.0;
    double final_train_loss = 0.0;
    std::uint64_t steps_completed = 0;
    bool ok = true;
    std::string error;
    /// Per-step norm of the gradient each update consumed.
    std::vector<double> step_grad_norms;
};

/// Trains per `cfg` and writes manifest.json, telemetry.csv, norm_schedule.csv
/// and result.json into cfg.output_dir. A non-finite loss or gradient stops
/// the run, writes checkpoint.bin with the last finite parameters, and returns
/// ok = false.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Binary parameter file: "MRCK", u32 version, u64 tensor count, per tensor
/// u64 rank and u64 extents, then all values as little-endian f64.
void save_checkpoint(const std::filesystem::path& path, const TensorList& params);
TensorList load_checkpoint(const std::filesystem::path& path);

struct GridAxis {
    /// "section.key"
    std::string key;
    std::vector<std::string> values;

    friend bool operator==(const GridAxis&, const GridAxis&) = default;
};

struct GridVariant {
    std::string name;
    std::vector<std::pair<std::string, std::string>> overrides;

    friend bool operator==(const GridVariant&, const GridVariant&) = default;
};

/// Base configuration plus `[grid]` axes and optional `[variant NAME]`
/// sections. Cells are variants × the cartesian product of the axes.
struct GridSpec {
    ExperimentConfig base;
    std::vector<GridVariant> variants;
    std::vector<GridAxis> axes;
    std::size_t repeats = 1;
    std::size_t max_cells = 256;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

GridSpec parse_grid(std::string_view text);
std::string serialize(const GridSpec& grid);

struct GridCell {
    std::string name;
    std::string variant;
    std::vector<std::pair<std::string, std::string>> settings;
    std::size_t repeat = 0;
    ExperimentConfig config;
};

/// Every cell × repeat, with seeds offset by the repeat index (the dataset
/// seed stays fixed) and output under base.output_dir/<cell>/r<repeat>.
std::vector<GridCell> expand_grid(const GridSpec& grid);

struct GridReport {
    std::vector<RunResult> runs;
    std::filesystem::path summary;
};

/// Runs every cell. Failures are recorded and the grid continues. The summary
/// CSV reports mean ± half-range over repeats.
GridReport run_grid(const GridSpec& grid, const RunOptions& options = {});

std::vector<std::string> preset_names();
/// Grid text of a preset; throws ValidationError for unknown names.
std::string preset_text(std::string_view name);

struct VerifyReport {
    bool ok = true;
    std::vector<std::string> problems;
};

/// Checks a run directory for a manifest, telemetry, and final metrics.
VerifyReport verify_run_dir(const std::filesystem::path& dir);

} // namespace microreg
