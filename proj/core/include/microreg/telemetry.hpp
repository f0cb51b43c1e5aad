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

#include "microreg/batching.hpp"
#include "microreg/rng.hpp"
#include "microreg/update_rules.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace microreg {

inline constexpr std::string_view kTelemetryHeader =
    "step,epoch,train_loss,train_acc,val_acc,avg_mb_grad_norm,fisher_trace,penalty,"
    "update_norm,lr,wall_ms";

/// One telemetry row describing θ after `step` updates.
struct TrajectoryRecord {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double avg_mb_grad_norm = 0.0;
    std::optional<double> fisher_trace;
    std::optional<double> penalty;
    double update_norm = 0.0;
    double lr = 0.0;
    std::optional<double> wall_ms;

    friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

/// CSV line (no newline). Reals use 17 significant digits; empty optionals
/// become empty fields.
std::string format_record(const TrajectoryRecord& record);
TrajectoryRecord parse_record(std::string_view line);

/// Owns a run's telemetry CSV. The header is written on open.
class TelemetryWriter {
public:
    explicit TelemetryWriter(const std::filesystem::path& path);
    ~TelemetryWriter();

    TelemetryWriter(const TelemetryWriter&) = delete;
    TelemetryWriter& operator=(const TelemetryWriter&) = delete;

    void append(const TrajectoryRecord& record);
    /// Throws FormatError if the stream has failed.
    void flush();
    void close();
    std::size_t rows() const noexcept { return rows_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t rows_ = 0;
};

std::vector<TrajectoryRecord> read_telemetry(const std::filesystem::path& path);

/// Mean of unsquared micro-batch loss-gradient norms, (m/|B|)·Σ_M ‖∇L_M(θ)‖.
double avg_microbatch_grad_norm(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, std::size_t threads = 1);

/// Mean over micro-batches of ‖∇L̂_M(θ)‖² with labels sampled from the model.
/// Shares its code path with the FT penalty at λ = 1.
double fisher_trace_estimate(const ModelParams& params, const Dataset& data,
                             const MicroBatchPartition& partition, const StreamKey& rng,
                             std::size_t threads = 1);

/// Generic numeric CSV: missing cells are empty optionals.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::optional<double>>> rows;

    /// Index of `name`; throws ValidationError if absent.
    std::size_t column(std::string_view name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);

/// Trailing moving average. The first w−1 points average what is available.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

struct PlotOptions {
    std::size_t window = 25;
    std::string x_column = "step";
    std::string title;
    int width = 800;
    int height = 450;
};

/// Self-contained SVG with one polyline per column against `x_column` (row
/// index if that column is absent).
void emit_line_plot(const std::filesystem::path& csv_path, const std::vector<std::string>& columns,
                    const std::filesystem::path& out_path, const PlotOptions& options = {});

/// Writes one row per recorded step; an empty schedule is allowed here and
/// rejected by NormSchedule::load.
void write_norm_schedule(const std::vector<std::uint64_t>& steps, const std::vector<double>& norms,
                         const std::filesystem::path& path);

} // namespace microreg
