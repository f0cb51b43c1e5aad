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

// Parameter updates. Every rule mutates θ in place and reports the Euclidean
// norm of the displacement it applied.

#include "microreg/batching.hpp"
#include "microreg/rng.hpp"
#include "microreg/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace microreg {

enum class RuleKind { SGD, GraftIterative, GraftExternal, NGD, AntiPGD };
enum class ScheduleKind { Constant, Cosine };

std::string_view rule_name(RuleKind kind);
/// "sgd", "graft-iterative", "graft-external", "ngd", "anti-pgd".
std::optional<RuleKind> parse_rule(std::string_view name);
std::string_view schedule_name(ScheduleKind kind);
std::optional<ScheduleKind> parse_schedule(std::string_view name);

struct UpdateConfig {
    RuleKind rule = RuleKind::SGD;
    double lr = 0.1;
    double momentum = 0.0;
    double weight_decay = 0.0;
    ScheduleKind schedule = ScheduleKind::Constant;
    /// Cosine period T; the schedule restarts every T steps.
    std::uint64_t cosine_period = 0;
    /// Anti-PGD noise variance σ² and shutoff step K_off.
    double noise_variance = 0.0;
    std::uint64_t noise_shutoff = 0;
    /// External grafting donor norms (CSV `step,grad_norm`).
    std::string norm_schedule;
    std::uint64_t seed = 0;

    void validate() const;
    /// η_t. Cosine: η·(1 + cos(π·(t mod T)/T))/2.
    double lr_at(std::uint64_t step) const;

    friend bool operator==(const UpdateConfig&, const UpdateConfig&) = default;
};

struct StepResult {
    bool applied = true;
    double update_norm = 0.0;
    /// Set when the step was skipped or degraded.
    std::string note;
};

struct SgdState {
    TensorList velocity;
};

/// v ← βv + g + ωθ; θ ← θ − η_t·v. Throws NonFiniteError on a non-finite gradient.
StepResult sgd_step(TensorList& params, const TensorList& gradient, const UpdateConfig& cfg,
                    std::uint64_t step, SgdState& state);

/// θ ← θ − magnitude·g_D/‖g_D‖. Skips when ‖g_D‖ ≤ 1e-12·(1 + ‖θ‖).
StepResult graft_step(TensorList& params, double magnitude, const TensorList& direction);
/// Same with magnitude ‖g_M‖.
StepResult graft_step(TensorList& params, const TensorList& magnitude_grad,
                      const TensorList& direction);

struct GraftGradients {
    /// η·∇L_M for the drawn micro-batch.
    TensorList magnitude;
    /// ∇L_B by accumulation.
    TensorList direction;
    double loss = 0.0;
    std::size_t chosen = 0;
};

/// Draws M uniformly from the partition's slices. The drawn slice's gradient
/// is reused from the accumulation pass rather than recomputed.
GraftGradients iterative_graft_gradients(const TensorList& params, const Dataset& data,
                                         const MicroBatchPartition& partition, double lr,
                                         const StreamKey& rng, std::size_t threads = 1);

/// Recorded (step, gradient norm) pairs from a donor run.
struct NormSchedule {
    std::vector<std::uint64_t> steps;
    std::vector<double> norms;

    bool empty() const noexcept { return steps.empty(); }
    std::size_t size() const noexcept { return steps.size(); }
    /// Throws ValidationError unless steps increase strictly and norms are ≥ 0.
    void validate() const;

    /// Rejects an empty file with ValidationError.
    static NormSchedule load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

struct GraftMagnitude {
    double value = 0.0;
    /// True when `step` lies past the last recorded step and the last value was held.
    bool held = false;
};

/// η·norm(k), linearly interpolated between recorded steps. Steps before the
/// first record take the first value.
GraftMagnitude external_graft_magnitude(const NormSchedule& schedule, std::uint64_t step,
                                        double lr);

/// θ ← θ − η·g/‖g‖. Skips when g is exactly zero.
StepResult ngd_step(TensorList& params, const TensorList& gradient, double lr);

struct AntiPgdState {
    double variance = 0.0;
    std::uint64_t shutoff = 0;
    /// ξ_k; empty means ξ = 0.
    TensorList xi;
    Engine engine;

    AntiPgdState(double variance, std::uint64_t shutoff, std::uint64_t seed);
};

/// SGD step on `gradient`, then θ += ξ_{k+1} − ξ_k with ξ_{k+1} ~ N(0, σ²I)
/// while k < K_off and ξ_{k+1} = ξ_k afterwards.
StepResult anti_pgd_step(TensorList& params, const TensorList& gradient, AntiPgdState& state,
                         const UpdateConfig& cfg, std::uint64_t step, SgdState& sgd);

} // namespace microreg
