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

// Micro-batch penalties added to the large-batch loss L_B(θ):
//
//   GN        λ · mean_M ‖∇θ L_M(θ)‖²
//   FT        λ · mean_M ‖∇θ L̂_M(θ)‖²      labels ŷ ~ softmax(z), one per example per step
//   AJ        λ · mean_M ‖∇θ mean_{x∈M} z(x)·(1/C)𝟙‖²
//   UJ        λ · mean_M ‖∇θ mean_{x∈M} z(x)·u_M‖²   u_M uniform on the unit sphere
//   SampleGN  λ · ‖∇θ L_S(θ)‖²              S one micro-batch drawn uniformly
//
// Penalty gradients flow through both the Jacobian and the loss-output factor
// (full double backprop, or its finite-difference approximation).

#include "microreg/batching.hpp"
#include "microreg/grad.hpp"
#include "microreg/rng.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace microreg {

enum class RegularizerKind { GN, FT, AJ, UJ, SampleGN };

std::string_view regularizer_name(RegularizerKind kind);
/// Accepts "gn", "ft", "aj", "uj", "sample-gn" (case-insensitive).
std::optional<RegularizerKind> parse_regularizer(std::string_view name);

struct RegularizerSpec {
    RegularizerKind kind = RegularizerKind::GN;
    double strength = 0.01;
    std::size_t micro_size = 32;
    ad::GradMode mode = ad::DoubleBackprop{};
    std::uint64_t seed = 0;

    void validate() const;

    friend bool operator==(const RegularizerSpec&, const RegularizerSpec&) = default;
};

struct PenaltyReport {
    double base_loss = 0.0;
    /// Penalty before multiplying by λ.
    double penalty = 0.0;
    std::size_t micro_batches = 0;
    /// ‖·‖ of each micro-batch's penalized gradient (or Jacobian product).
    std::vector<double> micro_norms;
};

struct PenalizedLoss {
    /// base_loss + λ·penalty
    double value = 0.0;
    /// Empty when PenaltyOptions::want_gradient is false.
    TensorList gradient;
    PenaltyReport report;
};

struct PenaltyOptions {
    ad::GradMode mode = ad::DoubleBackprop{};
    std::size_t threads = 1;
    bool want_gradient = true;
    /// FT only: use the true labels instead of sampled ones.
    bool ft_true_labels = false;
    /// UJ only: use this direction for every micro-batch instead of sampling.
    std::optional<std::vector<double>> uj_fixed_direction;
};

PenalizedLoss gn_penalized_loss(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, double lambda,
                                const PenaltyOptions& options = {});

PenalizedLoss ft_penalized_loss(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, double lambda,
                                const StreamKey& rng, const PenaltyOptions& options = {});

PenalizedLoss aj_penalized_loss(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, double lambda,
                                const PenaltyOptions& options = {});

PenalizedLoss uj_penalized_loss(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, double lambda,
                                const StreamKey& rng, const PenaltyOptions& options = {});

/// `partition` supplies both the batch B and the sample size |S| = m.
PenalizedLoss sample_gn_penalized_loss(const ModelParams& params, const Dataset& data,
                                       const MicroBatchPartition& partition, double lambda,
                                       const StreamKey& rng, const PenaltyOptions& options = {});

/// Dispatch on spec.kind with the stream (spec.seed, step).
PenalizedLoss penalized_loss(const RegularizerSpec& spec, const ModelParams& params,
                             const Dataset& data, const MicroBatchPartition& partition,
                             std::uint64_t step, std::size_t threads = 1,
                             bool want_gradient = true);

/// Isotropic unit vector in ℝ^C (Gaussian draw, normalized).
std::vector<double> unit_sphere_sample(std::size_t classes, Engine& engine);

/// Index of the micro-batch the sample penalty uses for this stream.
std::size_t sample_slice_index(const StreamKey& rng, std::size_t count);

/// Per-example penalty labels for FT: ŷᵢ ~ softmax(logits row i).
std::vector<Label> sample_predictive_labels(const Tensor& logits, Engine& engine);

} // namespace microreg
