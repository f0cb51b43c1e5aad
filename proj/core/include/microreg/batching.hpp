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

#include "microreg/data.hpp"
#include "microreg/grad.hpp"
#include "microreg/model.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace microreg {

/// A mini-batch split into k contiguous, equal-size, disjoint micro-batches.
struct MicroBatchPartition {
    std::vector<std::size_t> batch;
    std::size_t micro_size = 0;

    std::size_t count() const noexcept { return micro_size == 0 ? 0 : batch.size() / micro_size; }
    std::span<const std::size_t> slice(std::size_t i) const
    {
        return std::span<const std::size_t>(batch).subspan(i * micro_size, micro_size);
    }
};

/// Throws ValidationError unless 1 ≤ m and m divides |batch|.
MicroBatchPartition partition_microbatches(std::vector<std::size_t> batch, std::size_t m);

/// Runs fn(0..count-1), optionally on several threads. Callers write results
/// into per-index slots and reduce afterwards in ascending index order.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Inputs and labels of one micro-batch.
struct MicroBatch {
    Tensor inputs;
    std::vector<Label> labels;
};

MicroBatch materialize(const Dataset& data, std::span<const std::size_t> index);

struct AccumulatedGradient {
    /// (1/k) Σᵢ ∇L_{Mᵢ}(θ), summed in slice order.
    TensorList gradient;
    /// (1/k) Σᵢ L_{Mᵢ}(θ).
    double loss = 0.0;
    std::vector<TensorList> slice_gradients;
    std::vector<double> slice_losses;
};

/// Gradient accumulation over the micro-batches of `partition`.
AccumulatedGradient accumulate_full_gradient(const ModelParams& params, const Dataset& data,
                                             const MicroBatchPartition& partition,
                                             std::size_t threads = 1,
                                             bool keep_slices = false);

/// Loss and gradient of the mean cross-entropy over `index` in one pass.
ad::ValueAndGrad batch_loss_gradient(const ModelParams& params, const Dataset& data,
                                     std::span<const std::size_t> index);

} // namespace microreg
