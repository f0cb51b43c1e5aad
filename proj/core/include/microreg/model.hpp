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

// Fully connected softmax classifiers: z = f(x; θ) ∈ ℝ^C.
//
// Parameters are stored as [W₁, b₁, W₂, b₂, …] with Wₗ of shape
// [fan_in, fan_out] and bₗ of shape [fan_out]; hidden layers use ReLU.
// This ordering is the flat parameter layout used by every norm computation.

#include "microreg/rng.hpp"
#include "microreg/tape.hpp"
#include "microreg/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace microreg {

using Label = std::uint32_t;
using ModelParams = TensorList;

struct ModelSpec {
    std::size_t input_dim = 64;
    std::size_t class_count = 10;
    std::vector<std::size_t> hidden{256, 256};
    std::uint64_t init_seed = 0;

    void validate() const;
    std::size_t parameter_count() const;
    std::vector<Shape> parameter_shapes() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// He initialization: W ~ N(0, 2/fan_in), b = 0.
ModelParams init_params(const ModelSpec& spec);

/// Taped forward pass over a batch of row inputs [n, d] → logits [n, C].
ad::Var forward(std::span<const ad::Var> params, ad::Var inputs);
/// Untaped forward pass.
Tensor forward(const ModelParams& params, const Tensor& inputs);

/// Mean of −log softmax(z)[y] over the rows of `logits`.
ad::Var cross_entropy(ad::Var logits, std::span<const Label> labels);
double cross_entropy(const Tensor& logits, std::span<const Label> labels);

Tensor softmax(const Tensor& logits);
std::vector<Label> predict(const Tensor& logits);
double accuracy(const Tensor& logits, std::span<const Label> labels);

/// Draws a class from softmax(logits) by inverse CDF over one uniform draw.
Label sample_predictive_label(std::span<const double> logits, Engine& engine);

/// Largest parameter count for which a dense Jacobian is materialized.
inline constexpr std::size_t kJacobianParameterLimit = 20000;

/// ∇θ z for a single example x, as a [p, C] matrix (column c is ∇θ z_c).
Tensor per_example_jacobian(const ModelParams& params, std::span<const double> x);

/// (∇θ z)·v for a single example. With v = softmax(z) − onehot(y) this is ∇θ ℓ(x, y).
TensorList grad_via_decomposition(const ModelParams& params, std::span<const double> x,
                                  std::span<const double> v);

} // namespace microreg
