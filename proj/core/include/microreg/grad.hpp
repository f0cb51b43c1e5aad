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

#include "microreg/tape.hpp"
#include "microreg/tensor.hpp"

#include <functional>
#include <optional>
#include <span>
#include <variant>

namespace microreg::ad {

/// Exact gradient of a gradient norm via a re-entrant backward pass.
struct DoubleBackprop {
    friend bool operator==(const DoubleBackprop&, const DoubleBackprop&) = default;
};

/// Hessian-vector product by a forward difference of gradients. When `step`
/// is empty the step is 1e-5 * (1 + max|theta|).
struct FiniteDifference {
    std::optional<double> step;
    friend bool operator==(const FiniteDifference&, const FiniteDifference&) = default;
};

using GradMode = std::variant<DoubleBackprop, FiniteDifference>;

/// Throws ValidationError when a finite-difference step is not positive.
void validate(const GradMode& mode);
double default_fd_step(const TensorList& theta);

/// Builds a rank-0 value from parameter leaves.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;
/// Plain evaluation used by finite-difference oracles.
using ValueFn = std::function<double(const TensorList&)>;

struct ValueAndGrad {
    double value = 0.0;
    TensorList gradient;
};

ValueAndGrad value_and_grad(const ScalarFn& f, const TensorList& theta);
ValueFn as_value_fn(ScalarFn f);

/// Central differences (f(θ+εeᵢ) − f(θ−εeᵢ)) / 2ε, coordinate by coordinate.
TensorList finite_diff_gradient(const ValueFn& f, const TensorList& theta, double eps);

/// Σ over tensors of Σ v², summed tensor by tensor in ascending index order.
double squared_norm(const TensorList& list);

struct NormSqGradient {
    double norm_sq = 0.0;
    TensorList gradient;
};

/// ∇θ ‖∇θ loss(θ)‖².
NormSqGradient grad_norm_sq_gradient(const ScalarFn& loss_fn, const TensorList& theta,
                                     const GradMode& mode);

/// The two scalars an objective contributes: a base term and a probe whose
/// parameter-gradient norm is penalized. `base` may be empty; `probe` may be
/// the same node as `base`.
struct ObjectiveParts {
    Var base;
    Var probe;
};

using ObjectiveFn = std::function<ObjectiveParts(Tape&, std::span<const Var>)>;

struct PenalizedGradient {
    double base = 0.0;
    /// ‖∇θ probe‖², before weighting.
    double penalty = 0.0;
    /// ∇θ [base_weight·base + penalty_weight·penalty]; empty when not requested.
    TensorList gradient;
};

/// Evaluates base_weight·base(θ) + penalty_weight·‖∇θ probe(θ)‖² and its
/// gradient. The objective may be invoked twice in finite-difference mode
/// (at θ and θ+εv) and must be deterministic across calls.
PenalizedGradient penalized_gradient(const ObjectiveFn& objective, const TensorList& theta,
                                     double base_weight, double penalty_weight,
                                     const GradMode& mode, bool want_gradient = true);

} // namespace microreg::ad
