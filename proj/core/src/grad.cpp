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

#include "microreg/grad.hpp"

#include "microreg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace microreg::ad {

namespace {

std::vector<Var> make_leaves(Tape& tape, const TensorList& theta)
{
    std::vector<Var> leaves;
    leaves.reserve(theta.size());
    for (const auto& t : theta) {
        leaves.push_back(tape.leaf(t));
    }
    return leaves;
}

TensorList values_of(const std::vector<Var>& vars)
{
    TensorList out;
    out.reserve(vars.size());
    for (const auto& v : vars) {
        out.push_back(v.value());
    }
    return out;
}

Var squared_norm_var(const std::vector<Var>& g)
{
    Var total = sum(square(g.front()));
    for (std::size_t i = 1; i < g.size(); ++i) {
        total = add(total, sum(square(g[i])));
    }
    return total;
}

bool all_zero(const TensorList& list)
{
    for (const auto& t : list) {
        for (double v : t.values()) {
            if (v != 0.0) {
                return false;
            }
        }
    }
    return true;
}

} // namespace

void validate(const GradMode& mode)
{
    if (const auto* fd = std::get_if<FiniteDifference>(&mode)) {
        if (fd->step && !(*fd->step > 0.0)) {
            throw ValidationError("finite-difference step must be positive");
        }
    }
}

double default_fd_step(const TensorList& theta)
{
    return 1e-5 * (1.0 + flat_max_abs(theta));
}

ValueAndGrad value_and_grad(const ScalarFn& f, const TensorList& theta)
{
    Tape tape;
    const auto leaves = make_leaves(tape, theta);
    const Var out = f(tape, leaves);
    ValueAndGrad r;
    r.value = out.value().item();
    r.gradient = values_of(tape.grad(out, leaves));
    return r;
}

ValueFn as_value_fn(ScalarFn f)
{
    return [f = std::move(f)](const TensorList& theta) {
        Tape tape;
        NoGradGuard guard(tape);
        std::vector<Var> inputs;
        inputs.reserve(theta.size());
        for (const auto& t : theta) {
            inputs.push_back(tape.constant(t));
        }
        return f(tape, inputs).value().item();
    };
}

TensorList finite_diff_gradient(const ValueFn& f, const TensorList& theta, double eps)
{
    if (!(eps > 0.0)) {
        throw ValidationError("finite_diff_gradient: eps must be positive");
    }
    TensorList out = zeros_like(theta);
    TensorList probe = theta;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        for (std::size_t i = 0; i < theta[k].size(); ++i) {
            const double x = theta[k][i];
            probe[k][i] = x + eps;
            const double up = f(probe);
            probe[k][i] = x - eps;
            const double down = f(probe);
            probe[k][i] = x;
            out[k][i] = (up - down) / (2.0 * eps);
        }
    }
    return out;
}

double squared_norm(const TensorList& list)
{
    double total = 0.0;
    for (const auto& t : list) {
        double s = 0.0;
        for (double v : t.values()) {
            const double sq = v * v;
            s += sq;
        }
        total += s;
    }
    return total;
}

NormSqGradient grad_norm_sq_gradient(const ScalarFn& loss_fn, const TensorList& theta,
                                     const GradMode& mode)
{
    ObjectiveFn objective = [&](Tape& tape, std::span<const Var> params) {
        const Var loss = loss_fn(tape, params);
        return ObjectiveParts{Var{}, loss};
    };
    auto r = penalized_gradient(objective, theta, 0.0, 1.0, mode);
    return NormSqGradient{r.penalty, std::move(r.gradient)};
}

PenalizedGradient penalized_gradient(const ObjectiveFn& objective, const TensorList& theta,
                                     double base_weight, double penalty_weight,
                                     const GradMode& mode, bool want_gradient)
{
    validate(mode);
    PenalizedGradient result;

    Tape tape;
    const auto leaves = make_leaves(tape, theta);
    const ObjectiveParts parts = objective(tape, leaves);
    if (!parts.probe.valid()) {
        throw TapeError("penalized_gradient: objective returned no probe");
    }
    const bool has_base = parts.base.valid();
    const bool shared = has_base && parts.base.id() == parts.probe.id();
    if (has_base) {
        result.base = parts.base.value().item();
    }

    const bool exact = std::holds_alternative<DoubleBackprop>(mode);
    if (want_gradient && penalty_weight != 0.0 && exact) {
        const auto probe_grad = tape.grad(parts.probe, leaves, GradOptions{true, std::nullopt});
        result.penalty = squared_norm(values_of(probe_grad));
        Var total = scale(squared_norm_var(probe_grad), penalty_weight);
        if (has_base) {
            total = add(scale(parts.base, base_weight), total);
        }
        result.gradient = values_of(tape.grad(total, leaves));
        return result;
    }

    // Plain first-order passes: base gradient and probe gradient.
    TensorList base_grad;
    TensorList probe_grad;
    if (shared) {
        probe_grad = values_of(tape.grad(parts.probe, leaves));
        base_grad = probe_grad;
    } else {
        if (has_base && want_gradient) {
            base_grad = values_of(tape.grad(parts.base, leaves, GradOptions{false, true}));
        }
        probe_grad = values_of(tape.grad(parts.probe, leaves));
    }
    result.penalty = squared_norm(probe_grad);
    if (!want_gradient) {
        return result;
    }

    result.gradient = has_base ? scaled(base_grad, base_weight) : zeros_like(theta);
    if (penalty_weight == 0.0 || all_zero(probe_grad)) {
        return result;
    }

    const auto& fd = std::get<FiniteDifference>(mode);
    const double eps = fd.step.value_or(default_fd_step(theta));
    TensorList shifted = theta;
    axpy(eps, probe_grad, shifted);
    if (shifted == theta) {
        throw DegenerateStepError("finite-difference step " + std::to_string(eps)
                                  + " leaves the parameters unchanged");
    }
    Tape shifted_tape;
    const auto shifted_leaves = make_leaves(shifted_tape, shifted);
    const ObjectiveParts shifted_parts = objective(shifted_tape, shifted_leaves);
    const TensorList shifted_grad =
        values_of(shifted_tape.grad(shifted_parts.probe, shifted_leaves));

    // ∇‖g‖² = 2Hg ≈ 2 (g(θ+εg) − g(θ)) / ε
    TensorList hvp = shifted_grad;
    axpy(-1.0, probe_grad, hvp);
    axpy(penalty_weight * 2.0 / eps, hvp, result.gradient);
    return result;
}

} // namespace microreg::ad
