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

#include "microreg/update_rules.hpp"

#include "parse_number.hpp"

#include "microreg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace microreg {

std::string_view rule_name(RuleKind kind)
{
    switch (kind) {
    case RuleKind::SGD: return "sgd";
    case RuleKind::GraftIterative: return "graft-iterative";
    case RuleKind::GraftExternal: return "graft-external";
    case RuleKind::NGD: return "ngd";
    case RuleKind::AntiPGD: return "anti-pgd";
    }
    return "unknown";
}

std::optional<RuleKind> parse_rule(std::string_view name)
{
    for (auto k : {RuleKind::SGD, RuleKind::GraftIterative, RuleKind::GraftExternal,
                   RuleKind::NGD, RuleKind::AntiPGD}) {
        if (name == rule_name(k)) {
            return k;
        }
    }
    return std::nullopt;
}

std::string_view schedule_name(ScheduleKind kind)
{
    return kind == ScheduleKind::Cosine ? "cosine" : "constant";
}

std::optional<ScheduleKind> parse_schedule(std::string_view name)
{
    if (name == "constant") {
        return ScheduleKind::Constant;
    }
    if (name == "cosine") {
        return ScheduleKind::Cosine;
    }
    return std::nullopt;
}

void UpdateConfig::validate() const
{
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ValidationError("learning rate must be finite and positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ValidationError("momentum must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ValidationError("weight decay must be finite and non-negative");
    }
    if (schedule == ScheduleKind::Cosine && cosine_period == 0) {
        throw ValidationError("cosine schedule needs a positive period");
    }
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
        throw ValidationError("noise variance must be finite and non-negative");
    }
    if (rule == RuleKind::GraftExternal && norm_schedule.empty()) {
        throw ValidationError("external grafting needs a norm schedule file");
    }
}

double UpdateConfig::lr_at(std::uint64_t step) const
{
    if (schedule == ScheduleKind::Constant) {
        return lr;
    }
    const double phase =
        static_cast<double>(step % cosine_period) / static_cast<double>(cosine_period);
    return lr * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0;
}

namespace {

void require_finite(const TensorList& g, const char* what)
{
    if (!all_finite(g)) {
        throw NonFiniteError(std::string(what) + ": non-finite gradient, step aborted");
    }
}

void require_conformant(const TensorList& a, const TensorList& b, const char* what)
{
    if (a.size() != b.size()) {
        throw ShapeError(std::string(what) + ": gradient has " + std::to_string(b.size())
                         + " tensors, parameters have " + std::to_string(a.size()));
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].shape() != b[i].shape()) {
            throw ShapeError(std::string(what) + ": tensor " + std::to_string(i) + " shape "
                             + to_string(b[i].shape()) + " != " + to_string(a[i].shape()));
        }
    }
}

} // namespace

StepResult sgd_step(TensorList& params, const TensorList& gradient, const UpdateConfig& cfg,
                    std::uint64_t step, SgdState& state)
{
    require_conformant(params, gradient, "sgd_step");
    require_finite(gradient, "sgd_step");
    const double eta = cfg.lr_at(step);

    const TensorList* v = &gradient;
    if (cfg.momentum != 0.0 || cfg.weight_decay != 0.0) {
        if (state.velocity.empty()) {
            state.velocity = zeros_like(params);
        }
        for (std::size_t t = 0; t < params.size(); ++t) {
            auto vel = state.velocity[t].values();
            auto g = gradient[t].values();
            auto th = params[t].values();
            for (std::size_t i = 0; i < vel.size(); ++i) {
                vel[i] = cfg.momentum * vel[i] + g[i] + cfg.weight_decay * th[i];
            }
        }
        v = &state.velocity;
    }

    for (std::size_t t = 0; t < params.size(); ++t) {
        auto th = params[t].values();
        auto d = (*v)[t].values();
        for (std::size_t i = 0; i < th.size(); ++i) {
            th[i] -= eta * d[i];
        }
    }
    StepResult r;
    r.update_norm = eta * flat_norm(*v);
    if (!all_finite(params)) {
        throw NonFiniteError("sgd_step: parameters became non-finite");
    }
    return r;
}

StepResult graft_step(TensorList& params, double magnitude, const TensorList& direction)
{
    require_conformant(params, direction, "graft_step");
    require_finite(direction, "graft_step");
    if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) {
        throw NonFiniteError("graft_step: magnitude must be finite and non-negative");
    }
    const double dnorm = flat_norm(direction);
    if (dnorm <= 1e-12 * (1.0 + flat_norm(params))) {
        return StepResult{false, 0.0, "graft: direction gradient vanished, step skipped"};
    }
    const double scale = magnitude / dnorm;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto th = params[t].values();
        auto d = direction[t].values();
        for (std::size_t i = 0; i < th.size(); ++i) {
            th[i] -= scale * d[i];
        }
    }
    return StepResult{true, magnitude, {}};
}

StepResult graft_step(TensorList& params, const TensorList& magnitude_grad,
                      const TensorList& direction)
{
    require_finite(magnitude_grad, "graft_step");
    return graft_step(params, flat_norm(magnitude_grad), direction);
}

GraftGradients iterative_graft_gradients(const TensorList& params, const Dataset& data,
                                         const MicroBatchPartition& partition, double lr,
                                         const StreamKey& rng, std::size_t threads)
{
    const std::size_t k = partition.count();
    if (k == 0) {
        throw ValidationError("iterative grafting: empty partition");
    }
    AccumulatedGradient acc = accumulate_full_gradient(params, data, partition, threads, true);
    Engine engine = rng.engine(0);
    const std::size_t chosen = std::uniform_int_distribution<std::size_t>(0, k - 1)(engine);
    GraftGradients out;
    out.magnitude = scaled(acc.slice_gradients[chosen], lr);
    out.direction = std::move(acc.gradient);
    out.loss = acc.loss;
    out.chosen = chosen;
    return out;
}

void NormSchedule::validate() const
{
    if (steps.size() != norms.size()) {
        throw ValidationError("norm schedule: step and norm counts differ");
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i > 0 && steps[i] <= steps[i - 1]) {
            throw ValidationError("norm schedule: steps must increase strictly (row "
                                  + std::to_string(i + 1) + ")");
        }
        if (!(norms[i] >= 0.0) || !std::isfinite(norms[i])) {
            throw ValidationError("norm schedule: norm at row " + std::to_string(i + 1)
                                  + " must be finite and non-negative");
        }
    }
}

NormSchedule NormSchedule::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open norm schedule " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "step,grad_norm") {
        throw FormatError(path.string() + ": expected header 'step,grad_norm'");
    }
    NormSchedule s;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw FormatError(path.string() + ": line " + std::to_string(row)
                              + ": expected 'step,grad_norm'");
        }
        try {
            std::size_t used = 0;
            const std::string a = line.substr(0, comma);
            const std::string b = line.substr(comma + 1);
            const unsigned long long step = std::stoull(a, &used);
            if (used != a.size()) {
                throw std::invalid_argument(a);
            }
            const auto norm = detail::parse_double(b);
            if (!norm) {
                throw std::invalid_argument(b);
            }
            s.steps.push_back(step);
            s.norms.push_back(*norm);
        } catch (const std::logic_error&) {
            throw FormatError(path.string() + ": line " + std::to_string(row)
                              + ": malformed number");
        }
    }
    if (s.empty()) {
        throw ValidationError(path.string() + ": norm schedule is empty");
    }
    s.validate();
    return s;
}

void NormSchedule::save(const std::filesystem::path& path) const
{
    validate();
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write norm schedule " + path.string());
    }
    out << "step,grad_norm\n";
    char buf[64];
    for (std::size_t i = 0; i < steps.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", norms[i]);
        out << steps[i] << ',' << buf << '\n';
    }
    out.flush();
    if (!out) {
        throw FormatError("write failed: " + path.string());
    }
}

GraftMagnitude external_graft_magnitude(const NormSchedule& schedule, std::uint64_t step,
                                        double lr)
{
    if (schedule.empty()) {
        throw ValidationError("external grafting: norm schedule is empty");
    }
    const auto& s = schedule.steps;
    const auto& n = schedule.norms;
    if (step >= s.back()) {
        return GraftMagnitude{lr * n.back(), step > s.back()};
    }
    if (step <= s.front()) {
        return GraftMagnitude{lr * n.front(), false};
    }
    const auto hi = static_cast<std::size_t>(std::upper_bound(s.begin(), s.end(), step) - s.begin());
    const std::size_t lo = hi - 1;
    if (s[lo] == step) {
        return GraftMagnitude{lr * n[lo], false};
    }
    const double w = static_cast<double>(step - s[lo]) / static_cast<double>(s[hi] - s[lo]);
    return GraftMagnitude{lr * ((1.0 - w) * n[lo] + w * n[hi]), false};
}

StepResult ngd_step(TensorList& params, const TensorList& gradient, double lr)
{
    require_conformant(params, gradient, "ngd_step");
    require_finite(gradient, "ngd_step");
    const double gnorm = flat_norm(gradient);
    if (gnorm == 0.0) {
        return StepResult{false, 0.0, "ngd: zero gradient, step skipped"};
    }
    const double scale = lr / gnorm;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto th = params[t].values();
        auto g = gradient[t].values();
        for (std::size_t i = 0; i < th.size(); ++i) {
            th[i] -= scale * g[i];
        }
    }
    return StepResult{true, lr, {}};
}

AntiPgdState::AntiPgdState(double variance_, std::uint64_t shutoff_, std::uint64_t seed)
    : variance(variance_), shutoff(shutoff_), engine(make_engine(seed, {0xa271}))
{
    if (!(variance >= 0.0) || !std::isfinite(variance)) {
        throw ValidationError("anti-pgd: noise variance must be finite and non-negative");
    }
}

StepResult anti_pgd_step(TensorList& params, const TensorList& gradient, AntiPgdState& state,
                         const UpdateConfig& cfg, std::uint64_t step, SgdState& sgd)
{
    StepResult r = sgd_step(params, gradient, cfg, step, sgd);
    if (step >= state.shutoff || state.variance == 0.0) {
        return r;
    }
    if (state.xi.empty()) {
        state.xi = zeros_like(params);
    }
    const double sigma = std::sqrt(state.variance);
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto th = params[t].values();
        auto xi = state.xi[t].values();
        for (std::size_t i = 0; i < th.size(); ++i) {
            const double next = sigma * standard_normal(state.engine);
            th[i] += next - xi[i];
            xi[i] = next;
        }
    }
    return r;
}

} // namespace microreg
