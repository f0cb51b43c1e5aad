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

#include "microreg/regularizers.hpp"

#include "microreg/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace microreg {

std::string_view regularizer_name(RegularizerKind kind)
{
    switch (kind) {
    case RegularizerKind::GN: return "gn";
    case RegularizerKind::FT: return "ft";
    case RegularizerKind::AJ: return "aj";
    case RegularizerKind::UJ: return "uj";
    case RegularizerKind::SampleGN: return "sample-gn";
    }
    return "unknown";
}

std::optional<RegularizerKind> parse_regularizer(std::string_view name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (auto k : {RegularizerKind::GN, RegularizerKind::FT, RegularizerKind::AJ,
                   RegularizerKind::UJ, RegularizerKind::SampleGN}) {
        if (lower == regularizer_name(k)) {
            return k;
        }
    }
    return std::nullopt;
}

void RegularizerSpec::validate() const
{
    if (!(strength >= 0.0) || !std::isfinite(strength)) {
        throw ValidationError("regularizer strength must be finite and non-negative");
    }
    if (micro_size == 0) {
        throw ValidationError("regularizer micro-batch size must be at least 1");
    }
    ad::validate(mode);
}

std::vector<double> unit_sphere_sample(std::size_t classes, Engine& engine)
{
    if (classes == 0) {
        throw ValidationError("unit_sphere_sample: dimension must be at least 1");
    }
    std::vector<double> u(classes);
    double norm_sq = 0.0;
    while (norm_sq == 0.0) {
        norm_sq = 0.0;
        for (double& v : u) {
            v = standard_normal(engine);
            norm_sq += v * v;
        }
    }
    const double norm = std::sqrt(norm_sq);
    for (double& v : u) {
        v /= norm;
    }
    return u;
}

std::size_t sample_slice_index(const StreamKey& rng, std::size_t count)
{
    Engine engine = rng.engine(std::numeric_limits<std::uint64_t>::max());
    return std::uniform_int_distribution<std::size_t>(0, count - 1)(engine);
}

std::vector<Label> sample_predictive_labels(const Tensor& logits, Engine& engine)
{
    const std::size_t rows = logits.rows();
    const std::size_t cols = logits.cols();
    std::vector<Label> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        out[i] = sample_predictive_label(
            std::span<const double>(logits.data() + i * cols, cols), engine);
    }
    return out;
}

namespace {

enum class Probe { TrueLabelLoss, SampledLabelLoss, Contraction };

struct MicroSetup {
    Probe probe = Probe::TrueLabelLoss;
    /// Contraction weights (length C) for AJ/UJ.
    std::vector<double> weights;
    /// Engine for sampled labels; drawn lazily from the first forward pass.
    std::optional<Engine> engine;
};

ad::PenalizedGradient evaluate_micro(const ModelParams& params, const MicroBatch& mb,
                                     MicroSetup setup, double base_weight,
                                     double penalty_weight, const PenaltyOptions& options)
{
    std::optional<std::vector<Label>> sampled;
    const ad::ObjectiveFn objective = [&](ad::Tape& tape, std::span<const ad::Var> p) {
        const ad::Var z = forward(p, tape.constant(mb.inputs));
        const ad::Var base = cross_entropy(z, mb.labels);
        ad::Var probe;
        switch (setup.probe) {
        case Probe::TrueLabelLoss:
            probe = cross_entropy(z, mb.labels);
            break;
        case Probe::SampledLabelLoss:
            if (!sampled) {
                sampled = sample_predictive_labels(z.value(), *setup.engine);
            }
            probe = cross_entropy(z, *sampled);
            break;
        case Probe::Contraction: {
            const std::size_t c = setup.weights.size();
            const ad::Var w = tape.constant(Tensor(Shape{c, 1}, setup.weights));
            probe = ad::mean(ad::matmul(z, w));
            break;
        }
        }
        return ad::ObjectiveParts{base, probe};
    };
    return ad::penalized_gradient(objective, params, base_weight, penalty_weight, options.mode,
                                  options.want_gradient);
}

PenalizedLoss reduce(const ModelParams& params, std::vector<ad::PenalizedGradient>& parts,
                     double lambda, double penalty_scale, bool want_gradient)
{
    PenalizedLoss out;
    const std::size_t k = parts.size();
    const double inv_k = 1.0 / static_cast<double>(k);
    double base = 0.0;
    double penalty = 0.0;
    if (want_gradient) {
        out.gradient = zeros_like(params);
    }
    // Slice contributions are summed unweighted and scaled once, matching
    // plain gradient accumulation.
    out.report.micro_norms.reserve(k);
    for (auto& part : parts) {
        base += part.base;
        penalty += part.penalty;
        out.report.micro_norms.push_back(std::sqrt(part.penalty));
        if (want_gradient) {
            axpy(1.0, part.gradient, out.gradient);
        }
    }
    if (want_gradient) {
        for (auto& t : out.gradient) {
            for (double& v : t.values()) {
                v *= inv_k;
            }
        }
    }
    out.report.base_loss = base * inv_k;
    out.report.penalty = penalty * penalty_scale;
    out.report.micro_batches = k;
    out.value = out.report.base_loss + lambda * out.report.penalty;
    return out;
}

void check_lambda(double lambda)
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ValidationError("regularization strength must be finite and non-negative");
    }
}

template <typename SetupFn>
PenalizedLoss average_penalty(const ModelParams& params, const Dataset& data,
                              const MicroBatchPartition& partition, double lambda,
                              const PenaltyOptions& options, SetupFn make_setup)
{
    check_lambda(lambda);
    const std::size_t k = partition.count();
    if (k == 0) {
        throw ValidationError("penalty: empty partition");
    }
    const double inv_k = 1.0 / static_cast<double>(k);
    std::vector<ad::PenalizedGradient> parts(k);
    parallel_for(k, options.threads, [&](std::size_t i) {
        const MicroBatch mb = materialize(data, partition.slice(i));
        parts[i] = evaluate_micro(params, mb, make_setup(i), 1.0, lambda, options);
    });
    return reduce(params, parts, lambda, inv_k, options.want_gradient);
}

} // namespace

PenalizedLoss gn_penalized_loss(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, double lambda,
                                const PenaltyOptions& options)
{
    return average_penalty(params, data, partition, lambda, options,
                           [](std::size_t) { return MicroSetup{Probe::TrueLabelLoss, {}, {}}; });
}

PenalizedLoss ft_penalized_loss(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, double lambda,
                                const StreamKey& rng, const PenaltyOptions& options)
{
    if (options.ft_true_labels) {
        return gn_penalized_loss(params, data, partition, lambda, options);
    }
    return average_penalty(params, data, partition, lambda, options, [&](std::size_t i) {
        return MicroSetup{Probe::SampledLabelLoss, {}, rng.engine(i)};
    });
}

PenalizedLoss aj_penalized_loss(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, double lambda,
                                const PenaltyOptions& options)
{
    const std::size_t c = data.class_count;
    const std::vector<double> uniform(c, 1.0 / static_cast<double>(c));
    return average_penalty(params, data, partition, lambda, options, [&](std::size_t) {
        return MicroSetup{Probe::Contraction, uniform, {}};
    });
}

PenalizedLoss uj_penalized_loss(const ModelParams& params, const Dataset& data,
                                const MicroBatchPartition& partition, double lambda,
                                const StreamKey& rng, const PenaltyOptions& options)
{
    const std::size_t c = data.class_count;
    if (options.uj_fixed_direction && options.uj_fixed_direction->size() != c) {
        throw ValidationError("uj: fixed direction must have one entry per class");
    }
    return average_penalty(params, data, partition, lambda, options, [&](std::size_t i) {
        if (options.uj_fixed_direction) {
            return MicroSetup{Probe::Contraction, *options.uj_fixed_direction, {}};
        }
        Engine engine = rng.engine(i);
        return MicroSetup{Probe::Contraction, unit_sphere_sample(c, engine), {}};
    });
}

PenalizedLoss sample_gn_penalized_loss(const ModelParams& params, const Dataset& data,
                                       const MicroBatchPartition& partition, double lambda,
                                       const StreamKey& rng, const PenaltyOptions& options)
{
    check_lambda(lambda);
    const std::size_t k = partition.count();
    if (k == 0) {
        throw ValidationError("penalty: empty partition");
    }
    const double inv_k = 1.0 / static_cast<double>(k);
    const std::size_t chosen = sample_slice_index(rng, k);
    std::vector<ad::PenalizedGradient> parts(k);
    parallel_for(k, options.threads, [&](std::size_t i) {
        const MicroBatch mb = materialize(data, partition.slice(i));
        const double weight = i == chosen ? lambda * static_cast<double>(k) : 0.0;
        parts[i] = evaluate_micro(params, mb, MicroSetup{Probe::TrueLabelLoss, {}, {}}, 1.0,
                                  weight, options);
    });
    PenalizedLoss out = reduce(params, parts, lambda, inv_k, options.want_gradient);
    out.report.penalty = parts[chosen].penalty;
    out.value = out.report.base_loss + lambda * out.report.penalty;
    return out;
}

PenalizedLoss penalized_loss(const RegularizerSpec& spec, const ModelParams& params,
                             const Dataset& data, const MicroBatchPartition& partition,
                             std::uint64_t step, std::size_t threads, bool want_gradient)
{
    spec.validate();
    PenaltyOptions options;
    options.mode = spec.mode;
    options.threads = threads;
    options.want_gradient = want_gradient;
    const StreamKey key{spec.seed, step};
    switch (spec.kind) {
    case RegularizerKind::GN:
        return gn_penalized_loss(params, data, partition, spec.strength, options);
    case RegularizerKind::FT:
        return ft_penalized_loss(params, data, partition, spec.strength, key, options);
    case RegularizerKind::AJ:
        return aj_penalized_loss(params, data, partition, spec.strength, options);
    case RegularizerKind::UJ:
        return uj_penalized_loss(params, data, partition, spec.strength, key, options);
    case RegularizerKind::SampleGN:
        return sample_gn_penalized_loss(params, data, partition, spec.strength, key, options);
    }
    throw ValidationError("unknown regularizer kind");
}

} // namespace microreg
