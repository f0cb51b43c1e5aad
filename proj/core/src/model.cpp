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

#include "microreg/model.hpp"

#include "microreg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace microreg {

void ModelSpec::validate() const
{
    if (input_dim == 0) {
        throw ValidationError("model: input_dim must be positive");
    }
    if (class_count < 2) {
        throw ValidationError("model: class_count must be at least 2");
    }
    for (std::size_t w : hidden) {
        if (w == 0) {
            throw ValidationError("model: hidden widths must be positive");
        }
    }
}

std::vector<Shape> ModelSpec::parameter_shapes() const
{
    std::vector<Shape> shapes;
    std::size_t fan_in = input_dim;
    for (std::size_t w : hidden) {
        shapes.push_back({fan_in, w});
        shapes.push_back({w});
        fan_in = w;
    }
    shapes.push_back({fan_in, class_count});
    shapes.push_back({class_count});
    return shapes;
}

std::size_t ModelSpec::parameter_count() const
{
    std::size_t p = 0;
    for (const auto& s : parameter_shapes()) {
        p += element_count(s);
    }
    return p;
}

ModelParams init_params(const ModelSpec& spec)
{
    spec.validate();
    Engine engine = make_engine(spec.init_seed, {0x1a7e5});
    ModelParams params;
    for (const auto& shape : spec.parameter_shapes()) {
        Tensor t(shape);
        if (shape.size() == 2) {
            const double sd = std::sqrt(2.0 / static_cast<double>(shape[0]));
            std::normal_distribution<double> dist(0.0, sd);
            for (double& v : t.values()) {
                v = dist(engine);
            }
        }
        params.push_back(std::move(t));
    }
    return params;
}

ad::Var forward(std::span<const ad::Var> params, ad::Var inputs)
{
    if (params.empty() || params.size() % 2 != 0) {
        throw ShapeError("forward: parameters must come in weight/bias pairs");
    }
    ad::Var h = inputs;
    const std::size_t layers = params.size() / 2;
    for (std::size_t l = 0; l < layers; ++l) {
        h = ad::add(ad::matmul(h, params[2 * l]), params[2 * l + 1]);
        if (l + 1 < layers) {
            h = ad::relu(h);
        }
    }
    return h;
}

Tensor forward(const ModelParams& params, const Tensor& inputs)
{
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    std::vector<ad::Var> p;
    p.reserve(params.size());
    for (const auto& t : params) {
        p.push_back(tape.constant(t));
    }
    return forward(p, tape.constant(inputs)).value();
}

namespace {

std::vector<std::size_t> checked_indices(std::span<const Label> labels, std::size_t rows,
                                         std::size_t classes)
{
    if (labels.size() != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for "
                         + std::to_string(rows) + " rows");
    }
    std::vector<std::size_t> idx(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) {
            throw ValidationError("cross_entropy: label " + std::to_string(labels[i])
                                  + " out of range for " + std::to_string(classes) + " classes");
        }
        idx[i] = labels[i];
    }
    return idx;
}

} // namespace

ad::Var cross_entropy(ad::Var logits, std::span<const Label> labels)
{
    const Tensor& z = logits.value();
    if (z.rank() != 2) {
        throw ShapeError("cross_entropy: logits must be [n, C], got " + to_string(z.shape()));
    }
    auto idx = checked_indices(labels, z.rows(), z.cols());
    return ad::scale(ad::mean(ad::gather(ad::log_softmax(logits), std::move(idx))), -1.0);
}

double cross_entropy(const Tensor& logits, std::span<const Label> labels)
{
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    return cross_entropy(tape.constant(logits), labels).value().item();
}

Tensor softmax(const Tensor& logits)
{
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    return ad::exp(ad::log_softmax(tape.constant(logits))).value();
}

std::vector<Label> predict(const Tensor& logits)
{
    const std::size_t rows = logits.rows();
    const std::size_t cols = logits.cols();
    std::vector<Label> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = logits.data() + i * cols;
        out[i] = static_cast<Label>(std::max_element(row, row + cols) - row);
    }
    return out;
}

double accuracy(const Tensor& logits, std::span<const Label> labels)
{
    const auto pred = predict(logits);
    if (pred.size() != labels.size()) {
        throw ShapeError("accuracy: label count mismatch");
    }
    if (pred.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        hits += pred[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Label sample_predictive_label(std::span<const double> logits, Engine& engine)
{
    if (logits.empty()) {
        throw ShapeError("sample_predictive_label: empty logits");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p[c] = std::exp(logits[c] - mx);
        total += p[c];
    }
    const double u = uniform01(engine) * total;
    double cdf = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (p[c] > 0.0) {
            last_positive = c;
        }
        cdf += p[c];
        if (u < cdf) {
            return static_cast<Label>(c);
        }
    }
    return static_cast<Label>(last_positive);
}

Tensor per_example_jacobian(const ModelParams& params, std::span<const double> x)
{
    const std::size_t p = flat_size(params);
    if (p > kJacobianParameterLimit) {
        throw ValidationError("per_example_jacobian: " + std::to_string(p)
                              + " parameters exceed the dense limit of "
                              + std::to_string(kJacobianParameterLimit));
    }
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& t : params) {
        leaves.push_back(tape.leaf(t));
    }
    const ad::Var input =
        tape.constant(Tensor(Shape{1, x.size()}, std::vector<double>(x.begin(), x.end())));
    const ad::Var z = forward(leaves, input);
    const std::size_t classes = z.value().cols();
    Tensor jac(Shape{p, classes});
    for (std::size_t c = 0; c < classes; ++c) {
        const ad::Var zc = ad::reshape(ad::gather(z, {c}), Shape{});
        const auto g = tape.grad(zc, leaves, ad::GradOptions{false, true});
        std::size_t row = 0;
        for (const auto& gv : g) {
            for (double v : gv.value().values()) {
                jac.at(row++, c) = v;
            }
        }
    }
    return jac;
}

TensorList grad_via_decomposition(const ModelParams& params, std::span<const double> x,
                                  std::span<const double> v)
{
    const Tensor jac = per_example_jacobian(params, x);
    if (v.size() != jac.cols()) {
        throw ShapeError("grad_via_decomposition: weight vector has " + std::to_string(v.size())
                         + " entries for " + std::to_string(jac.cols()) + " classes");
    }
    std::vector<double> flat(jac.rows(), 0.0);
    for (std::size_t r = 0; r < jac.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < jac.cols(); ++c) {
            s += jac.at(r, c) * v[c];
        }
        flat[r] = s;
    }
    return unflatten_like(params, flat);
}

} // namespace microreg
