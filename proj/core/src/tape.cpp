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

#include "microreg/tape.hpp"

#include "microreg/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace microreg::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

Tape& same_tape(Var a, Var b)
{
    if (!a.valid() || a.tape() != b.tape()) {
        throw TapeError("operands belong to different tapes");
    }
    return *a.tape();
}

Tape& tape_of(Var a)
{
    if (!a.valid()) {
        throw TapeError("operation on an empty variable");
    }
    return *a.tape();
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and "
                         + to_string(b.shape()) + " differ");
    }
}

void require_rank(std::string_view op, const Tensor& a, std::size_t rank)
{
    if (a.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got "
                         + to_string(a.shape()));
    }
}

template <typename F>
Tensor map_values(const Tensor& a, F f)
{
    Tensor out(a.shape());
    const auto in = a.values();
    auto o = out.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
        o[i] = f(in[i]);
    }
    return out;
}

template <typename F>
Tensor zip_values(const Tensor& a, const Tensor& b, F f)
{
    Tensor out(a.shape());
    const auto x = a.values();
    const auto y = b.values();
    auto o = out.values();
    for (std::size_t i = 0; i < x.size(); ++i) {
        o[i] = f(x[i], y[i]);
    }
    return out;
}

Var emit(Op op, std::initializer_list<Var> inputs, Tensor value, NodeAttrs attrs = {})
{
    Tape& tape = tape_of(*inputs.begin());
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& v : inputs) {
        if (v.tape() != &tape) {
            throw TapeError(std::string(op_name(op)) + ": operands belong to different tapes");
        }
        ids.push_back(v.id());
    }
    return tape.record(op, std::move(ids), std::move(value), std::move(attrs));
}

} // namespace

std::string_view op_name(Op op)
{
    switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Scale: return "scale";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Relu: return "relu";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Gather: return "gather";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Concat: return "concat";
    case Op::Reshape: return "reshape";
    case Op::Exp: return "exp";
    case Op::Div: return "div";
    case Op::RowSum: return "row_sum";
    case Op::ColSum: return "col_sum";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::Expand: return "expand";
    case Op::Scatter: return "scatter";
    case Op::Slice: return "slice";
    case Op::Pad: return "pad";
    }
    return "unknown";
}

const Tensor& Var::value() const
{
    if (tape_ == nullptr) {
        throw TapeError("value() of an empty variable");
    }
    return tape_->node(id_).value;
}

bool Var::requires_grad() const
{
    return tape_ != nullptr && tape_->node(id_).requires_grad;
}

Var Tape::leaf(Tensor value)
{
    if (!value.all_finite()) {
        throw NonFiniteError("leaf: non-finite value");
    }
    nodes_.push_back(Node{std::move(value), Op::Leaf, true, {}, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value)
{
    if (!value.all_finite()) {
        throw NonFiniteError("constant: non-finite value");
    }
    nodes_.push_back(Node{std::move(value), Op::Constant, false, {}, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Op op, std::vector<std::size_t> inputs, Tensor value, NodeAttrs attrs)
{
    if (!value.all_finite()) {
        throw NonFiniteError(std::string(op_name(op)) + ": produced a non-finite value");
    }
    bool needs_grad = false;
    if (recording_) {
        for (std::size_t id : inputs) {
            needs_grad = needs_grad || nodes_[id].requires_grad;
        }
    }
    if (!needs_grad) {
        inputs.clear();
        attrs = {};
    }
    nodes_.push_back(Node{std::move(value), op, needs_grad, std::move(inputs), std::move(attrs)});
    return Var(this, nodes_.size() - 1);
}

std::vector<Var> Tape::leaves()
{
    std::vector<Var> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].op == Op::Leaf) {
            out.push_back(Var(this, i));
        }
    }
    return out;
}

std::vector<Var> Tape::grad(Var output, std::span<const Var> wrt, GradOptions options)
{
    if (output.tape() != this) {
        throw TapeError("grad: output does not belong to this tape");
    }
    if (consumed_) {
        throw TapeError("grad: tape was consumed by an earlier backward pass without retain_graph");
    }
    if (output.value().rank() != 0) {
        throw TapeError("grad: output must be a rank-0 scalar, got shape "
                        + to_string(output.value().shape()));
    }
    const bool create_graph = options.create_graph;
    const bool retain = options.retain_graph.value_or(create_graph);

    const std::size_t last = output.id();
    std::vector<bool> needed(last + 1, false);
    for (const Var& w : wrt) {
        if (w.tape() != this) {
            throw TapeError("grad: differentiation target does not belong to this tape");
        }
        if (w.id() <= last) {
            needed[w.id()] = true;
        }
    }
    for (std::size_t id = 0; id <= last; ++id) {
        const Node& n = nodes_[id];
        if (!n.requires_grad || needed[id]) {
            continue;
        }
        needed[id] = std::any_of(n.inputs.begin(), n.inputs.end(),
                                 [&](std::size_t in) { return needed[in]; });
    }

    std::vector<std::optional<Var>> grads(last + 1);
    {
        NoGradGuard guard(*this);
        grads[last] = constant(Tensor::scalar(1.0));
    }

    const bool previous = recording_;
    recording_ = create_graph;
    try {
        for (std::size_t id = last + 1; id-- > 0;) {
            if (!needed[id] || !grads[id]) {
                continue;
            }
            const Node& n = nodes_[id];
            if (n.inputs.empty()) {
                continue;
            }
            std::vector<bool> want(n.inputs.size());
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                want[k] = needed[n.inputs[k]];
            }
            auto input_grads = backward_node(id, *grads[id], want);
            // Re-read the node: backward_node may have appended to the tape.
            const Node& again = nodes_[id];
            for (std::size_t k = 0; k < again.inputs.size(); ++k) {
                if (!want[k] || !input_grads[k]) {
                    continue;
                }
                const std::size_t in = again.inputs[k];
                grads[in] = grads[in] ? add(*grads[in], *input_grads[k]) : *input_grads[k];
            }
        }
    } catch (...) {
        recording_ = previous;
        throw;
    }
    recording_ = previous;

    std::vector<Var> result;
    result.reserve(wrt.size());
    for (const Var& w : wrt) {
        if (w.id() <= last && grads[w.id()]) {
            result.push_back(*grads[w.id()]);
        } else {
            NoGradGuard guard(*this);
            result.push_back(constant(Tensor(w.value().shape(), 0.0)));
        }
    }
    if (!retain) {
        consumed_ = true;
    }
    return result;
}

std::map<std::size_t, Var> Tape::backward(Var output, bool create_graph)
{
    const std::vector<Var> targets = leaves();
    const std::vector<Var> g = grad(output, targets, GradOptions{create_graph, std::nullopt});
    std::map<std::size_t, Var> out;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        out.emplace(targets[i].id(), g[i]);
    }
    return out;
}

std::vector<std::optional<Var>> Tape::backward_node(std::size_t id, Var g,
                                                    const std::vector<bool>& want)
{
    // Copy what we need: appending nodes never invalidates deque references,
    // but keeping values explicit makes the data flow obvious.
    const Node& n = nodes_[id];
    const Op op = n.op;
    const NodeAttrs attrs = n.attrs;
    const std::vector<std::size_t> in = n.inputs;
    auto input = [&](std::size_t k) { return Var(this, in[k]); };
    const Var out(this, id);

    std::vector<std::optional<Var>> r(in.size());
    switch (op) {
    case Op::Leaf:
    case Op::Constant:
        break;
    case Op::Add:
        if (want[0]) {
            r[0] = g;
        }
        if (want[1]) {
            r[1] = input(1).shape() == input(0).shape() ? g : col_sum(g);
        }
        break;
    case Op::Sub:
        if (want[0]) {
            r[0] = g;
        }
        if (want[1]) {
            r[1] = scale(g, -1.0);
        }
        break;
    case Op::Scale:
        r[0] = scale(g, attrs.scalar);
        break;
    case Op::Mul:
        if (want[0]) {
            r[0] = mul(g, input(1));
        }
        if (want[1]) {
            r[1] = mul(g, input(0));
        }
        break;
    case Op::MatMul: {
        const Var a = input(0);
        const Var b = input(1);
        if (!attrs.trans_a && !attrs.trans_b) {
            if (want[0]) r[0] = matmul(g, b, false, true);
            if (want[1]) r[1] = matmul(a, g, true, false);
        } else if (!attrs.trans_a && attrs.trans_b) {
            if (want[0]) r[0] = matmul(g, b, false, false);
            if (want[1]) r[1] = matmul(g, a, true, false);
        } else if (attrs.trans_a && !attrs.trans_b) {
            if (want[0]) r[0] = matmul(b, g, false, true);
            if (want[1]) r[1] = matmul(a, g, false, false);
        } else {
            if (want[0]) r[0] = matmul(b, g, true, true);
            if (want[1]) r[1] = matmul(g, a, true, true);
        }
        break;
    }
    case Op::Relu: {
        Tensor mask = map_values(input(0).value(), [](double x) { return x > 0.0 ? 1.0 : 0.0; });
        Var m;
        {
            NoGradGuard guard(*this);
            m = constant(std::move(mask));
        }
        r[0] = mul(g, m);
        break;
    }
    case Op::LogSoftmax: {
        const std::size_t cols = out.value().rank() == 2 ? out.value().cols() : out.value().size();
        if (out.value().rank() == 2) {
            r[0] = sub(g, mul(exp(out), broadcast_cols(row_sum(g), cols)));
        } else {
            r[0] = sub(g, mul(exp(out), expand(sum(g), out.shape())));
        }
        break;
    }
    case Op::Gather:
        r[0] = scatter(g, attrs.indices, input(0).value().cols());
        break;
    case Op::Sum:
        r[0] = expand(g, input(0).shape());
        break;
    case Op::Mean:
        r[0] = expand(scale(g, 1.0 / static_cast<double>(input(0).value().size())),
                      input(0).shape());
        break;
    case Op::Square:
        r[0] = mul(g, scale(input(0), 2.0));
        break;
    case Op::Sqrt:
        r[0] = div(g, scale(out, 2.0));
        break;
    case Op::Concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
            const Shape s = input(k).shape();
            if (want[k]) {
                r[k] = slice(g, offset, s);
            }
            offset += element_count(s);
        }
        break;
    }
    case Op::Reshape:
        r[0] = reshape(g, input(0).shape());
        break;
    case Op::Exp:
        r[0] = mul(g, out);
        break;
    case Op::Div:
        if (want[0]) {
            r[0] = div(g, input(1));
        }
        if (want[1]) {
            r[1] = scale(div(mul(g, out), input(1)), -1.0);
        }
        break;
    case Op::RowSum:
        r[0] = broadcast_cols(g, input(0).value().cols());
        break;
    case Op::ColSum:
        r[0] = broadcast_rows(g, input(0).value().rows());
        break;
    case Op::BroadcastRows:
        r[0] = col_sum(g);
        break;
    case Op::BroadcastCols:
        r[0] = row_sum(g);
        break;
    case Op::Expand:
        r[0] = reshape(sum(g), input(0).shape());
        break;
    case Op::Scatter:
        r[0] = gather(g, attrs.indices);
        break;
    case Op::Slice:
        r[0] = pad(g, attrs.offset, input(0).value().size());
        break;
    case Op::Pad:
        r[0] = slice(g, attrs.offset, input(0).shape());
        break;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Forward definitions.

Var add(Var a, Var b)
{
    same_tape(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.shape() == y.shape()) {
        return emit(Op::Add, {a, b}, zip_values(x, y, [](double p, double q) { return p + q; }));
    }
    if (x.rank() == 2 && y.rank() == 1 && y.size() == x.cols()) {
        Tensor out = x;
        const std::size_t cols = x.cols();
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
                out.at(i, j) += y[j];
            }
        }
        return emit(Op::Add, {a, b}, std::move(out));
    }
    throw ShapeError("add: shapes " + to_string(x.shape()) + " and " + to_string(y.shape())
                     + " do not conform");
}

Var sub(Var a, Var b)
{
    same_tape(a, b);
    require_same_shape("sub", a.value(), b.value());
    return emit(Op::Sub, {a, b},
                zip_values(a.value(), b.value(), [](double p, double q) { return p - q; }));
}

Var scale(Var a, double c)
{
    NodeAttrs attrs;
    attrs.scalar = c;
    return emit(Op::Scale, {a}, map_values(a.value(), [c](double x) { return c * x; }),
                std::move(attrs));
}

Var mul(Var a, Var b)
{
    same_tape(a, b);
    require_same_shape("mul", a.value(), b.value());
    return emit(Op::Mul, {a, b},
                zip_values(a.value(), b.value(), [](double p, double q) { return p * q; }));
}

Var matmul(Var a, Var b, bool trans_a, bool trans_b)
{
    same_tape(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    require_rank("matmul", x, 2);
    require_rank("matmul", y, 2);
    const std::size_t m = trans_a ? x.cols() : x.rows();
    const std::size_t k = trans_a ? x.rows() : x.cols();
    const std::size_t k2 = trans_b ? y.cols() : y.rows();
    const std::size_t n = trans_b ? y.rows() : y.cols();
    if (k != k2) {
        throw ShapeError("matmul: inner extents differ (" + to_string(x.shape()) + " x "
                         + to_string(y.shape()) + ")");
    }
    Tensor out(Shape{m, n});
    const ConstMap xm(x.data(), static_cast<Eigen::Index>(x.rows()),
                      static_cast<Eigen::Index>(x.cols()));
    const ConstMap ym(y.data(), static_cast<Eigen::Index>(y.rows()),
                      static_cast<Eigen::Index>(y.cols()));
    MutMap om(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    if (!trans_a && !trans_b) {
        om.noalias() = xm * ym;
    } else if (!trans_a && trans_b) {
        om.noalias() = xm * ym.transpose();
    } else if (trans_a && !trans_b) {
        om.noalias() = xm.transpose() * ym;
    } else {
        om.noalias() = xm.transpose() * ym.transpose();
    }
    NodeAttrs attrs;
    attrs.trans_a = trans_a;
    attrs.trans_b = trans_b;
    return emit(Op::MatMul, {a, b}, std::move(out), std::move(attrs));
}

Var relu(Var a)
{
    return emit(Op::Relu, {a}, map_values(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }));
}

Var log_softmax(Var a)
{
    const Tensor& x = a.value();
    if (x.rank() != 1 && x.rank() != 2) {
        throw ShapeError("log_softmax: expected rank 1 or 2, got " + to_string(x.shape()));
    }
    const std::size_t cols = x.rank() == 2 ? x.cols() : x.size();
    const std::size_t rows = x.size() / std::max<std::size_t>(cols, 1);
    if (cols == 0) {
        throw ShapeError("log_softmax: empty class axis");
    }
    Tensor out(x.shape());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = x.data() + i * cols;
        const double mx = *std::max_element(row, row + cols);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            s += std::exp(row[j] - mx);
        }
        const double log_s = std::log(s);
        for (std::size_t j = 0; j < cols; ++j) {
            out[i * cols + j] = (row[j] - mx) - log_s;
        }
    }
    return emit(Op::LogSoftmax, {a}, std::move(out));
}

Var gather(Var a, std::vector<std::size_t> index)
{
    const Tensor& x = a.value();
    require_rank("gather", x, 2);
    if (index.size() != x.rows()) {
        throw ShapeError("gather: " + std::to_string(index.size()) + " indices for "
                         + std::to_string(x.rows()) + " rows");
    }
    Tensor out(Shape{x.rows()});
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= x.cols()) {
            throw ShapeError("gather: index " + std::to_string(index[i]) + " out of range");
        }
        out[i] = x.at(i, index[i]);
    }
    NodeAttrs attrs;
    attrs.indices = std::move(index);
    return emit(Op::Gather, {a}, std::move(out), std::move(attrs));
}

Var sum(Var a)
{
    double s = 0.0;
    for (double v : a.value().values()) {
        s += v;
    }
    return emit(Op::Sum, {a}, Tensor::scalar(s));
}

Var mean(Var a)
{
    const Tensor& x = a.value();
    if (x.size() == 0) {
        throw ShapeError("mean: empty tensor");
    }
    double s = 0.0;
    for (double v : x.values()) {
        s += v;
    }
    return emit(Op::Mean, {a}, Tensor::scalar(s / static_cast<double>(x.size())));
}

Var square(Var a)
{
    return emit(Op::Square, {a}, map_values(a.value(), [](double x) { return x * x; }));
}

Var sqrt(Var a)
{
    return emit(Op::Sqrt, {a}, map_values(a.value(), [](double x) { return std::sqrt(x); }));
}

Var concat(std::span<const Var> parts)
{
    if (parts.empty()) {
        throw ShapeError("concat: no inputs");
    }
    Tape& tape = tape_of(parts.front());
    std::vector<double> values;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        if (p.tape() != &tape) {
            throw TapeError("concat: operands belong to different tapes");
        }
        values.insert(values.end(), p.value().values().begin(), p.value().values().end());
        ids.push_back(p.id());
    }
    const std::size_t n = values.size();
    return tape.record(Op::Concat, std::move(ids), Tensor(Shape{n}, std::move(values)));
}

Var reshape(Var a, Shape shape)
{
    if (element_count(shape) != a.value().size()) {
        throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    }
    return emit(Op::Reshape, {a}, a.value().reshaped(std::move(shape)));
}

Var exp(Var a)
{
    return emit(Op::Exp, {a}, map_values(a.value(), [](double x) { return std::exp(x); }));
}

Var div(Var a, Var b)
{
    same_tape(a, b);
    require_same_shape("div", a.value(), b.value());
    return emit(Op::Div, {a, b},
                zip_values(a.value(), b.value(), [](double p, double q) { return p / q; }));
}

Var row_sum(Var a)
{
    const Tensor& x = a.value();
    require_rank("row_sum", x, 2);
    Tensor out(Shape{x.rows()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            s += x.at(i, j);
        }
        out[i] = s;
    }
    return emit(Op::RowSum, {a}, std::move(out));
}

Var col_sum(Var a)
{
    const Tensor& x = a.value();
    require_rank("col_sum", x, 2);
    Tensor out(Shape{x.cols()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out[j] += x.at(i, j);
        }
    }
    return emit(Op::ColSum, {a}, std::move(out));
}

Var broadcast_rows(Var a, std::size_t rows)
{
    const Tensor& x = a.value();
    require_rank("broadcast_rows", x, 1);
    Tensor out(Shape{rows, x.size()});
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy(x.values().begin(), x.values().end(), out.data() + i * x.size());
    }
    return emit(Op::BroadcastRows, {a}, std::move(out));
}

Var broadcast_cols(Var a, std::size_t cols)
{
    const Tensor& x = a.value();
    require_rank("broadcast_cols", x, 1);
    Tensor out(Shape{x.size(), cols});
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::fill_n(out.data() + i * cols, cols, x[i]);
    }
    return emit(Op::BroadcastCols, {a}, std::move(out));
}

Var expand(Var a, Shape shape)
{
    if (a.value().size() != 1) {
        throw ShapeError("expand: source must hold one value, got " + to_string(a.shape()));
    }
    Tensor out(std::move(shape), a.value()[0]);
    return emit(Op::Expand, {a}, std::move(out));
}

Var scatter(Var a, std::vector<std::size_t> index, std::size_t cols)
{
    const Tensor& x = a.value();
    require_rank("scatter", x, 1);
    if (index.size() != x.size()) {
        throw ShapeError("scatter: index length does not match values");
    }
    Tensor out(Shape{x.size(), cols});
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= cols) {
            throw ShapeError("scatter: index " + std::to_string(index[i]) + " out of range");
        }
        out.at(i, index[i]) = x[i];
    }
    NodeAttrs attrs;
    attrs.indices = std::move(index);
    return emit(Op::Scatter, {a}, std::move(out), std::move(attrs));
}

Var slice(Var a, std::size_t offset, Shape shape)
{
    const Tensor& x = a.value();
    const std::size_t n = element_count(shape);
    if (offset + n > x.size()) {
        throw ShapeError("slice: range exceeds source of " + std::to_string(x.size()) + " values");
    }
    std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(offset),
                          x.values().begin() + static_cast<std::ptrdiff_t>(offset + n));
    NodeAttrs attrs;
    attrs.offset = offset;
    return emit(Op::Slice, {a}, Tensor(std::move(shape), std::move(v)), std::move(attrs));
}

Var pad(Var a, std::size_t offset, std::size_t total)
{
    const Tensor& x = a.value();
    if (offset + x.size() > total) {
        throw ShapeError("pad: source does not fit");
    }
    Tensor out(Shape{total});
    std::copy(x.values().begin(), x.values().end(), out.data() + offset);
    NodeAttrs attrs;
    attrs.offset = offset;
    return emit(Op::Pad, {a}, std::move(out), std::move(attrs));
}

Var record_primitive(Op kind, std::span<const Var> inputs, const NodeAttrs& attrs)
{
    auto arity = [&](std::size_t n) {
        if (inputs.size() != n) {
            throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n)
                             + " inputs, got " + std::to_string(inputs.size()));
        }
    };
    switch (kind) {
    case Op::Add: arity(2); return add(inputs[0], inputs[1]);
    case Op::Sub: arity(2); return sub(inputs[0], inputs[1]);
    case Op::Scale: arity(1); return scale(inputs[0], attrs.scalar);
    case Op::Mul: arity(2); return mul(inputs[0], inputs[1]);
    case Op::MatMul: arity(2); return matmul(inputs[0], inputs[1], attrs.trans_a, attrs.trans_b);
    case Op::Relu: arity(1); return relu(inputs[0]);
    case Op::LogSoftmax: arity(1); return log_softmax(inputs[0]);
    case Op::Gather: arity(1); return gather(inputs[0], attrs.indices);
    case Op::Sum: arity(1); return sum(inputs[0]);
    case Op::Mean: arity(1); return mean(inputs[0]);
    case Op::Square: arity(1); return square(inputs[0]);
    case Op::Sqrt: arity(1); return sqrt(inputs[0]);
    case Op::Concat: return concat(inputs);
    case Op::Reshape: arity(1); return reshape(inputs[0], attrs.shape);
    default:
        throw TapeError(std::string(op_name(kind)) + " is not a public primitive");
    }
}

} // namespace microreg::ad
