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

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation applied to its variables. Backward passes
// walk the tape in reverse; when `create_graph` is set the backward pass is
// itself expressed in taped operations, so gradients can be differentiated a
// second time (double backprop).

#include "microreg/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace microreg::ad {

enum class Op : std::uint8_t {
    Leaf,
    Constant,
    // Public primitive set.
    Add, // same shape, or [m,n] + [n] broadcast over rows
    Sub,
    Scale,
    Mul,
    MatMul,
    Relu,
    LogSoftmax,
    Gather,
    Sum,
    Mean,
    Square,
    Sqrt,
    Concat,
    Reshape,
    // Support ops emitted by backward passes.
    Exp,
    Div,
    RowSum,
    ColSum,
    BroadcastRows,
    BroadcastCols,
    Expand,
    Scatter,
    Slice,
    Pad,
};

std::string_view op_name(Op op);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as its tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    std::size_t id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

struct GradOptions {
    /// Record the backward pass so the returned gradients are differentiable.
    bool create_graph = false;
    /// Keep the tape usable for another backward pass. Defaults to create_graph.
    std::optional<bool> retain_graph;
};

/// Extra per-node data needed by some operations.
struct NodeAttrs {
    double scalar = 0.0;
    bool trans_a = false;
    bool trans_b = false;
    std::vector<std::size_t> indices;
    Shape shape;
    std::size_t offset = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input.
    Var leaf(Tensor value);
    /// Non-differentiable input.
    Var constant(Tensor value);

    /// Gradients of the rank-0 `output` with respect to each of `wrt`, in order.
    std::vector<Var> grad(Var output, std::span<const Var> wrt, GradOptions options = {});

    /// Gradient for every leaf on the tape, keyed by node id.
    std::map<std::size_t, Var> backward(Var output, bool create_graph);

    bool recording() const noexcept { return recording_; }
    bool consumed() const noexcept { return consumed_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::vector<Var> leaves();

    Var record(Op op, std::vector<std::size_t> inputs, Tensor value, NodeAttrs attrs = {});

private:
    friend class Var;
    friend class NoGradGuard;

    struct Node {
        Tensor value;
        Op op;
        bool requires_grad;
        std::vector<std::size_t> inputs;
        NodeAttrs attrs;
    };

    const Node& node(std::size_t id) const { return nodes_[id]; }
    std::vector<std::optional<Var>> backward_node(std::size_t id, Var grad_out,
                                                  const std::vector<bool>& want);

    std::deque<Node> nodes_;
    bool recording_ = true;
    bool consumed_ = false;
};

/// Disables recording on a tape for the guard's lifetime: ops produce constants.
class NoGradGuard {
public:
    explicit NoGradGuard(Tape& tape) : tape_(tape), previous_(tape.recording_)
    {
        tape_.recording_ = false;
    }
    ~NoGradGuard() { tape_.recording_ = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape& tape_;
    bool previous_;
};

// Primitive operations. All inputs must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var mul(Var a, Var b);
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var relu(Var a);
Var log_softmax(Var a);
Var gather(Var a, std::vector<std::size_t> index);
Var sum(Var a);
Var mean(Var a);
Var square(Var a);
Var sqrt(Var a);
Var concat(std::span<const Var> parts);
Var reshape(Var a, Shape shape);

Var exp(Var a);
Var div(Var a, Var b);
Var row_sum(Var a);
Var col_sum(Var a);
Var broadcast_rows(Var a, std::size_t rows);
Var broadcast_cols(Var a, std::size_t cols);
Var expand(Var a, Shape shape);
Var scatter(Var a, std::vector<std::size_t> index, std::size_t cols);
Var slice(Var a, std::size_t offset, Shape shape);
Var pad(Var a, std::size_t offset, std::size_t total);

/// Generic entry point over the public primitive set. Attributes that a
/// primitive does not use are ignored.
Var record_primitive(Op kind, std::span<const Var> inputs, const NodeAttrs& attrs = {});

} // namespace microreg::ad
