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

#include "microreg/tensor.hpp"

#include "microreg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace microreg {

std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += ",";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill)
{
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values))
{
    if (element_count(shape_) != values_.size()) {
        throw ShapeError("tensor shape " + to_string(shape_) + " does not match "
                         + std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> v)
{
    return Tensor(Shape{rows, cols}, std::vector<double>(v));
}

std::size_t Tensor::rows() const
{
    if (shape_.size() != 2) {
        throw ShapeError("rows() needs a matrix, got " + to_string(shape_));
    }
    return shape_[0];
}

std::size_t Tensor::cols() const
{
    if (shape_.size() != 2) {
        throw ShapeError("cols() needs a matrix, got " + to_string(shape_));
    }
    return shape_[1];
}

double Tensor::item() const
{
    if (values_.size() != 1) {
        throw ShapeError("item() on tensor of shape " + to_string(shape_));
    }
    return values_[0];
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const
{
    return Tensor(std::move(shape), values_);
}

std::size_t flat_size(const TensorList& list)
{
    std::size_t n = 0;
    for (const auto& t : list) {
        n += t.size();
    }
    return n;
}

double flat_dot(const TensorList& a, const TensorList& b)
{
    if (a.size() != b.size()) {
        throw ShapeError("flat_dot: tensor lists differ in length");
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].shape() != b[k].shape()) {
            throw ShapeError("flat_dot: shape mismatch at tensor " + std::to_string(k));
        }
        const auto av = a[k].values();
        const auto bv = b[k].values();
        for (std::size_t i = 0; i < av.size(); ++i) {
            acc += av[i] * bv[i];
        }
    }
    return acc;
}

double flat_norm(const TensorList& a)
{
    return std::sqrt(flat_dot(a, a));
}

double flat_max_abs(const TensorList& a)
{
    double m = 0.0;
    for (const auto& t : a) {
        for (double v : t.values()) {
            m = std::max(m, std::abs(v));
        }
    }
    return m;
}

std::vector<double> flatten(const TensorList& list)
{
    std::vector<double> out;
    out.reserve(flat_size(list));
    for (const auto& t : list) {
        out.insert(out.end(), t.values().begin(), t.values().end());
    }
    return out;
}

TensorList unflatten_like(const TensorList& like, std::span<const double> flat)
{
    if (flat.size() != flat_size(like)) {
        throw ShapeError("unflatten_like: expected " + std::to_string(flat_size(like))
                         + " values, got " + std::to_string(flat.size()));
    }
    TensorList out;
    out.reserve(like.size());
    std::size_t offset = 0;
    for (const auto& t : like) {
        std::vector<double> v(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                              flat.begin() + static_cast<std::ptrdiff_t>(offset + t.size()));
        out.emplace_back(t.shape(), std::move(v));
        offset += t.size();
    }
    return out;
}

TensorList zeros_like(const TensorList& like)
{
    TensorList out;
    out.reserve(like.size());
    for (const auto& t : like) {
        out.emplace_back(t.shape(), 0.0);
    }
    return out;
}

void axpy(double alpha, const TensorList& x, TensorList& y)
{
    if (x.size() != y.size()) {
        throw ShapeError("axpy: tensor lists differ in length");
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k].shape() != y[k].shape()) {
            throw ShapeError("axpy: shape mismatch at tensor " + std::to_string(k));
        }
        const auto xv = x[k].values();
        auto yv = y[k].values();
        for (std::size_t i = 0; i < xv.size(); ++i) {
            yv[i] += alpha * xv[i];
        }
    }
}

TensorList scaled(const TensorList& x, double alpha)
{
    TensorList out = x;
    for (auto& t : out) {
        for (double& v : t.values()) {
            v *= alpha;
        }
    }
    return out;
}

bool all_finite(const TensorList& list)
{
    return std::all_of(list.begin(), list.end(), [](const Tensor& t) { return t.all_finite(); });
}

} // namespace microreg
