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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace microreg {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 tensor holds one scalar.
class Tensor {
public:
    Tensor() : values_(1, 0.0) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor vector(std::initializer_list<double> v)
    {
        return Tensor(Shape{v.size()}, std::vector<double>(v));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> v);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    double item() const;
    bool all_finite() const noexcept;

    /// Same values, new extents. Element counts must agree.
    Tensor reshaped(Shape shape) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

/// Ordered collection of tensors viewed as one flat vector. Model parameters
/// and their gradients share this layout.
using TensorList = std::vector<Tensor>;

std::size_t flat_size(const TensorList& list);
double flat_dot(const TensorList& a, const TensorList& b);
double flat_norm(const TensorList& a);
double flat_max_abs(const TensorList& a);
std::vector<double> flatten(const TensorList& list);
TensorList unflatten_like(const TensorList& like, std::span<const double> flat);
TensorList zeros_like(const TensorList& like);
/// y <- y + alpha * x
void axpy(double alpha, const TensorList& x, TensorList& y);
TensorList scaled(const TensorList& x, double alpha);
bool all_finite(const TensorList& list);

} // namespace microreg
