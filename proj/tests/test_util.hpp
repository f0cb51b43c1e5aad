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

#include "microreg/data.hpp"
#include "microreg/model.hpp"
#include "microreg/rng.hpp"
#include "microreg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace microreg::testing {

inline Tensor random_tensor(Shape shape, Engine& engine, double scale = 1.0)
{
    Tensor t(std::move(shape));
    for (double& v : t.values()) {
        v = scale * standard_normal(engine);
    }
    return t;
}

/// Small random classification data with n rows.
inline Dataset random_dataset(std::size_t n, std::size_t d, std::size_t classes, std::uint64_t seed)
{
    Engine engine = make_engine(seed, {0xda7a});
    Dataset data;
    data.inputs = random_tensor(Shape{n, d}, engine);
    data.labels.resize(n);
    std::uniform_int_distribution<Label> pick(0, static_cast<Label>(classes - 1));
    for (auto& y : data.labels) {
        y = pick(engine);
    }
    data.class_count = classes;
    return data;
}

inline std::vector<std::size_t> iota_index(std::size_t n)
{
    std::vector<std::size_t> index(n);
    std::iota(index.begin(), index.end(), std::size_t{0});
    return index;
}

/// max_i |a_i − b_i| / max_i |b_i|, and 0 when both are exactly zero.
inline double relative_error(std::span<const double> a, std::span<const double> b)
{
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    if (diff == 0.0) {
        return 0.0;
    }
    return scale == 0.0 ? INFINITY : diff / scale;
}

inline double relative_error(const TensorList& a, const TensorList& b)
{
    return relative_error(flatten(a), flatten(b));
}

inline double relative_error(double a, double b)
{
    return relative_error(std::span<const double>(&a, 1), std::span<const double>(&b, 1));
}

} // namespace microreg::testing
