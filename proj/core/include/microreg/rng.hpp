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

#include <cstdint>
#include <initializer_list>
#include <random>

namespace microreg {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer chained over the tags. Distinct tag tuples give
/// statistically independent seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {});

Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {});

double uniform01(Engine& engine);
double standard_normal(Engine& engine);

/// A per-step random stream that hands out one engine per micro-batch index,
/// so serial and parallel evaluation draw identical samples.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;

    Engine engine(std::uint64_t index) const { return make_engine(seed, {step, index}); }
};

} // namespace microreg
