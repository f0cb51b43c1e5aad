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

#include "microreg/model.hpp"
#include "microreg/rng.hpp"
#include "microreg/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace microreg {

enum class Split { Train, Val, Test };

std::string_view split_name(Split split);

struct Dataset {
    Tensor inputs; // [n, d]
    std::vector<Label> labels;
    std::size_t class_count = 0;
    Split split = Split::Train;
    std::string provenance;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const { return inputs.cols(); }
    void validate() const;
};

/// Gaussian-cluster classification data. Cluster k has class k mod C; on the
/// training split a fraction `label_noise` of labels is redrawn uniformly.
struct SyntheticSpec {
    std::size_t clusters = 40;
    std::size_t dim = 64;
    std::size_t train_size = 8192;
    std::size_t val_size = 2048;
    std::size_t test_size = 2048;
    std::size_t class_count = 10;
    double label_noise = 0.1;
    /// Standard deviation of cluster centers; points have unit noise.
    double separation = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t size_of(Split split) const;
    std::string describe() const;

    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

Dataset make_synthetic(const SyntheticSpec& spec, Split split);
/// Convenience matching the classic argument list: K clusters, d, n, C, ρ, seed.
Dataset make_synthetic(std::size_t clusters, std::size_t dim, std::size_t n,
                       std::size_t class_count, double label_noise, std::uint64_t seed);

/// Rows of `inputs` at `index`, in order.
Tensor gather_rows(const Tensor& inputs, std::span<const std::size_t> index);
std::vector<Label> gather_labels(std::span<const Label> labels, std::span<const std::size_t> index);

/// Streams shuffled training indices; every epoch visits each index once.
class EpochSampler {
public:
    EpochSampler(std::size_t n, std::uint64_t seed);

    std::vector<std::size_t> next_batch(std::size_t batch_size);
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t cursor() const noexcept { return cursor_; }
    const std::vector<std::size_t>& permutation() const noexcept { return permutation_; }

private:
    void reshuffle();

    std::size_t n_;
    Engine engine_;
    std::vector<std::size_t> permutation_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
};

/// IDX image/label pair (0x00000803 / 0x00000801, big-endian extents).
/// Pixels are scaled to [0, 1]; `whiten` standardizes to zero mean and unit
/// variance over all pixels.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 bool whiten = false);

/// Writes inputs as unsigned bytes (value·255, rounded, clamped). Rank-2
/// inputs with a square width are stored as n×r×r images, otherwise n×1×d.
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels);

} // namespace microreg
