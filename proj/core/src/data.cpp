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

#include "microreg/data.hpp"

#include "microreg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace microreg {

std::string_view split_name(Split split)
{
    switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "unknown";
}

void Dataset::validate() const
{
    if (labels.empty()) {
        throw ValidationError("dataset is empty");
    }
    if (inputs.rank() != 2 || inputs.rows() != labels.size()) {
        throw ValidationError("dataset inputs " + to_string(inputs.shape()) + " do not match "
                              + std::to_string(labels.size()) + " labels");
    }
    for (Label y : labels) {
        if (y >= class_count) {
            throw ValidationError("dataset label " + std::to_string(y) + " out of range");
        }
    }
}

void SyntheticSpec::validate() const
{
    if (class_count < 2) {
        throw ValidationError("synthetic: class_count must be at least 2");
    }
    if (clusters < class_count) {
        throw ValidationError("synthetic: clusters must be at least class_count");
    }
    if (dim == 0 || train_size == 0) {
        throw ValidationError("synthetic: dim and train_size must be positive");
    }
    if (!(label_noise >= 0.0 && label_noise <= 1.0)) {
        throw ValidationError("synthetic: label_noise must lie in [0, 1]");
    }
    if (!(separation >= 0.0) || !std::isfinite(separation)) {
        throw ValidationError("synthetic: separation must be non-negative");
    }
}

std::size_t SyntheticSpec::size_of(Split split) const
{
    switch (split) {
    case Split::Train: return train_size;
    case Split::Val: return val_size;
    case Split::Test: return test_size;
    }
    return 0;
}

std::string SyntheticSpec::describe() const
{
    std::ostringstream os;
    os << "synthetic(clusters=" << clusters << ", dim=" << dim << ", train=" << train_size
       << ", val=" << val_size << ", test=" << test_size << ", classes=" << class_count
       << ", label_noise=" << label_noise << ", separation=" << separation << ", seed=" << seed
       << ")";
    return os.str();
}

Dataset make_synthetic(const SyntheticSpec& spec, Split split)
{
    spec.validate();
    Engine center_engine = make_engine(spec.seed, {0xc3e7});
    Tensor centers(Shape{spec.clusters, spec.dim});
    for (double& v : centers.values()) {
        v = spec.separation * standard_normal(center_engine);
    }

    const std::size_t n = spec.size_of(split);
    Engine engine = make_engine(spec.seed, {0x5a3d, static_cast<std::uint64_t>(split)});
    std::uniform_int_distribution<std::size_t> pick_cluster(0, spec.clusters - 1);
    std::uniform_int_distribution<std::size_t> pick_class(0, spec.class_count - 1);
    const bool noisy = split == Split::Train && spec.label_noise > 0.0;

    Dataset data;
    data.inputs = Tensor(Shape{n, spec.dim});
    data.labels.resize(n);
    data.class_count = spec.class_count;
    data.split = split;
    data.provenance = spec.describe();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick_cluster(engine);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            data.inputs.at(i, j) = centers.at(k, j) + standard_normal(engine);
        }
        Label y = static_cast<Label>(k % spec.class_count);
        if (noisy && uniform01(engine) < spec.label_noise) {
            y = static_cast<Label>(pick_class(engine));
        }
        data.labels[i] = y;
    }
    return data;
}

Dataset make_synthetic(std::size_t clusters, std::size_t dim, std::size_t n,
                       std::size_t class_count, double label_noise, std::uint64_t seed)
{
    SyntheticSpec spec;
    spec.clusters = clusters;
    spec.dim = dim;
    spec.train_size = n;
    spec.class_count = class_count;
    spec.label_noise = label_noise;
    spec.seed = seed;
    return make_synthetic(spec, Split::Train);
}

Tensor gather_rows(const Tensor& inputs, std::span<const std::size_t> index)
{
    const std::size_t d = inputs.cols();
    Tensor out(Shape{index.size(), d});
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= inputs.rows()) {
            throw ShapeError("gather_rows: row " + std::to_string(index[i]) + " out of range");
        }
        std::copy_n(inputs.data() + index[i] * d, d, out.data() + i * d);
    }
    return out;
}

std::vector<Label> gather_labels(std::span<const Label> labels, std::span<const std::size_t> index)
{
    std::vector<Label> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        out[i] = labels[index[i]];
    }
    return out;
}

EpochSampler::EpochSampler(std::size_t n, std::uint64_t seed)
    : n_(n), engine_(make_engine(seed, {0x5e1ec7})), permutation_(n)
{
    if (n == 0) {
        throw ValidationError("sampler: dataset is empty");
    }
    reshuffle();
}

void EpochSampler::reshuffle()
{
    std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
    std::shuffle(permutation_.begin(), permutation_.end(), engine_);
    cursor_ = 0;
}

std::vector<std::size_t> EpochSampler::next_batch(std::size_t batch_size)
{
    std::vector<std::size_t> batch;
    batch.reserve(batch_size);
    while (batch.size() < batch_size) {
        if (cursor_ == n_) {
            reshuffle();
            ++epoch_;
        }
        batch.push_back(permutation_[cursor_++]);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// IDX files

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

class ByteReader {
public:
    ByteReader(const std::vector<unsigned char>& bytes, const std::filesystem::path& path)
        : bytes_(bytes), path_(path)
    {
    }

    void need(std::size_t count) const
    {
        if (offset_ + count > bytes_.size()) {
            throw FormatError(path_.string() + ": truncated at byte offset "
                              + std::to_string(bytes_.size()) + " (needed "
                              + std::to_string(offset_ + count) + " bytes)");
        }
    }

    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v = (v << 8) | bytes_[offset_ + static_cast<std::size_t>(i)];
        }
        offset_ += 4;
        return v;
    }

    const unsigned char* take(std::size_t count)
    {
        need(count);
        const unsigned char* p = bytes_.data() + offset_;
        offset_ += count;
        return p;
    }

private:
    const std::vector<unsigned char>& bytes_;
    const std::filesystem::path& path_;
    std::size_t offset_ = 0;
};

void put_u32(std::ostream& out, std::uint32_t v)
{
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
}

} // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 bool whiten)
{
    const auto image_bytes = read_all(images);
    const auto label_bytes = read_all(labels);

    ByteReader ir(image_bytes, images);
    const std::uint32_t im = ir.u32();
    if (im != kImageMagic) {
        std::ostringstream os;
        os << images.string() << ": bad magic 0x" << std::hex << im << " (expected 0x803)";
        throw FormatError(os.str());
    }
    const std::size_t n = ir.u32();
    const std::size_t rows = ir.u32();
    const std::size_t cols = ir.u32();
    const std::size_t d = rows * cols;
    const unsigned char* pixels = ir.take(n * d);

    ByteReader lr(label_bytes, labels);
    const std::uint32_t lm = lr.u32();
    if (lm != kLabelMagic) {
        std::ostringstream os;
        os << labels.string() << ": bad magic 0x" << std::hex << lm << " (expected 0x801)";
        throw FormatError(os.str());
    }
    const std::size_t nl = lr.u32();
    if (nl != n) {
        throw FormatError("idx: " + std::to_string(n) + " images but " + std::to_string(nl)
                          + " labels");
    }
    const unsigned char* raw_labels = lr.take(nl);

    Dataset data;
    data.inputs = Tensor(Shape{n, d});
    for (std::size_t i = 0; i < n * d; ++i) {
        data.inputs[i] = static_cast<double>(pixels[i]) / 255.0;
    }
    data.labels.assign(raw_labels, raw_labels + n);
    Label max_label = 0;
    for (Label y : data.labels) {
        max_label = std::max(max_label, y);
    }
    data.class_count = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
    data.split = Split::Train;
    data.provenance = "idx(" + images.string() + ", " + labels.string() + ")";

    if (whiten && n * d > 0) {
        double mean = 0.0;
        for (double v : data.inputs.values()) {
            mean += v;
        }
        mean /= static_cast<double>(n * d);
        double var = 0.0;
        for (double v : data.inputs.values()) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(n * d);
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        for (double& v : data.inputs.values()) {
            v = (v - mean) / sd;
        }
    }
    return data;
}

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels)
{
    data.validate();
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
    const bool square = side * side == d;

    std::ofstream img(images, std::ios::binary);
    if (!img) {
        throw FormatError("cannot write " + images.string());
    }
    put_u32(img, kImageMagic);
    put_u32(img, static_cast<std::uint32_t>(n));
    put_u32(img, static_cast<std::uint32_t>(square ? side : 1));
    put_u32(img, static_cast<std::uint32_t>(square ? side : d));
    std::vector<char> buf(n * d);
    for (std::size_t i = 0; i < n * d; ++i) {
        const double v = std::clamp(std::round(data.inputs[i] * 255.0), 0.0, 255.0);
        buf[i] = static_cast<char>(static_cast<unsigned char>(v));
    }
    img.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!img) {
        throw FormatError("write failed: " + images.string());
    }

    std::ofstream lab(labels, std::ios::binary);
    if (!lab) {
        throw FormatError("cannot write " + labels.string());
    }
    put_u32(lab, kLabelMagic);
    put_u32(lab, static_cast<std::uint32_t>(n));
    for (Label y : data.labels) {
        if (y > 255) {
            throw FormatError("idx labels must fit in one byte");
        }
        lab.put(static_cast<char>(static_cast<unsigned char>(y)));
    }
    if (!lab) {
        throw FormatError("write failed: " + labels.string());
    }
}

} // namespace microreg
