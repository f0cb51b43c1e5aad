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

#include "microreg/batching.hpp"
#include "microreg/data.hpp"
#include "microreg/errors.hpp"
#include "microreg/model.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace microreg {
namespace {

namespace fs = std::filesystem;
using testing::iota_index;
using testing::random_dataset;
using testing::random_tensor;

class TempDir {
public:
    TempDir()
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / (std::string("microreg_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes)
{
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v)
{
    for (int s = 24; s >= 0; s -= 8) {
        out.push_back(static_cast<unsigned char>(v >> s));
    }
}

// Four 28×28 images: image i has every pixel equal to 60·i, label 9 − i.
void write_fixture(const fs::path& images, const fs::path& labels)
{
    std::vector<unsigned char> im;
    put_u32(im, 0x803);
    put_u32(im, 4);
    put_u32(im, 28);
    put_u32(im, 28);
    for (int i = 0; i < 4; ++i) {
        im.insert(im.end(), 784, static_cast<unsigned char>(60 * i));
    }
    std::vector<unsigned char> lb;
    put_u32(lb, 0x801);
    put_u32(lb, 4);
    for (int i = 0; i < 4; ++i) {
        lb.push_back(static_cast<unsigned char>(9 - i));
    }
    write_bytes(images, im);
    write_bytes(labels, lb);
}

TEST(Synthetic, SameSeedSameBytes)
{
    SyntheticSpec spec;
    spec.train_size = 256;
    const Dataset a = make_synthetic(spec, Split::Train);
    const Dataset b = make_synthetic(spec, Split::Train);
    EXPECT_EQ(a.inputs, b.inputs);
    EXPECT_EQ(a.labels, b.labels);
    spec.seed = 1;
    EXPECT_NE(make_synthetic(spec, Split::Train).inputs, a.inputs);
}

TEST(Synthetic, SplitsAreDistinctAndSized)
{
    SyntheticSpec spec;
    spec.train_size = 128;
    spec.val_size = 64;
    spec.test_size = 32;
    const Dataset train = make_synthetic(spec, Split::Train);
    const Dataset val = make_synthetic(spec, Split::Val);
    const Dataset test = make_synthetic(spec, Split::Test);
    EXPECT_EQ(train.inputs.shape(), (Shape{128, 64}));
    EXPECT_EQ(val.size(), 64u);
    EXPECT_EQ(test.size(), 32u);
    EXPECT_EQ(val.split, Split::Val);
    EXPECT_NE(Tensor(Shape{32, 64}, std::vector<double>(val.inputs.values().begin(), val.inputs.values().begin() + 32 * 64)),
              test.inputs);
    EXPECT_FALSE(train.provenance.empty());
}

TEST(Synthetic, Validation)
{
    SyntheticSpec spec;
    spec.clusters = 5;
    EXPECT_THROW(spec.validate(), ValidationError);
    spec = SyntheticSpec{};
    spec.label_noise = -0.1;
    EXPECT_THROW(spec.validate(), ValidationError);
    spec.label_noise = 1.5;
    EXPECT_THROW(spec.validate(), ValidationError);
}

// Nearest-class-mean probe: a linear classifier fitted in closed form.
double nearest_mean_accuracy(const Dataset& fit, const Dataset& eval)
{
    const std::size_t d = fit.dim(), c = fit.class_count;
    std::vector<double> means(c * d, 0.0);
    std::vector<double> counts(c, 0.0);
    for (std::size_t i = 0; i < fit.size(); ++i) {
        counts[fit.labels[i]] += 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            means[fit.labels[i] * d + j] += fit.inputs.at(i, j);
        }
    }
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t j = 0; j < d; ++j) {
            means[k * d + j] /= std::max(counts[k], 1.0);
        }
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < eval.size(); ++i) {
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < c; ++k) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double t = eval.inputs.at(i, j) - means[k * d + j];
                dist += t * t;
            }
            if (dist < best) {
                best = dist;
                arg = k;
            }
        }
        correct += arg == eval.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(eval.size());
}

TEST(Synthetic, SeparableWithoutNoise)
{
    SyntheticSpec spec;
    spec.clusters = 10;
    spec.train_size = 2000;
    spec.label_noise = 0.0;
    spec.separation = 5.0;
    const Dataset train = make_synthetic(spec, Split::Train);
    EXPECT_GE(nearest_mean_accuracy(train, train), 0.99);
}

TEST(Synthetic, FullNoiseIsChance)
{
    SyntheticSpec spec;
    spec.clusters = 10;
    spec.train_size = 4000;
    spec.test_size = 4000;
    spec.label_noise = 1.0;
    spec.separation = 5.0;
    const Dataset train = make_synthetic(spec, Split::Train);
    // Labels carry no information about inputs, so any fitted probe is at chance on held-out draws.
    Dataset shuffled = make_synthetic(spec, Split::Test);
    shuffled.labels = gather_labels(train.labels, iota_index(shuffled.size()));
    EXPECT_NEAR(nearest_mean_accuracy(train, shuffled), 0.1, 0.03);
}

TEST(Sampler, EachEpochIsPermutation)
{
    EpochSampler sampler(100, 3);
    for (int epoch = 0; epoch < 3; ++epoch) {
        std::multiset<std::size_t> seen;
        for (int b = 0; b < 10; ++b) {
            const auto batch = sampler.next_batch(10);
            seen.insert(batch.begin(), batch.end());
        }
        EXPECT_EQ(seen.size(), 100u);
        EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 100u);
    }
    EXPECT_EQ(sampler.epoch(), 2u);
}

TEST(Sampler, SeedDeterminesSequence)
{
    EpochSampler a(50, 4), b(50, 4), c(50, 5);
    const auto ba = a.next_batch(25);
    EXPECT_EQ(ba, b.next_batch(25));
    EXPECT_NE(ba, c.next_batch(25));
}

TEST(Idx, HandBuiltFixture)
{
    TempDir dir;
    write_fixture(dir.path() / "img", dir.path() / "lbl");
    const Dataset data = load_idx(dir.path() / "img", dir.path() / "lbl");
    EXPECT_EQ(data.inputs.shape(), (Shape{4, 784}));
    EXPECT_EQ(data.labels, (std::vector<Label>{9, 8, 7, 6}));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(data.inputs.at(i, 100), 60.0 * static_cast<double>(i) / 255.0);
    }
}

TEST(Idx, TruncatedFileNamesOffset)
{
    TempDir dir;
    write_fixture(dir.path() / "img", dir.path() / "lbl");
    fs::resize_file(dir.path() / "img", 16 + 784 * 3 + 10);
    try {
        load_idx(dir.path() / "img", dir.path() / "lbl");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated at byte offset 2378"), std::string::npos) << e.what();
    }
}

TEST(Idx, BadMagicAndCountMismatch)
{
    TempDir dir;
    write_fixture(dir.path() / "img", dir.path() / "lbl");
    EXPECT_THROW(load_idx(dir.path() / "lbl", dir.path() / "lbl"), FormatError);
    std::vector<unsigned char> lb;
    put_u32(lb, 0x801);
    put_u32(lb, 3);
    lb.insert(lb.end(), 3, 1);
    write_bytes(dir.path() / "lbl3", lb);
    EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lbl3"), FormatError);
    EXPECT_THROW(load_idx(dir.path() / "missing", dir.path() / "lbl"), FormatError);
}

TEST(Idx, WriteReadRoundTrip)
{
    TempDir dir;
    Engine engine = make_engine(31);
    Dataset data;
    data.inputs = Tensor(Shape{12, 49});
    for (double& v : data.inputs.values()) {
        v = static_cast<double>(engine() % 256) / 255.0;
    }
    data.class_count = 10;
    for (std::size_t i = 0; i < 12; ++i) {
        data.labels.push_back(static_cast<Label>(engine() % 10));
    }
    write_idx(data, dir.path() / "img", dir.path() / "lbl");
    const Dataset back = load_idx(dir.path() / "img", dir.path() / "lbl");
    EXPECT_EQ(back.inputs, data.inputs);
    EXPECT_EQ(back.labels, data.labels);
}

TEST(Idx, WhitenStandardizes)
{
    TempDir dir;
    write_fixture(dir.path() / "img", dir.path() / "lbl");
    const Dataset data = load_idx(dir.path() / "img", dir.path() / "lbl", true);
    double mean = 0.0, sq = 0.0;
    for (double v : data.inputs.values()) {
        mean += v;
        sq += v * v;
    }
    const double n = static_cast<double>(data.inputs.size());
    EXPECT_NEAR(mean / n, 0.0, 1e-12);
    EXPECT_NEAR(sq / n, 1.0, 1e-12);
}

TEST(Partition, ManySlicesOfEqualSize)
{
    const auto p = partition_microbatches(iota_index(5120), 128);
    EXPECT_EQ(p.count(), 40u);
}

TEST(Partition, WholeBatchIsOneSlice)
{
    const auto batch = iota_index(16);
    const auto p = partition_microbatches(batch, 16);
    ASSERT_EQ(p.count(), 1u);
    EXPECT_TRUE(std::equal(batch.begin(), batch.end(), p.slice(0).begin(), p.slice(0).end()));
}

TEST(Partition, RejectsNonDivisor)
{
    EXPECT_THROW(partition_microbatches(iota_index(8), 3), ValidationError);
    EXPECT_THROW(partition_microbatches(iota_index(8), 0), ValidationError);
}

TEST(Partition, FuzzedInvariants)
{
    Engine engine = make_engine(40);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + engine() % 16;
        const std::size_t k = 1 + engine() % 16;
        std::vector<std::size_t> batch = iota_index(m * k);
        std::shuffle(batch.begin(), batch.end(), engine);
        const auto p = partition_microbatches(batch, m);
        ASSERT_EQ(p.count(), k);
        std::set<std::size_t> seen;
        for (std::size_t i = 0; i < k; ++i) {
            ASSERT_EQ(p.slice(i).size(), m);
            seen.insert(p.slice(i).begin(), p.slice(i).end());
        }
        EXPECT_EQ(seen.size(), m * k);
    }
}

ModelParams random_model(std::size_t d, std::size_t c, std::uint64_t seed)
{
    ModelSpec spec;
    spec.input_dim = d;
    spec.class_count = c;
    spec.hidden = {4 + seed % 5};
    spec.init_seed = seed;
    return init_params(spec);
}

TEST(Accumulation, SingleSliceEqualsDirect)
{
    const Dataset data = random_dataset(12, 3, 4, 41);
    const auto params = random_model(3, 4, 41);
    const auto p = partition_microbatches(iota_index(12), 12);
    const auto acc = accumulate_full_gradient(params, data, p);
    const auto direct = batch_loss_gradient(params, data, p.batch);
    EXPECT_EQ(acc.gradient, direct.gradient);
    EXPECT_EQ(acc.loss, direct.value);
}

TEST(Accumulation, MatchesSinglePassOnFuzzedCases)
{
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        Engine engine = make_engine(trial, {0xacc});
        const std::size_t m = 1 + engine() % 8, k = 1 + engine() % 8;
        const std::size_t d = 2 + trial % 4, c = 2 + trial % 3;
        const Dataset data = random_dataset(m * k + 7, d, c, trial);
        std::vector<std::size_t> batch = iota_index(data.size());
        std::shuffle(batch.begin(), batch.end(), engine);
        batch.resize(m * k);
        const auto params = random_model(d, c, trial);
        const auto acc = accumulate_full_gradient(params, data, partition_microbatches(batch, m));
        const auto direct = batch_loss_gradient(params, data, batch);
        const double diff = flat_max_abs([&] {
            TensorList t = acc.gradient;
            axpy(-1.0, direct.gradient, t);
            return t;
        }());
        EXPECT_LE(diff, 1e-12 * (1.0 + flat_max_abs(direct.gradient))) << "trial " << trial;
    }
}

TEST(Accumulation, IdenticalExamplesGiveIdenticalSlices)
{
    Dataset data = random_dataset(1, 4, 3, 42);
    Tensor rows(Shape{8, 4});
    for (std::size_t i = 0; i < 8; ++i) {
        std::copy(data.inputs.values().begin(), data.inputs.values().end(), rows.data() + 4 * i);
    }
    data.inputs = rows;
    data.labels.assign(8, data.labels[0]);
    const auto params = random_model(4, 3, 42);
    const auto acc = accumulate_full_gradient(params, data, partition_microbatches(iota_index(8), 2), 1, true);
    for (const auto& g : acc.slice_gradients) {
        EXPECT_EQ(g, acc.slice_gradients[0]);
        EXPECT_LE(testing::relative_error(g, acc.gradient), 1e-15);
    }
}

TEST(Accumulation, ParallelEqualsSerialBitwise)
{
    const Dataset data = random_dataset(64, 5, 3, 43);
    const auto params = random_model(5, 3, 43);
    const auto p = partition_microbatches(iota_index(64), 8);
    const auto serial = accumulate_full_gradient(params, data, p, 1);
    for (std::size_t threads : {2u, 3u, 8u}) {
        const auto parallel = accumulate_full_gradient(params, data, p, threads);
        EXPECT_EQ(parallel.gradient, serial.gradient);
        EXPECT_EQ(parallel.loss, serial.loss);
    }
}

TEST(ParallelFor, PropagatesExceptions)
{
    EXPECT_THROW(parallel_for(4, 2, [](std::size_t i) {
                     if (i == 3) {
                         throw ValidationError("boom");
                     }
                 }),
                 ValidationError);
}

} // namespace
} // namespace microreg
