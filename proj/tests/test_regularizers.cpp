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

#include "microreg/errors.hpp"
#include "microreg/regularizers.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace microreg {
namespace {

using testing::evaluate_penalty;
using testing::iota_index;
using testing::kAllRegularizers;
using testing::make_tiny_case;
using testing::relative_error;

class PenaltyKind : public ::testing::TestWithParam<RegularizerKind> {};

std::string kind_label(const ::testing::TestParamInfo<RegularizerKind>& info)
{
    std::string s(regularizer_name(info.param));
    std::erase(s, '-');
    return s;
}

TEST_P(PenaltyKind, GradientMatchesCentralDifferencesOnTwentyModels)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = make_tiny_case(seed);
        const auto check = testing::check_penalty_gradient(GetParam(), c, 0.3, StreamKey{seed, 5});
        EXPECT_LE(check.central_error, 1e-4) << "seed " << seed;
        EXPECT_LE(check.mode_error, 1e-3) << "seed " << seed;
    }
}

TEST_P(PenaltyKind, ZeroStrengthRecoversAccumulatedLoss)
{
    const auto c = make_tiny_case(3);
    const auto r = evaluate_penalty(GetParam(), c.params, c.data, c.partition, 0.0, StreamKey{1, 2});
    const auto plain = accumulate_full_gradient(c.params, c.data, c.partition);
    EXPECT_EQ(r.value, plain.loss);
    EXPECT_EQ(r.gradient, plain.gradient);
}

TEST_P(PenaltyKind, ValueIsBasePlusScaledPenalty)
{
    const auto c = make_tiny_case(4);
    const StreamKey rng{2, 9};
    const auto a = evaluate_penalty(GetParam(), c.params, c.data, c.partition, 0.25, rng);
    const auto b = evaluate_penalty(GetParam(), c.params, c.data, c.partition, 0.75, rng);
    EXPECT_GE(a.report.penalty, 0.0);
    EXPECT_EQ(a.report.penalty, b.report.penalty);
    EXPECT_EQ(a.report.base_loss, b.report.base_loss);
    EXPECT_EQ(a.value, a.report.base_loss + 0.25 * a.report.penalty);
    EXPECT_LE(relative_error(b.value - b.report.base_loss, 3.0 * (a.value - a.report.base_loss)), 1e-12);
    EXPECT_EQ(a.report.micro_batches, c.partition.count());
    EXPECT_EQ(a.report.micro_norms.size(), c.partition.count());
}

TEST_P(PenaltyKind, ParallelEvaluationIsBitIdentical)
{
    const auto c = make_tiny_case(5);
    PenaltyOptions serial, parallel;
    parallel.threads = 3;
    const StreamKey rng{4, 1};
    const auto a = evaluate_penalty(GetParam(), c.params, c.data, c.partition, 0.5, rng, serial);
    const auto b = evaluate_penalty(GetParam(), c.params, c.data, c.partition, 0.5, rng, parallel);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.gradient, b.gradient);
    EXPECT_EQ(a.report.micro_norms, b.report.micro_norms);
}

TEST_P(PenaltyKind, ValueOnlySkipsGradient)
{
    const auto c = make_tiny_case(6);
    PenaltyOptions options;
    options.want_gradient = false;
    const auto a = evaluate_penalty(GetParam(), c.params, c.data, c.partition, 0.5, StreamKey{}, options);
    const auto b = evaluate_penalty(GetParam(), c.params, c.data, c.partition, 0.5, StreamKey{});
    EXPECT_TRUE(a.gradient.empty());
    EXPECT_EQ(a.value, b.value);
}

TEST_P(PenaltyKind, NegativeStrengthRejected)
{
    const auto c = make_tiny_case(7);
    EXPECT_THROW(evaluate_penalty(GetParam(), c.params, c.data, c.partition, -0.1, StreamKey{}), ValidationError);
}

INSTANTIATE_TEST_SUITE_P(All, PenaltyKind, ::testing::ValuesIn(kAllRegularizers), kind_label);

TEST(GN, WholeBatchIsLossPlusSquaredGradient)
{
    const auto c = make_tiny_case(8);
    const auto whole = partition_microbatches(c.partition.batch, c.partition.batch.size());
    const auto r = gn_penalized_loss(c.params, c.data, whole, 0.2);
    const auto direct = batch_loss_gradient(c.params, c.data, whole.batch);
    const double g2 = ad::squared_norm(direct.gradient);
    EXPECT_LE(relative_error(r.value, direct.value + 0.2 * g2), 1e-12);
    EXPECT_LE(relative_error(r.report.penalty, g2), 1e-12);
}

TEST(GN, PenaltyIsMeanOfSliceSquaredNorms)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = make_tiny_case(seed);
        const auto r = gn_penalized_loss(c.params, c.data, c.partition, 1.0);
        EXPECT_LE(relative_error(r.report.penalty, testing::mean_slice_grad_norm_sq(c.params, c.data, c.partition)), 1e-12);
        for (std::size_t i = 0; i < c.partition.count(); ++i) {
            const double n = flat_norm(batch_loss_gradient(c.params, c.data, c.partition.slice(i)).gradient);
            EXPECT_LE(relative_error(r.report.micro_norms[i], n), 1e-12);
        }
    }
}

TEST(GN, ZeroWhereEverySliceGradientVanishes)
{
    // Zero inputs and parameters, two classes, every micro-batch balanced.
    ModelSpec spec;
    spec.input_dim = 3;
    spec.class_count = 2;
    spec.hidden = {4};
    const auto params = zeros_like(init_params(spec));
    Dataset data;
    data.inputs = Tensor(Shape{8, 3});
    data.labels = {0, 1, 1, 0, 0, 1, 1, 0};
    data.class_count = 2;
    const auto p = partition_microbatches(iota_index(8), 2);
    const auto r = gn_penalized_loss(params, data, p, 1.0);
    EXPECT_EQ(r.report.penalty, 0.0);
    EXPECT_EQ(sample_gn_penalized_loss(params, data, p, 1.0, StreamKey{}).report.penalty, 0.0);
}

TEST(FT, TrueLabelOverrideIsBitIdenticalToGN)
{
    const auto c = make_tiny_case(9);
    PenaltyOptions options;
    options.ft_true_labels = true;
    const auto ft = ft_penalized_loss(c.params, c.data, c.partition, 0.4, StreamKey{3, 3}, options);
    const auto gn = gn_penalized_loss(c.params, c.data, c.partition, 0.4);
    EXPECT_EQ(ft.value, gn.value);
    EXPECT_EQ(ft.gradient, gn.gradient);
    EXPECT_EQ(ft.report.micro_norms, gn.report.micro_norms);
}

TEST(FT, SaturatedPredictionsEqualGN)
{
    // Relabel every example with the class the model already predicts, then
    // sharpen the output layer so softmax is one-hot at that class.
    auto c = make_tiny_case(10);
    c.params[c.params.size() - 2] = scaled({c.params[c.params.size() - 2]}, 400.0)[0];
    c.params.back() = scaled({c.params.back()}, 400.0)[0];
    c.data.labels = predict(forward(c.params, c.data.inputs));
    const auto ft = ft_penalized_loss(c.params, c.data, c.partition, 1.0, StreamKey{5, 0});
    const auto gn = gn_penalized_loss(c.params, c.data, c.partition, 1.0);
    EXPECT_NEAR(ft.report.penalty, gn.report.penalty, 1e-12);
    EXPECT_EQ(ft.report.penalty, gn.report.penalty);
}

TEST(FT, SingleExampleExpectationMatchesEnumeration)
{
    const auto c = make_tiny_case(11);
    const std::vector<std::size_t> one{c.partition.batch[0]};
    const auto p = partition_microbatches(one, 1);
    const Tensor z = forward(c.params, gather_rows(c.data.inputs, one));
    const Tensor prob = softmax(z);
    Dataset relabeled = c.data;
    double expected = 0.0;
    for (std::size_t k = 0; k < c.spec.class_count; ++k) {
        relabeled.labels[one[0]] = static_cast<Label>(k);
        expected += prob[k] * ad::squared_norm(batch_loss_gradient(c.params, relabeled, one).gradient);
    }
    PenaltyOptions options;
    options.want_gradient = false;
    const int draws = 10000;
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < draws; ++t) {
        const double v = ft_penalized_loss(c.params, c.data, p, 1.0, StreamKey{12, static_cast<std::uint64_t>(t)}, options)
                             .report.penalty;
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
    EXPECT_LE(std::abs(mean - expected), 3.0 * se) << "mean " << mean << " expected " << expected;
}

TEST(FT, BaseLossUsesTrueLabels)
{
    const auto c = make_tiny_case(12);
    const auto ft = ft_penalized_loss(c.params, c.data, c.partition, 1.0, StreamKey{6, 6});
    EXPECT_EQ(ft.report.base_loss, accumulate_full_gradient(c.params, c.data, c.partition).loss);
}

TEST(AJ, ConstantOutputNetworkByHand)
{
    // z = Wᵀx + b with W = 0: ∇ of (1/C)·mean_x Σ_c z_c is 1/C per bias and x̄ᵢ/C per weight.
    ModelSpec spec;
    spec.input_dim = 3;
    spec.class_count = 4;
    spec.hidden = {};
    ModelParams params{Tensor(Shape{3, 4}), Tensor(Shape{4}, 0.7)};
    Dataset data;
    data.inputs = Tensor::matrix(4, 3, {1, 2, 3, -1, 0, 1, 0.5, 0.5, 0.5, 2, -2, 0});
    data.labels = {0, 1, 2, 3};
    data.class_count = 4;
    const auto p = partition_microbatches(iota_index(4), 2);
    const auto r = aj_penalized_loss(params, data, p, 1.0);
    double expected = 0.0;
    for (std::size_t s = 0; s < 2; ++s) {
        double xbar_sq = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            const double xbar = 0.5 * (data.inputs.at(2 * s, j) + data.inputs.at(2 * s + 1, j));
            xbar_sq += xbar * xbar;
        }
        expected += 0.5 * (1.0 / 4.0 + xbar_sq / 4.0);
    }
    EXPECT_NEAR(r.report.penalty, expected, 1e-12);
}

TEST(AJ, MatchesAveragedDecomposition)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto c = make_tiny_case(seed + 20);
        const std::size_t classes = c.spec.class_count;
        const std::vector<double> v(classes, 1.0 / static_cast<double>(classes));
        const auto r = aj_penalized_loss(c.params, c.data, c.partition, 1.0);
        double expected = 0.0;
        for (std::size_t i = 0; i < c.partition.count(); ++i) {
            TensorList acc = zeros_like(c.params);
            const auto slice = c.partition.slice(i);
            for (std::size_t row : slice) {
                const auto x = c.data.inputs.values().subspan(row * c.data.dim(), c.data.dim());
                axpy(1.0 / static_cast<double>(slice.size()), grad_via_decomposition(c.params, x, v), acc);
            }
            expected += ad::squared_norm(acc);
        }
        expected /= static_cast<double>(c.partition.count());
        EXPECT_LE(relative_error(r.report.penalty, expected), 1e-10);
    }
}

TEST(AJ, IgnoresLabels)
{
    const auto c = make_tiny_case(13);
    Dataset permuted = c.data;
    std::rotate(permuted.labels.begin(), permuted.labels.begin() + 1, permuted.labels.end());
    const auto a = aj_penalized_loss(c.params, c.data, c.partition, 1.0);
    const auto b = aj_penalized_loss(c.params, permuted, c.partition, 1.0);
    EXPECT_EQ(a.report.penalty, b.report.penalty);
    const auto ua = uj_penalized_loss(c.params, c.data, c.partition, 1.0, StreamKey{1, 1});
    const auto ub = uj_penalized_loss(c.params, permuted, c.partition, 1.0, StreamKey{1, 1});
    EXPECT_EQ(ua.report.penalty, ub.report.penalty);
}

TEST(UJ, OnehotDirectionGivesMeanJacobianColumn)
{
    const auto c = make_tiny_case(14);
    const std::size_t col = 1;
    PenaltyOptions options;
    options.uj_fixed_direction = std::vector<double>(c.spec.class_count, 0.0);
    (*options.uj_fixed_direction)[col] = 1.0;
    const auto r = uj_penalized_loss(c.params, c.data, c.partition, 1.0, StreamKey{}, options);
    double expected = 0.0;
    for (std::size_t i = 0; i < c.partition.count(); ++i) {
        const auto slice = c.partition.slice(i);
        std::vector<double> mean_col(flat_size(c.params), 0.0);
        for (std::size_t row : slice) {
            const Tensor j = per_example_jacobian(c.params, c.data.inputs.values().subspan(row * c.data.dim(), c.data.dim()));
            for (std::size_t q = 0; q < mean_col.size(); ++q) {
                mean_col[q] += j.at(q, col) / static_cast<double>(slice.size());
            }
        }
        expected += std::inner_product(mean_col.begin(), mean_col.end(), mean_col.begin(), 0.0);
    }
    expected /= static_cast<double>(c.partition.count());
    EXPECT_LE(relative_error(r.report.penalty, expected), 1e-12);
}

TEST(UJ, FixedDirectionWidthChecked)
{
    const auto c = make_tiny_case(15);
    PenaltyOptions options;
    options.uj_fixed_direction = std::vector<double>(c.spec.class_count + 1, 0.0);
    EXPECT_THROW(uj_penalized_loss(c.params, c.data, c.partition, 1.0, StreamKey{}, options), ValidationError);
}

TEST(UnitSphere, OneDimensionIsSign)
{
    Engine engine = make_engine(16);
    for (int i = 0; i < 1000; ++i) {
        const auto u = unit_sphere_sample(1, engine);
        ASSERT_EQ(u.size(), 1u);
        EXPECT_EQ(std::abs(u[0]), 1.0);
    }
}

TEST(UnitSphere, NormAndMean)
{
    Engine engine = make_engine(17);
    std::vector<double> mean(8, 0.0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const auto u = unit_sphere_sample(8, engine);
        const double n = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
        ASSERT_NEAR(n, 1.0, 1e-12);
        for (std::size_t j = 0; j < 8; ++j) {
            mean[j] += u[j] / draws;
        }
    }
    for (double m : mean) {
        EXPECT_LE(std::abs(m), 0.012);
    }
}

TEST(UnitSphere, UnbiasedFrobeniusEstimate)
{
    Engine engine = make_engine(18);
    const Tensor j = testing::random_tensor(Shape{6, 3}, engine);
    double frob = 0.0;
    for (double v : j.values()) {
        frob += v * v;
    }
    const int draws = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < draws; ++t) {
        const auto u = unit_sphere_sample(3, engine);
        double est = 0.0;
        for (std::size_t r = 0; r < 6; ++r) {
            const double ju = j.at(r, 0) * u[0] + j.at(r, 1) * u[1] + j.at(r, 2) * u[2];
            est += ju * ju;
        }
        est *= 3.0;
        sum += est;
        sum_sq += est * est;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
    EXPECT_LE(std::abs(mean - frob), 3.0 * se);
}

TEST(SampleGN, WholeBatchEqualsSingleSliceGN)
{
    const auto c = make_tiny_case(19);
    const auto whole = partition_microbatches(c.partition.batch, c.partition.batch.size());
    const auto s = sample_gn_penalized_loss(c.params, c.data, whole, 0.3, StreamKey{7, 7});
    const auto g = gn_penalized_loss(c.params, c.data, whole, 0.3);
    EXPECT_EQ(s.value, g.value);
    EXPECT_EQ(s.gradient, g.gradient);
}

TEST(SampleGN, ExpectationOverDrawsIsAverageGN)
{
    const auto c = make_tiny_case(21);
    const double average = gn_penalized_loss(c.params, c.data, c.partition, 1.0).report.penalty;
    PenaltyOptions options;
    options.want_gradient = false;
    const int draws = 10000;
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < draws; ++t) {
        const double v = sample_gn_penalized_loss(c.params, c.data, c.partition, 1.0,
                                                  StreamKey{22, static_cast<std::uint64_t>(t)}, options)
                             .report.penalty;
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
    EXPECT_LE(std::abs(mean - average), 3.0 * se);
}

TEST(SampleGN, SliceIndexIsUniform)
{
    std::vector<int> counts(5, 0);
    for (std::uint64_t t = 0; t < 50000; ++t) {
        ++counts[sample_slice_index(StreamKey{3, t}, 5)];
    }
    for (int n : counts) {
        EXPECT_NEAR(n / 50000.0, 0.2, 0.01);
    }
}

TEST(Spec, NamesRoundTrip)
{
    for (auto k : kAllRegularizers) {
        EXPECT_EQ(parse_regularizer(regularizer_name(k)), k);
    }
    EXPECT_EQ(parse_regularizer("Sample-GN"), RegularizerKind::SampleGN);
    EXPECT_FALSE(parse_regularizer("l2").has_value());
}

TEST(Spec, Validation)
{
    RegularizerSpec spec;
    EXPECT_NO_THROW(spec.validate());
    spec.strength = -1.0;
    EXPECT_THROW(spec.validate(), ValidationError);
    spec = RegularizerSpec{};
    spec.micro_size = 0;
    EXPECT_THROW(spec.validate(), ValidationError);
    spec = RegularizerSpec{};
    spec.mode = ad::FiniteDifference{0.0};
    EXPECT_THROW(spec.validate(), ValidationError);
}

TEST(Dispatch, StreamDependsOnSeedAndStep)
{
    const auto c = make_tiny_case(23);
    RegularizerSpec spec;
    spec.kind = RegularizerKind::UJ;
    spec.micro_size = c.partition.micro_size;
    const auto a = penalized_loss(spec, c.params, c.data, c.partition, 4);
    EXPECT_EQ(a.value, penalized_loss(spec, c.params, c.data, c.partition, 4).value);
    EXPECT_NE(a.value, penalized_loss(spec, c.params, c.data, c.partition, 5).value);
    spec.seed = 1;
    EXPECT_NE(a.value, penalized_loss(spec, c.params, c.data, c.partition, 4).value);
    spec.kind = RegularizerKind::GN;
    const auto g0 = penalized_loss(spec, c.params, c.data, c.partition, 4);
    spec.seed = 2;
    EXPECT_EQ(g0.value, penalized_loss(spec, c.params, c.data, c.partition, 4).value);
}

} // namespace
} // namespace microreg
