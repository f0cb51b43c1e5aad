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
#include "microreg/grad.hpp"
#include "microreg/tape.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

namespace microreg {
namespace {

using ad::Tape;
using ad::Var;
using testing::random_tensor;
using testing::relative_error;

TEST(Primitives, MatmulHandChecked)
{
    Tape tape;
    const Var a = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    const Var b = tape.constant(Tensor::matrix(3, 1, {1, 0, -1}));
    const Var c = ad::matmul(a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_DOUBLE_EQ(c.value()[0], -2.0);
    EXPECT_DOUBLE_EQ(c.value()[1], -2.0);
}

TEST(Primitives, ReluZeroesNegatives)
{
    Tape tape;
    const Var r = ad::relu(tape.constant(Tensor::vector({-1, 0, 2})));
    EXPECT_EQ(r.value(), Tensor::vector({0, 0, 2}));
}

TEST(Primitives, LogSoftmaxOfConstantRow)
{
    for (double c : {-7.5, 0.0, 3.0, 250.0}) {
        Tape tape;
        const Var z = ad::log_softmax(tape.constant(Tensor::matrix(1, 3, {c, c, c})));
        for (double v : z.value().values()) {
            EXPECT_NEAR(v, -std::log(3.0), 1e-15);
        }
    }
}

TEST(Primitives, RecordPrimitiveDispatch)
{
    Tape tape;
    const Var a = tape.constant(Tensor::vector({1, 2, 3}));
    const Var b = tape.constant(Tensor::vector({4, 5, 6}));
    const Var both[] = {a, b};
    EXPECT_EQ(ad::record_primitive(ad::Op::Add, both).value(), Tensor::vector({5, 7, 9}));
    EXPECT_EQ(ad::record_primitive(ad::Op::Mul, both).value(), Tensor::vector({4, 10, 18}));
    const Var one[] = {a};
    ad::NodeAttrs scale;
    scale.scalar = 2.0;
    EXPECT_EQ(ad::record_primitive(ad::Op::Scale, one, scale).value(), Tensor::vector({2, 4, 6}));
    EXPECT_DOUBLE_EQ(ad::record_primitive(ad::Op::Sum, one).value().item(), 6.0);
    EXPECT_DOUBLE_EQ(ad::record_primitive(ad::Op::Mean, one).value().item(), 2.0);
    EXPECT_EQ(ad::record_primitive(ad::Op::Concat, both).value().size(), 6u);
    ad::NodeAttrs reshape;
    reshape.shape = {3, 1};
    EXPECT_EQ(ad::record_primitive(ad::Op::Reshape, one, reshape).shape(), (Shape{3, 1}));
}

TEST(Primitives, ShapeMismatchThrows)
{
    Tape tape;
    const Var a = tape.constant(Tensor(Shape{2, 3}));
    const Var b = tape.constant(Tensor(Shape{2, 3}));
    EXPECT_THROW(ad::matmul(a, b), ShapeError);
    EXPECT_THROW(ad::add(a, tape.constant(Tensor(Shape{4}))), ShapeError);
    EXPECT_THROW(ad::reshape(a, Shape{5}), ShapeError);
}

TEST(Primitives, NonFiniteInputRejected)
{
    Tape tape;
    EXPECT_THROW(tape.leaf(Tensor::vector({1.0, NAN})), NonFiniteError);
    EXPECT_THROW(tape.constant(Tensor::vector({INFINITY})), NonFiniteError);
    const Var big = tape.leaf(Tensor::vector({1e200}));
    EXPECT_THROW(ad::square(ad::square(big)), NonFiniteError);
}

TEST(Backward, SquareAtThree)
{
    Tape tape;
    const Var x = tape.leaf(Tensor::scalar(3.0));
    const auto g = tape.backward(ad::square(x), false);
    EXPECT_DOUBLE_EQ(g.at(x.id()).value().item(), 6.0);
}

TEST(Backward, SumOfSquares)
{
    Tape tape;
    const Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
    const auto g = tape.backward(ad::sum(ad::square(x)), false);
    EXPECT_EQ(g.at(x.id()).value(), Tensor::vector({2.0, 4.0}));
}

TEST(Backward, HessianVectorProductOfQuadratic)
{
    // f = ½θᵀAθ; differentiating ⟨∇f, v⟩ again gives Av.
    const Tensor a = Tensor::matrix(3, 3, {2.0, -1.0, 0.5, -1.0, 3.0, 0.25, 0.5, 0.25, 1.5});
    const Tensor v = Tensor::matrix(3, 1, {0.3, -0.7, 1.1});
    Tape tape;
    const Var theta = tape.leaf(Tensor::matrix(3, 1, {1.0, 2.0, -0.5}));
    const Var f = ad::scale(ad::sum(ad::mul(theta, ad::matmul(tape.constant(a), theta))), 0.5);
    const Var wrt[] = {theta};
    const Var g = tape.grad(f, wrt, {true})[0];
    const Var hv = tape.grad(ad::sum(ad::mul(g, tape.constant(v))), wrt)[0];
    for (std::size_t i = 0; i < 3; ++i) {
        double expected = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            expected += a.at(i, j) * v[j];
        }
        EXPECT_NEAR(hv.value()[i], expected, 1e-12 * std::abs(expected));
    }
}

TEST(Backward, DeterministicBytes)
{
    Engine engine = make_engine(3);
    const TensorList theta{random_tensor(Shape{4, 3}, engine), random_tensor(Shape{3, 2}, engine)};
    const ad::ScalarFn f = [](Tape&, std::span<const Var> p) {
        return ad::mean(ad::gather(ad::log_softmax(ad::relu(ad::matmul(p[0], p[1]))), {0, 1, 1, 0}));
    };
    EXPECT_EQ(ad::value_and_grad(f, theta).gradient, ad::value_and_grad(f, theta).gradient);
    EXPECT_EQ(ad::grad_norm_sq_gradient(f, theta, ad::DoubleBackprop{}).gradient,
              ad::grad_norm_sq_gradient(f, theta, ad::DoubleBackprop{}).gradient);
}

TEST(Backward, NonScalarOutputRejected)
{
    Tape tape;
    const Var x = tape.leaf(Tensor::vector({1, 2}));
    EXPECT_THROW(tape.backward(ad::square(x), false), TapeError);
}

TEST(Backward, ConsumedTapeRejected)
{
    Tape tape;
    const Var x = tape.leaf(Tensor::scalar(2.0));
    const Var y = ad::square(x);
    tape.backward(y, false);
    EXPECT_TRUE(tape.consumed());
    EXPECT_THROW(tape.backward(y, false), TapeError);
}

TEST(Backward, RetainedTapeAllowsSecondPass)
{
    Tape tape;
    const Var x = tape.leaf(Tensor::scalar(2.0));
    const Var y = ad::square(x);
    const Var wrt[] = {x};
    tape.grad(y, wrt, {false, true});
    EXPECT_DOUBLE_EQ(tape.grad(y, wrt)[0].value().item(), 4.0);
}

TEST(Backward, SecondDerivativeOfCube)
{
    // f = x³, f' = 3x², f'' = 6x.
    Tape tape;
    const Var x = tape.leaf(Tensor::scalar(1.5));
    const Var f = ad::mul(ad::square(x), x);
    const Var wrt[] = {x};
    const Var g = tape.grad(f, wrt, {true})[0];
    EXPECT_DOUBLE_EQ(g.value().item(), 3.0 * 1.5 * 1.5);
    const Var h = tape.grad(g, wrt)[0];
    EXPECT_DOUBLE_EQ(h.value().item(), 9.0);
}

TEST(Backward, UnreachedLeafGetsZero)
{
    Tape tape;
    const Var x = tape.leaf(Tensor::vector({1, 2}));
    const Var unused = tape.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const auto g = tape.backward(ad::sum(x), false);
    EXPECT_EQ(g.at(unused.id()).value(), Tensor(Shape{2, 2}));
}

// Every differentiable op, composed into scalars, against central differences.
struct OpCase {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Var(Tape&, std::span<const Var>)> f;
};

class OpGradient : public ::testing::TestWithParam<int> {};

std::vector<OpCase> op_cases()
{
    using V = std::span<const Var>;
    return {
        {"add", {{3, 4}, {3, 4}}, [](Tape&, V p) { return ad::sum(ad::square(ad::add(p[0], p[1]))); }},
        {"add-broadcast", {{3, 4}, {4}}, [](Tape&, V p) { return ad::sum(ad::square(ad::add(p[0], p[1]))); }},
        {"sub", {{5}, {5}}, [](Tape&, V p) { return ad::sum(ad::square(ad::sub(p[0], p[1]))); }},
        {"scale-mul", {{2, 3}, {2, 3}}, [](Tape&, V p) { return ad::sum(ad::mul(ad::scale(p[0], -1.7), p[1])); }},
        {"matmul", {{3, 4}, {4, 2}}, [](Tape&, V p) { return ad::sum(ad::square(ad::matmul(p[0], p[1]))); }},
        {"matmul-ta", {{4, 3}, {4, 2}}, [](Tape&, V p) { return ad::sum(ad::square(ad::matmul(p[0], p[1], true))); }},
        {"matmul-tb", {{3, 4}, {2, 4}}, [](Tape&, V p) { return ad::sum(ad::square(ad::matmul(p[0], p[1], false, true))); }},
        {"matmul-tt", {{4, 3}, {2, 4}}, [](Tape&, V p) { return ad::sum(ad::square(ad::matmul(p[0], p[1], true, true))); }},
        {"relu", {{6}}, [](Tape&, V p) { return ad::sum(ad::square(ad::relu(p[0]))); }},
        {"log-softmax-gather", {{3, 5}}, [](Tape&, V p) { return ad::mean(ad::gather(ad::log_softmax(p[0]), {0, 4, 2})); }},
        {"mean-sqrt", {{4}}, [](Tape& t, V p) {
             return ad::mean(ad::sqrt(ad::add(ad::square(p[0]), t.constant(Tensor(Shape{4}, 1.0)))));
         }},
        {"concat-reshape", {{2, 2}, {3}}, [](Tape&, V p) {
             const Var parts[] = {p[0], p[1]};
             return ad::sum(ad::square(ad::reshape(ad::concat(parts), Shape{7, 1})));
         }},
    };
}

TEST_P(OpGradient, FirstOrderMatchesCentralDifference)
{
    const OpCase c = op_cases()[static_cast<std::size_t>(GetParam())];
    Engine engine = make_engine(17, {static_cast<std::uint64_t>(GetParam())});
    TensorList theta;
    for (const auto& s : c.shapes) {
        theta.push_back(random_tensor(s, engine));
    }
    const auto analytic = ad::value_and_grad(c.f, theta).gradient;
    const auto numeric = ad::finite_diff_gradient(ad::as_value_fn(c.f), theta, 1e-6);
    EXPECT_LT(relative_error(analytic, numeric), 1e-6) << c.name;
}

TEST_P(OpGradient, SecondOrderMatchesCentralDifference)
{
    // ∇‖∇f‖² through double backprop, against central differences of ‖∇f‖².
    const OpCase c = op_cases()[static_cast<std::size_t>(GetParam())];
    Engine engine = make_engine(29, {static_cast<std::uint64_t>(GetParam())});
    TensorList theta;
    for (const auto& s : c.shapes) {
        theta.push_back(random_tensor(s, engine));
    }
    const auto exact = ad::grad_norm_sq_gradient(c.f, theta, ad::DoubleBackprop{});
    const ad::ValueFn norm_sq = [&](const TensorList& t) {
        return ad::squared_norm(ad::value_and_grad(c.f, t).gradient);
    };
    const auto numeric = ad::finite_diff_gradient(norm_sq, theta, 1e-5);
    EXPECT_LT(relative_error(exact.gradient, numeric), 1e-5) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 12));

TEST_P(OpGradient, UniformInputsAtSpecTolerance)
{
    const OpCase c = op_cases()[static_cast<std::size_t>(GetParam())];
    Engine engine = make_engine(41, {static_cast<std::uint64_t>(GetParam())});
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 5; ++trial) {
        TensorList theta;
        for (const auto& s : c.shapes) {
            Tensor t(s);
            for (double& v : t.values()) {
                v = u(engine);
            }
            theta.push_back(std::move(t));
        }
        const auto analytic = ad::value_and_grad(c.f, theta).gradient;
        const auto numeric = ad::finite_diff_gradient(ad::as_value_fn(c.f), theta, 1e-5);
        EXPECT_LE(relative_error(analytic, numeric), 1e-4) << c.name;
    }
}

TEST(GradMode, FiniteDifferenceStepMustBePositive)
{
    EXPECT_THROW(ad::validate(ad::FiniteDifference{0.0}), ValidationError);
    EXPECT_THROW(ad::validate(ad::FiniteDifference{-1e-3}), ValidationError);
    EXPECT_NO_THROW(ad::validate(ad::FiniteDifference{}));
    EXPECT_NO_THROW(ad::validate(ad::DoubleBackprop{}));
}

TEST(GradMode, DefaultStepScalesWithTheta)
{
    const TensorList theta{Tensor::vector({0.5, -4.0})};
    EXPECT_DOUBLE_EQ(ad::default_fd_step(theta), 1e-5 * 5.0);
}

TEST(GradNormPenalty, QuadraticIsExactInBothModes)
{
    // L = ½ θᵀAθ with A = diag(a): ∇‖∇L‖² = 2A²θ, and the forward difference is exact.
    const ad::ScalarFn f = [](Tape& tape, std::span<const Var> p) {
        const Var a = tape.constant(Tensor::vector({1.0, 2.0, 3.0}));
        return ad::scale(ad::sum(ad::mul(a, ad::square(p[0]))), 0.5);
    };
    const TensorList theta{Tensor::vector({0.3, -1.0, 2.0})};
    const Tensor expected = Tensor::vector({2 * 1 * 0.3, 2 * 4 * -1.0, 2 * 9 * 2.0});
    const auto exact = ad::grad_norm_sq_gradient(f, theta, ad::DoubleBackprop{});
    const auto fd = ad::grad_norm_sq_gradient(f, theta, ad::FiniteDifference{1e-4});
    EXPECT_LT(relative_error(exact.gradient, TensorList{expected}), 1e-14);
    EXPECT_LT(relative_error(fd.gradient, TensorList{expected}), 1e-9);
    EXPECT_NEAR(exact.norm_sq, 0.09 + 4.0 + 36.0, 1e-12);
}

TEST(GradNormPenalty, ZeroGradientGivesZeroPenaltyGradient)
{
    const ad::ScalarFn f = [](Tape&, std::span<const Var> p) { return ad::sum(ad::square(p[0])); };
    const TensorList theta{Tensor::vector({0.0, 0.0})};
    const auto fd = ad::grad_norm_sq_gradient(f, theta, ad::FiniteDifference{});
    EXPECT_EQ(fd.gradient, zeros_like(theta));
    EXPECT_EQ(fd.norm_sq, 0.0);
}

TEST(GradNormPenalty, VanishingStepIsDegenerate)
{
    const ad::ScalarFn f = [](Tape&, std::span<const Var> p) { return ad::sum(ad::square(p[0])); };
    const TensorList theta{Tensor::vector({1e8, 1.0})};
    EXPECT_THROW(ad::grad_norm_sq_gradient(f, theta, ad::FiniteDifference{1e-30}), DegenerateStepError);
}

TEST(FiniteDiffGradient, CubeAtOne)
{
    const ad::ValueFn f = [](const TensorList& t) { return std::pow(t[0][0], 3); };
    const auto g = ad::finite_diff_gradient(f, {Tensor::scalar(1.0)}, 1e-4);
    EXPECT_NEAR(g[0].item(), 3.0, 1e-7);
}

TEST(FiniteDiffGradient, ConstantIsZero)
{
    const ad::ValueFn f = [](const TensorList&) { return 4.2; };
    const auto g = ad::finite_diff_gradient(f, {Tensor::vector({1, 2, 3})}, 1e-4);
    EXPECT_EQ(g[0], Tensor(Shape{3}));
}

TEST(FiniteDiffGradient, FiveParameterLossMatchesBackward)
{
    const ad::ScalarFn f = [](Tape& t, std::span<const Var> p) {
        const Var x = t.constant(Tensor::matrix(2, 3, {0.5, -1.0, 2.0, 1.5, 0.2, -0.3}));
        const Var logits = ad::matmul(x, ad::reshape(ad::concat(std::vector<Var>{p[0], p[1]}), Shape{3, 2}));
        return ad::mean(ad::gather(ad::log_softmax(logits), {1, 0}));
    };
    // 5 free parameters; the sixth weight is a fixed constant folded into p[1].
    const TensorList theta{Tensor::vector({0.1, -0.4, 0.7, 0.2, -0.9}), Tensor::vector({0.3})};
    const auto analytic = ad::value_and_grad(f, theta).gradient;
    const auto numeric = ad::finite_diff_gradient(ad::as_value_fn(f), theta, 1e-5);
    EXPECT_LE(relative_error(analytic, numeric), 1e-5);
}

TEST(GradNormPenalty, HalfSquaredNormGivesTwoTheta)
{
    const ad::ScalarFn f = [](Tape&, std::span<const Var> p) { return ad::scale(ad::sum(ad::square(p[0])), 0.5); };
    const TensorList theta{Tensor::vector({1.0, -2.0, 0.25})};
    const auto r = ad::grad_norm_sq_gradient(f, theta, ad::DoubleBackprop{});
    EXPECT_EQ(r.gradient[0], Tensor::vector({2.0, -4.0, 0.5}));
}

TEST(GradNormPenalty, SoftmaxClassifierAgainstCentralDifferences)
{
    // 2-layer net 2→2→2 with biases: 10 parameters.
    Engine engine = make_engine(0);
    const TensorList theta{random_tensor(Shape{2, 2}, engine), random_tensor(Shape{2}, engine),
                           random_tensor(Shape{2, 2}, engine), random_tensor(Shape{2}, engine)};
    const Tensor x = random_tensor(Shape{4, 2}, engine);
    const ad::ScalarFn f = [&](Tape& t, std::span<const Var> p) {
        const Var h = ad::relu(ad::add(ad::matmul(t.constant(x), p[0]), p[1]));
        return ad::scale(ad::mean(ad::gather(ad::log_softmax(ad::add(ad::matmul(h, p[2]), p[3])), {0, 1, 1, 0})), -1.0);
    };
    const ad::ValueFn norm_sq = [&](const TensorList& t) { return ad::squared_norm(ad::value_and_grad(f, t).gradient); };
    const auto exact = ad::grad_norm_sq_gradient(f, theta, ad::DoubleBackprop{});
    const auto numeric = ad::finite_diff_gradient(norm_sq, theta, 1e-5);
    EXPECT_LE(relative_error(exact.gradient, numeric), 1e-4);
}

} // namespace
} // namespace microreg
