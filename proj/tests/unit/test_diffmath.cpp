#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"

#include "stereops/diffmath/ops.hpp"
#include "stereops/diffmath/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace d = stereops::diff;
using stereops::Matrix;
using stereops::kPi;
using stereops::testing::check_gradients;
using stereops::testing::op_cases;
using stereops::testing::random_matrix;

namespace {

Matrix scalar(double x) { return Matrix::Constant(1, 1, x); }

TEST(Ops, SinAtZeroHasUnitSlope) {
  d::Tape t;
  d::Value x = t.leaf(scalar(0.0));
  d::Value y = d::sin(x);
  EXPECT_EQ(y.item(), 0.0);
  t.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 1.0);
}

TEST(Ops, Atan2OnPositiveYAxis) {
  d::Tape t;
  EXPECT_DOUBLE_EQ(d::atan2(t.constant(1.0), t.constant(0.0)).item(), kPi / 2);
}

TEST(Ops, SquareGradientAtThree) {
  d::Tape t;
  d::Value x = t.leaf(scalar(3.0));
  t.backward(x * x);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
}

TEST(Ops, SigmoidGradientAtZero) {
  d::Tape t;
  d::Value x = t.leaf(scalar(0.0));
  t.backward(d::sigmoid(x));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 0.25);
}

TEST(Ops, MatmulGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  const auto g = check_gradients([](d::Tape&, const std::vector<d::Value>& x) { return d::sum_all(d::matmul(x[0], x[1])); },
                                 {random_matrix(rng, 2, 3, -1, 1), random_matrix(rng, 3, 1, -1, 1)}, 1e-5);
  EXPECT_LE(g.max_error, 1e-6) << g.worst;
}

TEST(Ops, EveryOpMatchesFiniteDifferences) {
  for (std::uint64_t seed : {7u, 8u, 9u})
    for (const auto& c : op_cases(seed)) {
      const auto g = check_gradients(c.fn, c.inputs, 1e-5);
      EXPECT_LE(g.max_error, 1e-4) << c.name << " seed " << seed << " worst " << g.worst;
    }
}

TEST(Ops, ThreeLayerSineNetworkGradients) {
  // 20 weights: 2->4 (8 + 4 biases), 4->2 (8 weights, no bias).
  std::mt19937_64 rng(3);
  const Matrix in = random_matrix(rng, 5, 2, -1, 1);
  auto net = [in](d::Tape& t, const std::vector<d::Value>& w) {
    d::Value h = d::sin(30.0 * (d::matmul(t.constant(in), w[0]) + w[1]));
    h = d::sin(d::matmul(h, w[2]));
    return d::sum_all(d::square(h));
  };
  const auto g = check_gradients(net, {random_matrix(rng, 2, 4, -0.5, 0.5), random_matrix(rng, 1, 4, -1, 1),
                                       random_matrix(rng, 4, 2, -1, 1)});
  EXPECT_LE(g.max_error, 1e-4) << g.worst;
  EXPECT_EQ(g.components, 20);
}

TEST(Ops, BroadcastingShapes) {
  d::Tape t;
  d::Value a = t.constant(Matrix::Ones(3, 4));
  EXPECT_EQ((a + t.constant(Matrix::Ones(1, 4))).rows(), 3);
  EXPECT_EQ((a * t.constant(Matrix::Ones(3, 1))).cols(), 4);
  EXPECT_THROW(a + t.constant(Matrix::Ones(2, 4)), d::ShapeError);
  EXPECT_THROW(d::matmul(a, a), d::ShapeError);
}

TEST(Ops, DetachBlocksGradient) {
  d::Tape t;
  d::Value x = t.leaf(scalar(2.0));
  t.backward(x * d::detach(x));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 2.0);
}

TEST(Ops, CumprodExclusiveValues) {
  d::Tape t;
  Matrix a(1, 4);
  a << 2, 3, 4, 5;
  const Matrix out = d::cumprod_exclusive(t.constant(a)).data();
  EXPECT_EQ(out(0, 0), 1.0);
  EXPECT_EQ(out(0, 1), 2.0);
  EXPECT_EQ(out(0, 2), 6.0);
  EXPECT_EQ(out(0, 3), 24.0);
}

TEST(Ops, PowerOfNegativeBaseIsZero) {
  d::Tape t;
  d::Value x = t.leaf(scalar(-0.5));
  d::Value y = d::power(x, 2.0);
  EXPECT_EQ(y.item(), 0.0);
  t.backward(y);
  EXPECT_EQ(x.grad()(0, 0), 0.0);
}

TEST(Tape, BackwardIsLinearInTheLoss) {
  std::mt19937_64 rng(4);
  const Matrix x0 = random_matrix(rng, 3, 3, -1, 1);
  auto f = [](const d::Value& x) { return d::sum_all(d::sin(x) * x); };
  auto g = [](const d::Value& x) { return d::sum_all(d::exp(x)); };
  Matrix gf, gg, gsum;
  {
    d::Tape t;
    d::Value x = t.leaf(x0);
    t.backward(f(x));
    gf = x.grad();
  }
  {
    d::Tape t;
    d::Value x = t.leaf(x0);
    t.backward(g(x));
    gg = x.grad();
  }
  {
    d::Tape t;
    d::Value x = t.leaf(x0);
    t.backward(f(x) + g(x));
    gsum = x.grad();
  }
  EXPECT_LE((gsum - gf - gg).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Tape, RepeatedBackwardAccumulates) {
  d::Tape t;
  d::Value x = t.leaf(scalar(1.5));
  d::Value y = x * x;
  t.backward(y);
  const double once = x.grad()(0, 0);
  t.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 2.0 * once);
}

TEST(Tape, ParameterGradientsAccumulateAcrossTapes) {
  d::Parameter p("p", scalar(2.0));
  for (int k = 0; k < 2; ++k) {
    d::Tape t;
    d::Value v = t.param(p);
    t.backward(3.0 * v);
  }
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 6.0);
  p.zero_grad();
  EXPECT_EQ(p.grad(0, 0), 0.0);
}

TEST(Tape, StaleValuesAreRejected) {
  d::Tape t;
  d::Value x = t.constant(1.0);
  t.clear();
  EXPECT_THROW(x.data(), d::GenerationError);
}

TEST(Tape, BackwardNeedsAScalar) {
  d::Tape t;
  d::Value x = t.leaf(Matrix::Ones(2, 2));
  EXPECT_THROW(t.backward(x), d::ShapeError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  d::Parameter p("p", scalar(0.5));
  d::Adam opt({&p}, {1e-3});
  p.grad(0, 0) = 1.0;
  opt.step();
  EXPECT_NEAR(p.value(0, 0), 0.5 - 1e-3, 1e-9);
  EXPECT_EQ(p.grad(0, 0), 0.0);
}

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  d::Parameter p("p", scalar(0.5));
  d::Adam opt({&p}, {1e-3});
  opt.step();
  EXPECT_EQ(p.value(0, 0), 0.5);
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  d::Parameter p("x", scalar(-3.0));
  d::Adam opt({&p}, {0.1});
  for (int i = 0; i < 500; ++i) {
    d::Tape t;
    d::Value x = t.param(p);
    t.backward(d::square(x - 2.0));
    opt.step();
  }
  EXPECT_LT(std::abs(p.value(0, 0) - 2.0), 1e-3);
}

}  // namespace
