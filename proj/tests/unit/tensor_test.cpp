#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "transda/tensor.hpp"

using namespace transda;

namespace {

std::vector<Real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }
std::vector<Real> grads(const Tensor& t) { return {t.grad().begin(), t.grad().end()}; }

}  // namespace

TEST(Tensor, ReluForward) {
  const Tensor x = Tensor::from_data({3}, {-1, 0, 2});
  EXPECT_EQ(values(relu(x)), (std::vector<Real>{0, 0, 2}));
}

TEST(Tensor, MatmulIdentity) {
  const Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(values(matmul(a, eye)), values(a));
}

TEST(Tensor, ConvOnesKernel) {
  const Tensor x = Tensor::full({1, 1, 3, 3}, 1);
  const Tensor w = Tensor::full({1, 1, 2, 2}, 1);
  const Tensor y = conv2d(x, w, Tensor{}, Padding::Valid);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(values(y), (std::vector<Real>{4, 4, 4, 4}));
}

TEST(Tensor, ConvSamePaddingKeepsExtent) {
  const Tensor x = Tensor::full({2, 3, 5, 7}, 1);
  const Tensor w = Tensor::full({4, 3, 3, 3}, 1);
  const Tensor b = Tensor::zeros({4});
  const Tensor y = conv2d(x, w, b, Padding::Same);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5, 7}));
  // Interior pixel sees 27 ones, a corner 12.
  EXPECT_DOUBLE_EQ(y.data()[1 * 7 + 1], 27.0);
  EXPECT_DOUBLE_EQ(y.data()[0], 12.0);
}

TEST(Tensor, SquareSumGradient) {
  const Tensor x = Tensor::from_data({2}, {1, 2}, true);
  sum(mul(x, x)).backward();
  EXPECT_EQ(grads(x), (std::vector<Real>{2, 4}));
}

TEST(Tensor, ReluGradientAtNegativeIsZero) {
  const Tensor x = Tensor::from_data({1}, {-1}, true);
  sum(relu(x)).backward();
  EXPECT_EQ(grads(x), (std::vector<Real>{0}));
}

TEST(Tensor, StopGradientBlocksOneBranch) {
  const Tensor x = Tensor::from_data({1}, {3}, true);
  sum(mul(stop_gradient(x), x)).backward();
  EXPECT_EQ(grads(x), (std::vector<Real>{3}));
}

TEST(Tensor, GradReverseNegatesAndDoubleReverseRestores) {
  const Tensor x = Tensor::from_data({1}, {2}, true);
  sum(grad_reverse(x)).backward();
  EXPECT_EQ(grads(x), (std::vector<Real>{-1}));
  EXPECT_EQ(values(grad_reverse(x)), values(x));

  const Tensor z = Tensor::from_data({1}, {2}, true);
  sum(grad_reverse(grad_reverse(z))).backward();
  EXPECT_EQ(grads(z), (std::vector<Real>{1}));
}

TEST(Tensor, GradientsAccumulateUntilCleared) {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  EXPECT_EQ(grads(x), (std::vector<Real>{4, 8}));
  x.zero_grad();
  sum(x).backward();
  EXPECT_EQ(grads(x), (std::vector<Real>{1, 1}));
}

TEST(Tensor, SharedSubexpressionGetsBothContributions) {
  const Tensor x = Tensor::from_data({1}, {3}, true);
  const Tensor y = mul(x, x);
  sum(add(y, y)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Tensor, LogSoftmaxRowsNormalize) {
  const Tensor z = Tensor::from_data({2, 3}, {1, 2, 3, 1000, 1000, 1000});
  const Tensor lp = log_softmax(z);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < 3; ++k) s += std::exp(lp.data()[r * 3 + k]);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  EXPECT_NEAR(lp.data()[3], -std::log(3.0), 1e-9);
}

TEST(Tensor, BroadcastAddOverLeadingAxes) {
  const Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  const Tensor b = Tensor::from_data({2}, {10, 20}, true);
  const Tensor y = add(a, b);
  EXPECT_EQ(values(y), (std::vector<Real>{11, 22, 13, 24}));
  sum(y).backward();
  EXPECT_EQ(grads(b), (std::vector<Real>{2, 2}));
}

TEST(Tensor, MaxPoolRoutesGradientToArgmax) {
  const Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 5, 3, 2}, true);
  const Tensor y = max_pool2x2(x);
  EXPECT_EQ(values(y), (std::vector<Real>{5}));
  sum(y).backward();
  EXPECT_EQ(grads(x), (std::vector<Real>{0, 1, 0, 0}));
}

TEST(Tensor, ConcatAndReshape) {
  const Tensor a = Tensor::from_data({1, 2}, {1, 2});
  const Tensor b = Tensor::from_data({2, 2}, {3, 4, 5, 6});
  const Tensor c = concat({a, b}, 0);
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  EXPECT_EQ(values(reshape(c, {6})), (std::vector<Real>{1, 2, 3, 4, 5, 6}));
}

TEST(Tensor, NoGradGuardSkipsRecording) {
  const Tensor x = Tensor::from_data({1}, {2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = mul(x, x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_enabled());
}

TEST(Tensor, NonScalarBackwardThrows) {
  const Tensor x = Tensor::from_data({2}, {1, 2}, true);
  EXPECT_THROW(mul(x, x).backward(), ShapeError);
}

TEST(Tensor, ShapeErrorsNameOpAndShapes) {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Tensor, OnlyLeavesAreWritable) {
  Tensor x = Tensor::from_data({1}, {1}, true);
  EXPECT_NO_THROW(x.mutable_data());
  Tensor y = mul(x, x);
  EXPECT_THROW(y.mutable_data(), std::logic_error);
}

TEST(Tensor, OpNamesRoundTrip) {
  for (int k = 0; k <= static_cast<int>(OpKind::GridSample); ++k) {
    const auto kind = static_cast<OpKind>(k);
    EXPECT_EQ(op_from_name(op_name(kind)), kind);
  }
  EXPECT_FALSE(op_from_name("nope").has_value());
}

TEST(Tensor, TopologicalOrderPutsInputsFirst) {
  const Tensor x = Tensor::from_data({1}, {1}, true);
  const Tensor y = tanh(x);
  const Tensor z = sum(y);
  const auto order = topological_order(z);
  ASSERT_EQ(order.size(), 3u);
  EXPECT_EQ(order.front(), x.node().get());
  EXPECT_EQ(order.back(), z.node().get());
}

TEST(Tensor, BackwardFaultScalesGradient) {
  const Tensor x = Tensor::from_data({1}, {0.5}, true);
  {
    ScopedBackwardFault fault(OpKind::Exp, 2.0);
    sum(exp(x)).backward();
  }
  EXPECT_NEAR(x.grad()[0], 2.0 * std::exp(0.5), 1e-12);
}
