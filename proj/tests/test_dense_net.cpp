#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "seqpen/dense_net.hpp"
#include "support/finite_difference.hpp"

namespace seqpen {
namespace {

using V = Eigen::VectorXd;
using M = Eigen::MatrixXd;

TEST(DenseNet, ParameterLayoutAndShapeChecks) {
  const DenseNet net({{3, 4, Activation::relu}, {4, 2, Activation::softmax}});
  EXPECT_EQ(net.parameter_count(), 3 * 4 + 4 + 4 * 2 + 2);
  EXPECT_EQ(net.bias_offset(0), 12);
  EXPECT_EQ(net.weight_offset(1), 16);
  EXPECT_THROW(DenseNet({{3, 4, Activation::relu}, {5, 2, Activation::relu}}), DimensionError);
  EXPECT_THROW(DenseNet({}), std::invalid_argument);
  EXPECT_THROW(mlp_forward<double>(net, V::Zero(3), M::Zero(3, 1)), DimensionError);
  EXPECT_THROW(mlp_forward<double>(net, V::Zero(net.parameter_count()), M::Zero(2, 1)),
               DimensionError);
}

TEST(DenseNet, InitKeepsBiasesZeroAndIsSeeded) {
  const DenseNet net({{5, 3, Activation::relu}});
  const V a = net.init_parameters<double>(4);
  EXPECT_EQ(a, net.init_parameters<double>(4));
  EXPECT_NE(a, net.init_parameters<double>(5));
  EXPECT_TRUE(a.tail(3).isZero(0));
  EXPECT_LE(a.head(15).cwiseAbs().maxCoeff(), std::sqrt(6.0 / 8.0));
}

TEST(MlpForward, IdentityLayer) {
  const DenseNet net({{3, 3, Activation::identity}});
  V p = V::Zero(net.parameter_count());
  Eigen::Map<M>(p.data(), 3, 3) = M::Identity(3, 3);
  const M x = (M(3, 2) << 1, -2, 3, 0.5, -4, 6).finished();
  EXPECT_EQ(mlp_forward<double>(net, p, x).first, x);
}

TEST(MlpForward, ZeroWeightSoftmaxIsUniform) {
  const DenseNet net({{4, 10, Activation::softmax}});
  const M out = mlp_forward<double>(net, V::Zero(net.parameter_count()), M::Random(4, 3)).first;
  EXPECT_LE((out.array() - 0.1).abs().maxCoeff(), 1e-15);
}

TEST(MlpForward, ReluAndSigmoid) {
  const DenseNet relu({{1, 2, Activation::relu}});
  const V p = (V(4) << 1, -1, 0, 0).finished();
  const M out = mlp_forward<double>(relu, p, M::Constant(1, 1, 2.0)).first;
  EXPECT_EQ(out(0, 0), 2.0);
  EXPECT_EQ(out(1, 0), 0.0);
  const DenseNet sig({{1, 1, Activation::sigmoid}});
  EXPECT_DOUBLE_EQ(mlp_forward<double>(sig, V::Zero(2), M::Constant(1, 1, 7.0)).first(0, 0), 0.5);
}

TEST(MlpBackward, ZeroOutputGradientGivesZero) {
  const DenseNet net({{3, 4, Activation::relu}, {4, 2, Activation::sigmoid}});
  const V p = net.init_parameters<double>(1);
  const auto [out, cache] = mlp_forward<double>(net, p, M::Random(3, 5));
  const auto back = mlp_backward<double>(net, p, cache, M::Zero(2, 5));
  EXPECT_TRUE(back.param_grad.isZero(0));
  EXPECT_TRUE(back.input_grad.isZero(0));
}

TEST(MlpBackward, ScalarLinearLayer) {
  const DenseNet net({{1, 1, Activation::identity}});
  const V p = (V(2) << 2.0, 0.5).finished();
  const auto [out, cache] = mlp_forward<double>(net, p, M::Constant(1, 1, 3.0));
  EXPECT_EQ(out(0, 0), 6.5);
  const auto back = mlp_backward<double>(net, p, cache, M::Ones(1, 1));
  EXPECT_EQ(back.param_grad(0), 3.0);
  EXPECT_EQ(back.param_grad(1), 1.0);
  EXPECT_EQ(back.input_grad(0, 0), 2.0);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  const DenseNet net({{4, 6, Activation::relu}, {6, 5, Activation::sigmoid},
                      {5, 3, Activation::softmax}});
  std::mt19937_64 rng(17);
  std::normal_distribution<double> d(0.0, 0.5);
  const M x = M::NullaryExpr(4, 3, [&] { return d(rng); });
  const M w = M::NullaryExpr(3, 3, [&] { return d(rng); });
  for (int t = 0; t < 10; ++t) {
    const V p = V::NullaryExpr(net.parameter_count(), [&] { return d(rng); });
    auto loss = [&](const V& q) { return mlp_forward<double>(net, q, x).first.cwiseProduct(w).sum(); };
    const auto [out, cache] = mlp_forward<double>(net, p, x);
    const V grad = mlp_backward<double>(net, p, cache, w).param_grad;
    EXPECT_LE(testing::relative_error(grad, testing::central_gradient(loss, p)), 1e-5);
  }
}

TEST(MlpBackward, StaleCacheThrows) {
  const DenseNet net({{2, 2, Activation::relu}});
  V p = net.init_parameters<double>(3);
  const auto [out, cache] = mlp_forward<double>(net, p, M::Ones(2, 1));
  p(0) += 1.0;
  EXPECT_THROW(mlp_backward<double>(net, p, cache, M::Ones(2, 1)), std::logic_error);
  EXPECT_THROW(mlp_backward<double>(net, p, ForwardCache<double>{}, M::Ones(2, 1)),
               std::logic_error);
}

TEST(Losses, CrossEntropy) {
  const V uniform = V::Constant(10, 0.1);
  const auto ce = ce_loss<double>(uniform, 3);
  EXPECT_NEAR(ce.value, std::log(10.0), 1e-15);
  EXPECT_DOUBLE_EQ(ce.grad(3), -10.0);
  EXPECT_FALSE(ce.clamped);
  V zero = V::Zero(3);
  zero(0) = 1.0;
  const auto clamped = ce_loss<double>(zero, 1);
  EXPECT_TRUE(clamped.clamped);
  EXPECT_NEAR(clamped.value, -std::log(1e-12), 1e-9);
  EXPECT_THROW(ce_loss<double>(uniform, 10), std::out_of_range);
}

TEST(Losses, MeanSquaredError) {
  const V image = V::LinSpaced(784, 0.0, 1.0);
  EXPECT_EQ(mse_loss<double>(image, image).value, 0.0);
  const auto m = mse_loss<double>(image, (image.array() + 0.1).matrix());
  EXPECT_NEAR(m.value, 0.01, 1e-12);
  EXPECT_NEAR(m.grad(0), 2 * 0.1 / 784, 1e-15);
  EXPECT_THROW(mse_loss<double>(image, V::Zero(3)), DimensionError);
}

}  // namespace
}  // namespace seqpen
