/*
 * Copyright 2026 The CREAM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace cream {
namespace {

TEST(MaskedAffine, IdentityPassesInputThrough) {
  MaskedAffine l(Matrix::identity(2));
  l.weights = Matrix::identity(2);
  EXPECT_EQ(l.forward(Vector{1, 2}), (Vector{1, 2}));
}

TEST(MaskedAffine, ZeroMaskLeavesBias) {
  MaskedAffine l(Matrix(2, 2, 0.0));
  l.weights = Matrix(2, 2, 7.0);
  l.bias = {3, 4};
  EXPECT_EQ(l.forward(Vector{5, -1}), (Vector{3, 4}));
}

TEST(MaskedAffine, MaskAppliedToProduct) {
  MaskedAffine l(Matrix::from_rows({{1, 0}, {1, 1}}));
  l.weights = Matrix::from_rows({{1, 1}, {1, 1}});
  EXPECT_EQ(masked_affine_forward(l, Vector{2, 3}), (Vector{2, 5}));
}

TEST(MaskedAffine, RejectsWrongInputWidth) {
  MaskedAffine l = MaskedAffine::dense(3, 2);
  EXPECT_THROW(l.forward(Vector{1, 2}), ConfigError);
}

TEST(Backward, MaskedEntryHasZeroGradient) {
  MaskedAffine l(Matrix::from_rows({{1, 0}, {1, 1}}));
  l.weights = Matrix::from_rows({{0.5, 0.0}, {-0.3, 0.8}});
  const Vector x{1.5, -2.0};
  const Vector y = l.forward(x);
  Vector dy(y);  // quadratic loss 0.5 * |y|^2
  AffineGrad g = l.zero_grad();
  l.backward(x, dy, g);
  EXPECT_EQ(g.weights(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(g.weights(0, 0), y[0] * x[0]);
  EXPECT_DOUBLE_EQ(g.weights(1, 1), y[1] * x[1]);
}

TEST(Backward, ZeroUpstreamGradientGivesZeroGradients) {
  Rng rng(3);
  MaskedMlp mlp({testing::random_pattern(4, 3, rng), testing::random_pattern(2, 4, rng)},
                Activation::relu, Activation::identity);
  mlp.init(rng);
  MaskedMlp::Trace t;
  mlp.forward(Vector{0.2, -0.4, 1.0}, &t);
  auto grads = mlp.zero_grads();
  const Vector din = mlp.backward(t, Vector{0, 0}, grads);
  for (const auto& g : grads) {
    for (double v : g.weights.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.bias) EXPECT_EQ(v, 0.0);
  }
  for (double v : din) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MissingTraceIsUsageError) {
  MaskedMlp mlp({Matrix(2, 2, 1.0)}, Activation::relu, Activation::identity);
  auto grads = mlp.zero_grads();
  EXPECT_THROW(mlp.backward(MaskedMlp::Trace{}, Vector{1, 1}, grads), UsageError);
}

TEST(Backward, TwoLayerMatchesFiniteDifferences) {
  Rng rng(11);
  MaskedMlp mlp({Matrix(4, 3, 1.0), Matrix(2, 4, 1.0)}, Activation::relu, Activation::identity);
  for (auto& l : mlp.layers())
    for (double& w : l.weights.data()) w = rng.uniform(-0.5, 0.5);
  const Vector x{0.3, -0.7, 1.1};
  auto loss = [&] {
    const Vector y = mlp.forward(x);
    return 0.5 * (y[0] * y[0] + y[1] * y[1]);
  };
  MaskedMlp::Trace t;
  const Vector y = mlp.forward(x, &t);
  auto grads = mlp.zero_grads();
  mlp.backward(t, y, grads);
  const double h = 1e-5;
  for (std::size_t l = 0; l < 2; ++l) {
    auto& w = mlp.layers()[l].weights.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double saved = w[k];
      w[k] = saved + h;
      const double up = loss();
      w[k] = saved - h;
      const double down = loss();
      w[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[l].weights.data()[k];
      EXPECT_LT(std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-4}), 1e-4);
    }
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  MaskedAffine l = MaskedAffine::dense(2, 2);
  l.weights = Matrix::from_rows({{1, 2}, {3, 4}});
  AdamState s(l, AdamConfig{});
  adam_step(l, l.zero_grad(), s);
  EXPECT_EQ(l.weights, Matrix::from_rows({{1, 2}, {3, 4}}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  MaskedAffine l = MaskedAffine::dense(1, 1);
  AdamState s(l, AdamConfig{1e-3});
  AffineGrad g = l.zero_grad();
  g.weights(0, 0) = 1.0;
  adam_step(l, g, s);
  // m_hat = 1, v_hat = 1 after bias correction.
  EXPECT_NEAR(l.weights(0, 0), -1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, MaskedEntryStaysZero) {
  MaskedAffine l(Matrix::from_rows({{1, 0}}));
  AdamState s(l, AdamConfig{});
  AffineGrad g = l.zero_grad();
  g.weights(0, 0) = 1.0;
  g.weights(0, 1) = 5.0;
  for (int i = 0; i < 10; ++i) adam_step(l, g, s);
  EXPECT_EQ(l.weights(0, 1), 0.0);
  EXPECT_NE(l.weights(0, 0), 0.0);
}

TEST(Adam, NonFiniteGradientAborts) {
  MaskedAffine l = MaskedAffine::dense(1, 1);
  AdamState s(l, AdamConfig{});
  AffineGrad g = l.zero_grad();
  g.weights(0, 0) = std::nan("");
  EXPECT_THROW(adam_step(l, g, s), TrainingError);
}

TEST(SoftmaxOverGroups, SymmetricLogits) {
  const Vector p = softmax_over_groups(Vector{0, 0}, Groups{{0, 1}});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(SoftmaxOverGroups, ClosedForm) {
  const Vector p = softmax_over_groups(Vector{std::log(2.0), 0.0}, Groups{{0, 1}});
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxOverGroups, UngroupedIndexUsesSigmoid) {
  const Vector p = softmax_over_groups(Vector{1.0, -1.0, 0.0}, Groups{{0, 1}});
  EXPECT_DOUBLE_EQ(p[2], 0.5);
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
}

TEST(SoftmaxOverGroups, OverlappingGroupsRejected) {
  EXPECT_THROW(softmax_over_groups(Vector{0, 0, 0}, Groups{{0, 1}, {1, 2}}), ConfigError);
}

TEST(Losses, TwoClassUniformIsLn2) {
  EXPECT_NEAR(task_cross_entropy(Vector{0.0, 0.0}, 0).value, std::log(2.0), 1e-15);
}

TEST(Losses, PerfectPredictionNearZero) {
  EXPECT_NEAR(task_cross_entropy(Vector{50.0, 0.0}, 0).value, 0.0, 1e-15);
  EXPECT_NEAR(clamped_cross_entropy(Vector{1.0, 0.0}, 0), 0.0, 1e-15);
}

TEST(Losses, UniformThreeWayGroupIsLn3) {
  const auto r = grouped_concept_loss(Vector{0, 0, 0}, Vector{0, 1, 0}, Groups{{0, 1, 2}});
  EXPECT_NEAR(r.value, std::log(3.0), 1e-15);
}

TEST(Losses, UniformTenClassTaskIsLn10) {
  EXPECT_NEAR(task_cross_entropy(Vector(10, 0.0), 4).value, std::log(10.0), 1e-15);
}

TEST(Losses, NonBinaryTargetRejected) {
  EXPECT_THROW(grouped_concept_loss(Vector{0.0}, Vector{0.5}, Groups{}), DataError);
}

TEST(Losses, GradientMatchesFiniteDifferences) {
  const Groups groups{{0, 1, 2}};
  const Vector targets{0, 0, 1, 1, 0};
  Vector logits{0.3, -1.2, 0.8, 2.0, -0.5};
  const auto r = grouped_concept_loss(logits, targets, groups);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Vector up = logits, down = logits;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double fd = (grouped_concept_loss(up, targets, groups).value -
                       grouped_concept_loss(down, targets, groups).value) / 2e-6;
    EXPECT_NEAR(r.grad[i], fd, 1e-8);
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.uniform(0, 1), b.uniform(0, 1));
}

}  // namespace
}  // namespace cream
