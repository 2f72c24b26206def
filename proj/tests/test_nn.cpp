#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "masafl/error.hpp"
#include "masafl/nn.hpp"
#include "masafl/random.hpp"

using namespace masafl;

namespace {

std::vector<LabeledExample> random_batch(std::size_t n, std::size_t dim, int classes, Rng& rng) {
  std::vector<LabeledExample> batch(n);
  for (auto& ex : batch) {
    ex.pixels.resize(dim);
    for (double& p : ex.pixels) p = rng.uniform();
    ex.label = static_cast<int>(rng.below(static_cast<std::size_t>(classes)));
    ex.original_label = ex.label;
  }
  return batch;
}

// Plain dense recomputation, independent of forward().
std::vector<double> reference_logits(const ModelState& m, const std::vector<double>& x) {
  std::vector<double> a = x;
  const auto& layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<double> z(L.outputs);
    for (std::size_t o = 0; o < L.outputs; ++o) {
      double s = L.bias[o];
      for (std::size_t i = 0; i < L.inputs; ++i) s += L.weights[o * L.inputs + i] * a[i];
      z[o] = (l + 1 < layers.size()) ? std::max(0.0, s) : s;
    }
    a = std::move(z);
  }
  return a;
}

double batch_loss(const ModelState& m, const std::vector<LabeledExample>& batch) {
  const auto labels = labels_of(batch);
  return cross_entropy(forward(m, batch), labels);
}

}  // namespace

TEST(Forward, ZeroModelGivesZeroLogits) {
  ModelState m({4, 3, 2});
  Rng rng(1);
  auto batch = random_batch(5, 4, 2, rng);
  const Matrix logits = forward(m, batch);
  ASSERT_EQ(logits.rows, 5u);
  ASSERT_EQ(logits.cols, 2u);
  for (double v : logits.data) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityLayerPassesInputThrough) {
  ModelState m({3, 3});
  auto& L = m.layers()[0];
  for (std::size_t i = 0; i < 3; ++i) L.weights[i * 3 + i] = 1.0;
  LabeledExample ex{{0.25, -1.5, 2.0}, 0, false, 0};
  std::vector<LabeledExample> batch{ex};
  const Matrix logits = forward(m, batch);
  EXPECT_EQ(logits(0, 0), 0.25);
  EXPECT_EQ(logits(0, 1), -1.5);
  EXPECT_EQ(logits(0, 2), 2.0);
}

TEST(Forward, MatchesDenseRecomputation) {
  const ModelState m = make_mlp({6, 5, 4, 3}, 42);
  Rng rng(7);
  auto batch = random_batch(8, 6, 3, rng);
  const Matrix logits = forward(m, batch);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto ref = reference_logits(m, batch[r].pixels);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(logits(r, c), ref[c], 1e-12);
  }
}

TEST(Forward, DimensionMismatchIsConfigError) {
  const ModelState m = make_mlp({4, 3, 2}, 1);
  std::vector<LabeledExample> batch{{{0.1, 0.2}, 0, false, 0}};
  EXPECT_THROW(forward(m, batch), ConfigError);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  Matrix logits(3, 5, 0.7);
  std::vector<int> labels{0, 2, 4};
  EXPECT_NEAR(cross_entropy(logits, labels), std::log(5.0), 1e-12);
}

TEST(CrossEntropy, SaturatedCorrectClassIsNearZero) {
  Matrix logits(1, 3, 0.0);
  logits(0, 1) = 50.0;
  std::vector<int> labels{1};
  EXPECT_NEAR(cross_entropy(logits, labels), 0.0, 1e-9);
}

TEST(CrossEntropy, ScalarReferenceValue) {
  Matrix logits(1, 3);
  logits(0, 0) = 1.0;
  logits(0, 1) = 2.0;
  logits(0, 2) = 3.0;
  std::vector<int> labels{2};
  const double expected = std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
  EXPECT_NEAR(cross_entropy(logits, labels), expected, 1e-12);
  EXPECT_NEAR(cross_entropy(logits, labels), 0.40760596, 1e-8);
}

TEST(CrossEntropy, EmptyBatchIsArgumentError) {
  Matrix logits(0, 3);
  std::vector<int> labels;
  EXPECT_THROW(cross_entropy(logits, labels), ArgumentError);
}

TEST(CrossEntropy, HugeLogitsStayFinite) {
  Matrix logits(1, 2);
  logits(0, 0) = 1e6;
  logits(0, 1) = -1e6;
  std::vector<int> labels{1};
  const double loss = cross_entropy(logits, labels);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 2e6, 1e-3);
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(3);
  Matrix logits(20, 7);
  for (double& v : logits.data) v = rng.uniform(-40.0, 40.0);
  const Matrix p = softmax(logits);
  for (std::size_t r = 0; r < p.rows; ++r) {
    double s = 0.0;
    for (double v : p.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Backward, MatchesCentralDifferencesOnRandomDraws) {
  const double h = 1e-4;
  double worst = 0.0;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    Rng rng(derive_seed(99, {draw}));
    const std::size_t in = 3 + rng.below(4);
    const std::size_t hidden = 2 + rng.below(5);
    const std::size_t out = 2 + rng.below(3);
    const ModelState m = make_mlp({in, hidden, out}, derive_seed(5, {draw}));
    auto batch = random_batch(1 + rng.below(6), in, static_cast<int>(out), rng);
    const ParamVector g = backward(m, batch);
    ParamVector theta = flatten(m);
    ASSERT_EQ(g.size(), theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      ParamVector plus = theta;
      ParamVector minus = theta;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (batch_loss(unflatten(plus, m.shape_signature()), batch) -
                         batch_loss(unflatten(minus, m.shape_signature()), batch)) /
                        (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
      worst = std::max(worst, std::abs(fd - g[i]) / denom);
    }
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(Backward, SaturatedMinimumHasTinyGradient) {
  ModelState m({2, 3});
  auto& L = m.layers()[0];
  L.bias = {0.0, 60.0, 0.0};
  std::vector<LabeledExample> batch{{{0.3, 0.4}, 1, false, 1}};
  EXPECT_LT(l2_norm(backward(m, batch)), 1e-6);
}

TEST(Backward, DuplicatedBatchGivesSameGradient) {
  const ModelState m = make_mlp({5, 4, 3}, 11);
  Rng rng(4);
  auto one = random_batch(1, 5, 3, rng);
  std::vector<LabeledExample> many(6, one[0]);
  const ParamVector g1 = backward(m, one);
  const ParamVector g6 = backward(m, many);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g6[i], 1e-12);
}

TEST(Backward, LossAndGradientAgreeWithSeparateCalls) {
  const ModelState m = make_mlp({5, 4, 3}, 12);
  Rng rng(8);
  auto batch = random_batch(4, 5, 3, rng);
  const LossAndGradient lg = loss_and_gradient(m, batch);
  EXPECT_DOUBLE_EQ(lg.loss, batch_loss(m, batch));
  EXPECT_EQ(lg.gradient, backward(m, batch));
}

TEST(Sgd, DescendAndAscendWithoutMomentum) {
  ModelState m = make_mlp({3, 2}, 2);
  const ParamVector theta = flatten(m);
  ParamVector g(theta.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.5 + static_cast<double>(i);

  ModelState down = m;
  auto opt = OptimizerState::for_model(down, 0.1, 0.0);
  sgd_step(down, g, opt, StepDirection::kDescend);
  ModelState up = m;
  auto opt2 = OptimizerState::for_model(up, 0.1, 0.0);
  sgd_step(up, g, opt2, StepDirection::kAscend);

  const ParamVector d = flatten(down);
  const ParamVector u = flatten(up);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(d[i], theta[i] - 0.1 * g[i], 1e-15);
    EXPECT_NEAR(u[i], theta[i] + 0.1 * g[i], 1e-15);
  }
}

TEST(Sgd, MomentumSecondStepIsOnePointNineTimes) {
  ModelState m({2, 2});
  const ParamVector g{1.0, -2.0, 0.5, 3.0, 0.25, -1.0};
  auto opt = OptimizerState::for_model(m, 0.1, 0.9);
  sgd_step(m, g, opt);
  const ParamVector after_one = flatten(m);
  sgd_step(m, g, opt);
  const ParamVector step_two = subtract(flatten(m), after_one);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(step_two[i], -0.1 * 1.9 * g[i], 1e-14);
}

TEST(Sgd, ZeroRateIsIdentity) {
  ModelState m = make_mlp({4, 3, 2}, 5);
  const ModelState before = m;
  ParamVector g(m.parameter_count(), 7.0);
  auto opt = OptimizerState::for_model(m, 0.0, 0.9);
  sgd_step(m, g, opt);
  sgd_step(m, g, opt, StepDirection::kAscend);
  EXPECT_EQ(m, before);
}

TEST(Sgd, NonFiniteGradientIsNumericError) {
  ModelState m({2, 2});
  ParamVector g(m.parameter_count(), 0.0);
  g[3] = std::nan("");
  auto opt = OptimizerState::for_model(m, 0.1, 0.0);
  EXPECT_THROW(sgd_step(m, g, opt), NumericError);
}

TEST(Flatten, RoundTripIsBitExact) {
  for (const auto& shape : std::vector<std::vector<std::size_t>>{{3, 2}, {100, 64, 8}, {7, 5, 4, 3}}) {
    const ModelState m = make_mlp(shape, 17);
    EXPECT_EQ(unflatten(flatten(m), shape), m);
  }
}

TEST(Flatten, ZeroModelIsZeroVector) {
  const ModelState m({5, 4, 3});
  const ParamVector v = flatten(m);
  EXPECT_EQ(v.size(), 5u * 4 + 4 + 4 * 3 + 3);
  for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(Flatten, ParameterCountOfReferenceMlp) {
  const std::vector<std::size_t> shape{64, 32, 10};
  // 64*32 + 32 + 32*10 + 10
  EXPECT_EQ(parameter_count(shape), 2410u);
  EXPECT_EQ(ModelState(shape).parameter_count(), 2410u);
}

TEST(Flatten, LengthMismatchIsConfigError) {
  const std::vector<std::size_t> shape{3, 2};
  EXPECT_THROW(unflatten(ParamVector(5), shape), ConfigError);
}

TEST(Flatten, ApplyDeltaAddsInFlattenOrder) {
  ModelState m = make_mlp({3, 2, 2}, 9);
  const ParamVector before = flatten(m);
  ParamVector delta(before.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = 0.01 * static_cast<double>(i);
  apply_delta(m, delta);
  EXPECT_EQ(flatten(m), add(before, delta));
}

TEST(Init, MakeMlpIsDeterministicAndFinite) {
  const ModelState a = make_mlp({10, 8, 4}, 123);
  const ModelState b = make_mlp({10, 8, 4}, 123);
  const ModelState c = make_mlp({10, 8, 4}, 124);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_TRUE(flatten(a).all_finite());
}
