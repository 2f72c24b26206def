#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "masafl/random.hpp"

using namespace masafl;

TEST(DeriveSeed, StableAndKeySensitive) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  EXPECT_NE(derive_seed(1, {}), derive_seed(1, {0}));
}

TEST(DeriveSeed, NoCollisionsOverSmallGrid) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b)
      for (std::uint64_t c = 1; c <= 10; ++c) seen.insert(derive_seed(7, {c, a, b}));
  EXPECT_EQ(seen.size(), 4000u);
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(5);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.01);
}

TEST(Rng, BelowCoversRangeUniformly) {
  Rng rng(6);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, NormalMoments) {
  Rng rng(8);
  const int n = 200000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, GammaMeanMatchesShape) {
  for (double shape : {0.1, 0.5, 1.0, 3.0}) {
    Rng rng(9);
    double s = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += rng.gamma(shape);
    EXPECT_NEAR(s / n, shape, 0.03 * std::max(shape, 1.0)) << "shape " << shape;
  }
}

TEST(Rng, DirichletOnSimplex) {
  Rng rng(10);
  for (double alpha : {0.1, 1.0, 100.0}) {
    const auto p = rng.dirichlet(8, alpha);
    ASSERT_EQ(p.size(), 8u);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(77);
  Rng b(77);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Permutation, IsABijection) {
  Rng rng(11);
  auto p = permutation(50, rng);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(p[i], i);
}
