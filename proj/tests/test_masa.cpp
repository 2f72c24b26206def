#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "masafl/attacks.hpp"
#include "masafl/data.hpp"
#include "masafl/error.hpp"
#include "masafl/masa.hpp"
#include "masafl/random.hpp"

using namespace masafl;

namespace {

// Scores from first principles: lower-middle order statistic, population
// deviation about the mean.
std::vector<double> brute_force_mds(const std::vector<double>& a) {
  const std::size_t n = a.size();
  std::vector<double> s = a;
  std::sort(s.begin(), s.end());
  const double med = s[(n - 1) / 2];
  double mu = 0.0;
  for (double v : a) mu += v;
  mu /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : a) ss += (v - mu) * (v - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(n));
  std::vector<double> c(n, 0.0);
  if (sigma > 0.0)
    for (std::size_t i = 0; i < n; ++i) c[i] = (a[i] - med) / sigma;
  return c;
}

struct World {
  Dataset pool = gen_synthetic(8, 60, {10, 10}, 31);
  ProxySplit split = split_proxy(pool, 0.05, 32);
  ModelState global = make_mlp({100, 32, 8}, 33);

  Dataset shard(std::size_t i, std::size_t n) const {
    return partition_iid(split.rest, n, 34)[i];
  }
};

}  // namespace

TEST(MasaConfig, ValidatesFusionDegree) {
  MasaConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.fusion_degree = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.fusion_degree = 0.4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.fusion_degree = 1.0;
  EXPECT_NO_THROW(cfg.validate());
  cfg.filter_radius = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Fuse, HandArithmetic) {
  const ModelState prev({1, 1});  // two parameters: weight, bias
  const ModelState out = fuse(prev, {1.0, 0.0}, {0.0, 1.0}, 0.7);
  const ParamVector v = flatten(out);
  EXPECT_NEAR(v[0], 0.7, 1e-15);
  EXPECT_NEAR(v[1], 0.3, 1e-15);
}

TEST(Fuse, DisabledAndIdenticalCasesAreExact) {
  const ModelState prev = make_mlp({4, 3, 2}, 1);
  Rng rng(2);
  ParamVector own(prev.parameter_count()), other(prev.parameter_count());
  for (std::size_t i = 0; i < own.size(); ++i) {
    own[i] = rng.normal();
    other[i] = rng.normal();
  }
  const ParamVector expected = add(flatten(prev), own);
  EXPECT_EQ(flatten(fuse(prev, own, other, 1.0)), expected);
  for (double lambda : {0.51, 0.7, 0.9, 1.0}) EXPECT_EQ(flatten(fuse(prev, own, own, lambda)), expected);
  EXPECT_THROW(fuse(prev, own, other, 0.3), ConfigError);
}

TEST(Unlearn, CountsBatchesAndLeavesInputAlone) {
  World w;
  MasaConfig cfg;
  cfg.batch_size = 3;
  const ModelState before = w.global;
  const auto trace = unlearn_and_accumulate(w.global, w.split.proxy, cfg, 5);
  const std::size_t batches = (w.split.proxy.size() + 2) / 3;
  EXPECT_EQ(trace.per_batch_losses.size(), cfg.unlearn_epochs * batches);
  EXPECT_NEAR(trace.accumulated_loss,
              std::accumulate(trace.per_batch_losses.begin(), trace.per_batch_losses.end(), 0.0), 1e-12);
  EXPECT_EQ(w.global, before);
}

TEST(Unlearn, ZeroRateRepeatsInitialLosses) {
  World w;
  MasaConfig cfg;
  cfg.unlearn_rate = 0.0;
  const auto trace = unlearn_and_accumulate(w.global, w.split.proxy, cfg, 6);
  const double full = cross_entropy(forward(w.global, w.split.proxy.view()), labels_of(w.split.proxy.view()));
  ASSERT_EQ(trace.per_batch_losses.size(), cfg.unlearn_epochs);  // one batch covers the proxy
  for (double l : trace.per_batch_losses) EXPECT_NEAR(l, full, 1e-12);
}

TEST(Unlearn, AscentIncreasesLossAndRecordsBeforeStep) {
  World w;
  MasaConfig cfg;
  cfg.unlearn_rate = 0.05;
  const auto trace = unlearn_and_accumulate(w.global, w.split.proxy, cfg, 7);
  const double initial = cross_entropy(forward(w.global, w.split.proxy.view()), labels_of(w.split.proxy.view()));
  EXPECT_NEAR(trace.per_batch_losses.front(), initial, 1e-12);
  for (std::size_t i = 1; i < trace.per_batch_losses.size(); ++i)
    EXPECT_GT(trace.per_batch_losses[i], trace.per_batch_losses[i - 1]);
}

TEST(Unlearn, CapBoundsEveryBatch) {
  World w;
  MasaConfig cfg;
  cfg.unlearn_rate = 50.0;
  cfg.loss_cap = 3.0;
  cfg.unlearn_epochs = 20;
  const auto trace = unlearn_and_accumulate(w.global, w.split.proxy, cfg, 8);
  for (double l : trace.per_batch_losses) EXPECT_LE(l, 3.0);
  EXPECT_GT(trace.cap_events + trace.nonfinite_events, 0u);
  EXPECT_TRUE(std::isfinite(trace.accumulated_loss));
}

TEST(Unlearn, EmptyProxyIsArgumentError) {
  World w;
  Dataset empty{{}, 8, {10, 10}};
  EXPECT_THROW(unlearn_and_accumulate(w.global, empty, MasaConfig{}, 1), ArgumentError);
}

TEST(Mds, ReferenceValues) {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 100.0};
  const MdsResult r = mds(a);
  EXPECT_EQ(r.median, 3.0);
  // sum of (a - 22)^2 = 441 + 400 + 361 + 324 + 6084 = 7610
  EXPECT_NEAR(r.sigma, std::sqrt(1522.0), 1e-12);
  const std::vector<double> expected{-0.05127, -0.02563, 0.0, 0.02563, 2.48636};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.scores[i], expected[i], 5e-5);
  EXPECT_EQ(filter_scores(r.scores, 1.0), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Mds, AllEqualGivesZerosAndEveryonePasses) {
  const std::vector<double> a(6, 4.2);
  const MdsResult r = mds(a);
  EXPECT_EQ(r.sigma, 0.0);
  for (double c : r.scores) EXPECT_EQ(c, 0.0);
  EXPECT_EQ(filter_scores(r.scores, 1.0).size(), 6u);
}

TEST(Mds, EvenCountUsesLowerMiddle) {
  const std::vector<double> a{4.0, 1.0, 3.0, 2.0};
  const MdsResult r = mds(a);
  EXPECT_EQ(r.median, 2.0);
  EXPECT_EQ(r.scores[3], 0.0);
}

TEST(Mds, MatchesBruteForceOnRandomInputs) {
  Rng rng(9);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<double> a(n);
    for (double& v : a) v = rng.uniform(0.0, 50.0);
    if (rng.below(10) == 0) a.assign(n, a[0]);
    const auto got = mds(a).scores;
    const auto want = brute_force_mds(a);
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Mds, TranslationInvariantScaleEquivariantOrderPreserving) {
  Rng rng(10);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> a(n);
    for (double& v : a) v = rng.uniform(0.0, 10.0);
    const MdsResult base = mds(a);
    std::vector<double> shifted = a;
    for (double& v : shifted) v += 123.0;
    const MdsResult s = mds(shifted);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(s.scores[i], base.scores[i], 1e-9);
    // Stretching deviations from the median by k stretches sigma by k too.
    std::vector<double> stretched = a;
    for (double& v : stretched) v = base.median + 3.0 * (v - base.median);
    const MdsResult st = mds(stretched);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(st.scores[i], base.scores[i], 1e-9);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (a[i] < a[j]) {
          EXPECT_LE(base.scores[i], base.scores[j]);
        }
    if (base.sigma > 0.0) {
      const auto it = std::find(a.begin(), a.end(), base.median);
      EXPECT_EQ(base.scores[static_cast<std::size_t>(it - a.begin())], 0.0);
    }
  }
}

TEST(Filter, StrictAndMonotoneInRadius) {
  const std::vector<double> c{-1.0, 0.0, 0.5, 1.0, 2.0};
  EXPECT_EQ(filter_scores(c, 1.0), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(filter_scores(c, 1e9).size(), 5u);
  EXPECT_THROW(filter_scores(c, 0.0), ConfigError);
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(10);
    for (double& v : s) v = rng.uniform(-3.0, 3.0);
    const double d1 = rng.uniform(0.01, 2.0);
    const double d2 = d1 + rng.uniform(0.0, 2.0);
    const auto a = filter_scores(s, d1);
    const auto b = filter_scores(s, d2);
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST(MasaAggregate, SingleClientPassesThrough) {
  World w;
  ParamVector u(w.global.parameter_count(), 0.01);
  const std::vector<ClientUpdate> updates{{4, u}};
  const auto out = masa_aggregate(updates, w.global, w.split.proxy, MasaConfig{}, 1);
  EXPECT_EQ(out.aggregation.selected, (std::vector<std::size_t>{4}));
  EXPECT_EQ(out.aggregation.global_update, u);
}

TEST(MasaAggregate, AggregatesRawUpdatesOfSelected) {
  World w;
  Rng rng(12);
  std::vector<ClientUpdate> updates;
  for (std::size_t i = 0; i < 8; ++i) {
    ParamVector u(w.global.parameter_count());
    for (double& x : u) x = 0.01 * rng.normal();
    updates.push_back({i, u});
  }
  // One wildly destructive update to make sure someone is filtered.
  for (double& x : updates[3].delta) x *= 400.0;
  const auto out = masa_aggregate(updates, w.global, w.split.proxy, MasaConfig{}, 2);
  const auto& sel = out.aggregation.selected;
  ASSERT_FALSE(sel.empty());
  std::vector<ParamVector> chosen;
  for (std::size_t id : sel) chosen.push_back(updates[id].delta);
  EXPECT_EQ(out.aggregation.global_update, mean(chosen));
  EXPECT_EQ(out.diagnostics.traces.size(), 8u);
  EXPECT_EQ(out.aggregation.diagnostics.scores, out.diagnostics.mds.scores);
  EXPECT_EQ(sel.size() + out.aggregation.diagnostics.excluded.size(), 8u);
}

TEST(MasaAggregate, FallbackKeepsArgmin) {
  World w;
  std::vector<ClientUpdate> updates;
  for (std::size_t i = 0; i < 4; ++i) {
    ParamVector u(w.global.parameter_count(), 0.001 * static_cast<double>(i + 1));
    updates.push_back({i, u});
  }
  MasaConfig cfg;
  cfg.filter_radius = 1e-12;
  const auto out = masa_aggregate(updates, w.global, w.split.proxy, cfg, 3);
  const auto& s = out.diagnostics.mds.scores;
  if (std::none_of(s.begin(), s.end(), [](double c) { return c < 1e-12; })) {
    EXPECT_TRUE(out.diagnostics.fallback_used);
    ASSERT_EQ(out.aggregation.selected.size(), 1u);
    const auto argmin = static_cast<std::size_t>(std::min_element(s.begin(), s.end()) - s.begin());
    EXPECT_EQ(out.aggregation.selected[0], argmin);
  } else {
    EXPECT_FALSE(out.diagnostics.fallback_used);
  }
}

TEST(MasaAggregate, DeterministicAcrossOrderAndThreads) {
  World w;
  Rng rng(13);
  std::vector<ClientUpdate> updates;
  for (std::size_t i = 0; i < 6; ++i) {
    ParamVector u(w.global.parameter_count());
    for (double& x : u) x = 0.05 * rng.normal();
    updates.push_back({10 + i, u});
  }
  const auto a = masa_aggregate(updates, w.global, w.split.proxy, MasaConfig{}, 4, 1);
  std::reverse(updates.begin(), updates.end());
  const auto b = masa_aggregate(updates, w.global, w.split.proxy, MasaConfig{}, 4, 4);
  EXPECT_EQ(a.aggregation.selected, b.aggregation.selected);
  EXPECT_EQ(a.aggregation.global_update, b.aggregation.global_update);
  EXPECT_EQ(a.diagnostics.mds.scores, b.diagnostics.mds.scores);
}

TEST(MasaAggregate, IdenticalBenignShardsKeepNearlyEveryone) {
  // Same shard and same training stream: every update coincides.
  World w;
  const Dataset shard = w.shard(0, 20);
  int good = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = benign_local_train(w.global, shard, TrainConfig{}, 0.1, derive_seed(seed, {1}));
    std::vector<ClientUpdate> updates;
    for (std::size_t i = 0; i < 20; ++i) updates.push_back({i, *d});
    const auto out = masa_aggregate(updates, w.global, w.split.proxy, MasaConfig{}, seed);
    if (out.aggregation.selected.size() >= 19) ++good;
  }
  EXPECT_GE(good, 9);
}

TEST(MasaAggregate, BackdooredModelsUnlearnFaster) {
  // Shared warm start, then per trial a benign and a backdoored update on the
  // same shard. Scored without fusion.
  Dataset base = gen_synthetic(8, 200, {10, 10}, 41);
  ProxySplit split = split_proxy(base, 0.01, 42);
  ModelState global = make_mlp({100, 64, 8}, 43);
  TrainConfig warm;
  warm.epochs = 10;
  apply_delta(global, *local_train(global, split.rest.view(), warm, 0.1, 44));

  MasaConfig cfg;
  int wins = 0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    const auto shards = partition_iid(split.rest, 20, derive_seed(45, {static_cast<std::uint64_t>(t)}));
    const Dataset& shard = shards[0];
    const auto poisoned = poison_shard(shard, PoisonSpec{}, derive_seed(46, {static_cast<std::uint64_t>(t)}));
    const std::uint64_t s = derive_seed(47, {static_cast<std::uint64_t>(t)});
    const auto clean = benign_local_train(global, shard, TrainConfig{}, 0.1, s);
    const auto bad = malicious_local_train(global, poisoned.clean, poisoned.poisoned, TrainConfig{}, 0.1, s);
    ModelState mc = global, mb = global;
    apply_delta(mc, *clean);
    apply_delta(mb, *bad);
    const double a_clean = unlearn_and_accumulate(mc, split.proxy, cfg, 48).accumulated_loss;
    const double a_bad = unlearn_and_accumulate(mb, split.proxy, cfg, 48).accumulated_loss;
    wins += a_bad > a_clean ? 1 : 0;
  }
  EXPECT_GE(wins, 38);
}
