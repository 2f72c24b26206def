#include "masafl/harness.hpp"

#include <algorithm>
#include <cmath>

#include "masafl/attacks.hpp"
#include "masafl/error.hpp"
#include "masafl/parallel.hpp"
#include "masafl/random.hpp"

namespace masafl {
namespace {

std::uint64_t stream_seed(std::uint64_t seed, Stream stream) {
  return derive_seed(seed, {static_cast<std::uint64_t>(stream)});
}

std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b = 0) {
  return derive_seed(seed, {static_cast<std::uint64_t>(stream), a, b});
}

double percent(std::size_t hits, std::size_t total) {
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

template <typename T, typename Fn>
std::optional<double> mean_where(const std::vector<T>& items, Fn&& pick) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& item : items) {
    if (auto v = pick(item)) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

}  // namespace

Accuracy evaluate(const ModelState& model, const Dataset& clean_test, const Dataset& triggered_test, int target) {
  if (clean_test.empty() || triggered_test.empty()) {
    throw ArgumentError("evaluate needs non-empty clean and triggered test sets");
  }
  Accuracy acc;
  const auto clean_pred = predict(model, clean_test.view());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < clean_pred.size(); ++i) {
    if (clean_pred[i] == clean_test.examples[i].label) ++correct;
  }
  acc.ma = percent(correct, clean_pred.size());

  const auto trig_pred = predict(model, triggered_test.view());
  std::size_t backdoor = 0;
  std::size_t robust = 0;
  for (std::size_t i = 0; i < trig_pred.size(); ++i) {
    if (trig_pred[i] == target) ++backdoor;
    if (trig_pred[i] == triggered_test.examples[i].original_label) ++robust;
  }
  acc.ba = percent(backdoor, trig_pred.size());
  acc.ra = percent(robust, trig_pred.size());
  return acc;
}

DetectionRates detection_metrics(std::span<const std::size_t> selected, std::span<const std::size_t> sampled,
                                 const std::set<std::size_t>& malicious) {
  const std::set<std::size_t> kept(selected.begin(), selected.end());
  std::size_t mal = 0;
  std::size_t mal_excluded = 0;
  std::size_t ben = 0;
  std::size_t ben_excluded = 0;
  for (std::size_t id : sampled) {
    const bool excluded = !kept.contains(id);
    if (malicious.contains(id)) {
      ++mal;
      if (excluded) ++mal_excluded;
    } else {
      ++ben;
      if (excluded) ++ben_excluded;
    }
  }
  DetectionRates out;
  if (mal > 0) out.tpr = percent(mal_excluded, mal);
  if (ben > 0) out.fpr = percent(ben_excluded, ben);
  return out;
}

std::vector<std::size_t> sample_clients(std::size_t n, std::size_t k, std::size_t round, std::uint64_t seed) {
  if (k > n) throw ConfigError("cannot sample more clients than exist");
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  if (k < n) {
    Rng rng(stream_seed(seed, Stream::kSampling, round));
    rng.shuffle(ids);
    ids.resize(k);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

Simulation::Simulation(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::uint64_t seed = cfg_.seed;
  const auto& ds = cfg_.dataset;
  if (ds.source == "synthetic") {
    SyntheticSpec spec;
    spec.classes = ds.classes;
    spec.shape = {ds.image_rows, ds.image_cols};
    spec.per_class = ds.train_per_class;
    train_ = gen_synthetic(spec, stream_seed(seed, Stream::kTrainData));
    spec.per_class = ds.test_per_class;
    test_ = gen_synthetic(spec, stream_seed(seed, Stream::kTestData));
  } else {
    train_ = load_idx(ds.train_images, ds.train_labels);
    test_ = load_idx(ds.test_images, ds.test_labels);
    if (test_.shape != train_.shape) throw ConfigError("IDX train and test image shapes differ");
    test_.classes = std::max(test_.classes, train_.classes);
    train_.classes = test_.classes;
  }
  if (cfg_.poison.target_label >= train_.classes) {
    throw ConfigError("'poison.target_label' must be < number of classes");
  }

  // The server's proxy examples never reach a client.
  ProxySplit split = split_proxy(train_, cfg_.proxy.fraction, stream_seed(seed, Stream::kProxy), cfg_.proxy.shifted);
  proxy_ = std::move(split.proxy);
  if (proxy_.empty() && cfg_.defense.rule == DefenseKind::kMasa) {
    throw ConfigError("proxy set is empty; raise 'proxy.fraction'");
  }
  const Dataset& pool = split.rest;

  const auto& fed = cfg_.federation;
  std::vector<Dataset> shards = fed.distribution == Distribution::kIid
                                    ? partition_iid(pool, fed.n_clients, stream_seed(seed, Stream::kPartition))
                                    : partition_dirichlet(pool, fed.n_clients, fed.dirichlet_alpha,
                                                          stream_seed(seed, Stream::kPartition));

  Rng role_rng(stream_seed(seed, Stream::kRoles));
  const auto order = permutation(fed.n_clients, role_rng);
  for (std::size_t i = 0; i < cfg_.malicious_count(); ++i) malicious_.insert(order[i]);

  clients_.resize(fed.n_clients);
  std::size_t malicious_rank = 0;
  for (std::size_t id = 0; id < fed.n_clients; ++id) {
    ClientState& c = clients_[id];
    c.id = id;
    c.malicious = malicious_.contains(id);
    if (!c.malicious) {
      c.poisoned = Dataset{{}, shards[id].classes, shards[id].shape};
      c.clean = std::move(shards[id]);
      continue;
    }
    PoisonSpec spec = cfg_.poison;
    if (cfg_.attack.kind == AttackKind::kDba) spec.trigger = dba_subtrigger(cfg_.poison.trigger, malicious_rank % 4);
    ++malicious_rank;
    auto split = poison_shard(shards[id], spec, stream_seed(seed, Stream::kPoison, id));
    c.clean = std::move(split.clean);
    c.poisoned = std::move(split.poisoned);
  }

  triggered_test_ = triggered_test_set(test_, cfg_.poison.trigger, cfg_.poison.target_label);

  global_ = make_mlp({train_.shape.pixels(), cfg_.hidden_units, static_cast<std::size_t>(train_.classes)},
                     stream_seed(seed, Stream::kModelInit));
  prev_aggregate_ = ParamVector(global_.parameter_count());
}

std::vector<ClientUpdate> Simulation::train_clients(std::span<const std::size_t> sampled, double lr) const {
  const AttackSpec& attack = cfg_.attack;
  std::vector<bool> mask;
  if (attack.kind == AttackKind::kNeurotoxin) mask = neurotoxin_mask(prev_aggregate_, attack.mask_percentile);

  std::vector<std::optional<ParamVector>> slots(sampled.size());
  parallel_for(sampled.size(), cfg_.threads, [&](std::size_t i) {
    const ClientState& c = clients_[sampled[i]];
    const std::uint64_t seed = stream_seed(cfg_.seed, Stream::kLocalTrain, round_, c.id);
    if (!c.malicious) {
      slots[i] = benign_local_train(global_, c.clean, cfg_.train, lr, seed);
      return;
    }
    TrainHooks hooks;
    if (attack.kind == AttackKind::kNeurotoxin) hooks.gradient_mask = &mask;
    if (attack.kind == AttackKind::kPgd) hooks.pgd_radius_factor = attack.pgd_radius_factor;
    auto delta = malicious_local_train(global_, c.clean, c.poisoned, cfg_.train, lr, seed, hooks);
    if (delta && attack.kind == AttackKind::kScaling) delta = apply_scaling(*delta, attack.scale_factor);
    slots[i] = std::move(delta);
  });

  std::vector<ClientUpdate> updates;
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    if (slots[i]) updates.push_back({sampled[i], std::move(*slots[i])});
  }

  if (attack.kind == AttackKind::kLie) {
    std::vector<ParamVector> references;
    for (const auto& u : updates) {
      if (malicious_.contains(u.client_id)) references.push_back(u.delta);
    }
    if (!references.empty()) {
      const ParamVector crafted = lie_craft(references, attack.lie_z);
      for (auto& u : updates) {
        if (malicious_.contains(u.client_id)) u.delta = crafted;
      }
    }
  }
  return updates;
}

RoundReport Simulation::run_round() {
  const auto& fed = cfg_.federation;
  RoundReport report;
  report.round = round_ + 1;
  report.sampled = sample_clients(fed.n_clients, fed.clients_per_round, round_, cfg_.seed);
  for (std::size_t id : report.sampled) {
    if (malicious_.contains(id)) report.malicious_sampled.push_back(id);
  }

  const double lr = cfg_.train.rate_at(round_);
  const std::vector<ClientUpdate> updates = train_clients(report.sampled, lr);

  std::vector<std::size_t> received;
  for (const auto& u : updates) received.push_back(u.client_id);

  if (!updates.empty()) {
    const auto& def = cfg_.defense;
    const std::size_t n = updates.size();
    AggregationOutcome outcome;
    switch (def.rule) {
      case DefenseKind::kFedAvg:
        outcome = fedavg(updates);
        break;
      case DefenseKind::kFedAvgStar: {
        const std::vector<std::size_t> bad(report.malicious_sampled.begin(), report.malicious_sampled.end());
        if (bad.size() == n) {
          // Nothing benign arrived; the oracle refuses to aggregate this round.
          outcome.global_update = ParamVector(global_.parameter_count());
          outcome.diagnostics.excluded = received;
        } else {
          outcome = fedavg_star(updates, bad);
        }
        break;
      }
      case DefenseKind::kMultiKrum: {
        const std::size_t f = def.krum_f.value_or(default_krum_f(n));
        const std::size_t m = def.krum_m.value_or(n > f ? n - f : 1);
        outcome = multi_krum(updates, f, m);
        break;
      }
      case DefenseKind::kRfa:
        outcome = rfa_geometric_median(updates, def.rfa);
        break;
      case DefenseKind::kRlr: {
        const double threshold = def.rlr_threshold.value_or(static_cast<double>(default_krum_f(n) + 1));
        outcome = rlr(updates, threshold, def.rlr_server_lr);
        break;
      }
      case DefenseKind::kMasa: {
        const std::uint64_t seed = stream_seed(cfg_.seed, Stream::kUnlearn, round_);
        MasaOutcome masa = masa_aggregate(updates, global_, proxy_, def.masa, seed, cfg_.threads);
        const auto& traces = masa.diagnostics.traces;
        const std::set<std::size_t> kept(masa.aggregation.selected.begin(), masa.aggregation.selected.end());
        for (std::size_t i = 0; i < traces.size(); ++i) {
          ClientUnlearningRecord rec;
          rec.client_id = traces[i].client_id;
          rec.malicious = malicious_.contains(rec.client_id);
          rec.accumulated_loss = traces[i].accumulated_loss;
          rec.score = masa.diagnostics.mds.scores[i];
          rec.selected = kept.contains(rec.client_id);
          report.unlearning.push_back(rec);
        }
        report.mds_median = masa.diagnostics.mds.median;
        report.mds_sigma = masa.diagnostics.mds.sigma;
        report.fallback_used = masa.diagnostics.fallback_used;
        report.cap_events = masa.diagnostics.cap_events;
        outcome = std::move(masa.aggregation);
        break;
      }
    }
    if (!outcome.global_update.all_finite()) {
      throw NumericError("round " + std::to_string(report.round) + ": aggregated update is not finite");
    }
    apply_delta(global_, outcome.global_update);
    report.global_update_norm = l2_norm(outcome.global_update);
    report.selected = outcome.selected;
    prev_aggregate_ = std::move(outcome.global_update);
  }

  if (is_filtering(cfg_.defense.rule)) {
    const DetectionRates rates = detection_metrics(report.selected, received, malicious_);
    report.tpr = rates.tpr;
    report.fpr = rates.fpr;
  }

  const Accuracy acc = evaluate(global_, test_, triggered_test_, cfg_.poison.target_label);
  report.ma = acc.ma;
  report.ba = acc.ba;
  report.ra = acc.ra;
  ++round_;
  return report;
}

ExperimentSummary summarize(const std::vector<RoundReport>& rounds, std::size_t warmup_rounds) {
  ExperimentSummary s;
  if (rounds.empty()) return s;
  const std::size_t t = rounds.size();
  s.window_rounds = std::max<std::size_t>(1, (t + 3) / 4);
  const std::size_t first = t - s.window_rounds;
  for (std::size_t i = first; i < t; ++i) {
    s.ma += rounds[i].ma;
    s.ba += rounds[i].ba;
    s.ra += rounds[i].ra;
  }
  const auto w = static_cast<double>(s.window_rounds);
  s.ma /= w;
  s.ba /= w;
  s.ra /= w;
  s.final_ma = rounds.back().ma;
  s.final_ba = rounds.back().ba;
  s.final_ra = rounds.back().ra;
  s.tpr_all = mean_where(rounds, [](const RoundReport& r) { return r.tpr; });
  s.fpr_all = mean_where(rounds, [](const RoundReport& r) { return r.fpr; });
  auto post = [&](auto field) {
    return [warmup_rounds, field](const RoundReport& r) -> std::optional<double> {
      if (r.round < warmup_rounds) return std::nullopt;
      return r.*field;
    };
  };
  s.tpr_post_warmup = mean_where(rounds, post(&RoundReport::tpr));
  s.fpr_post_warmup = mean_where(rounds, post(&RoundReport::fpr));
  return s;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  Simulation sim(cfg);
  ExperimentReport report;
  report.config = sim.config();
  report.rounds.reserve(cfg.federation.rounds);
  for (std::size_t t = 0; t < cfg.federation.rounds; ++t) report.rounds.push_back(sim.run_round());
  report.summary = summarize(report.rounds, cfg.warmup_rounds());
  return report;
}

}  // namespace masafl
