#include "masafl/masa.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "masafl/error.hpp"
#include "masafl/parallel.hpp"
#include "masafl/random.hpp"

namespace masafl {

void MasaConfig::validate() const {
  if (!(fusion_degree > 0.5 && fusion_degree <= 1.0)) {
    throw ConfigError("masa.fusion_degree must lie in (0.5, 1], got " + std::to_string(fusion_degree));
  }
  if (!(filter_radius > 0.0)) throw ConfigError("masa.filter_radius must be > 0");
  if (unlearn_epochs == 0) throw ConfigError("masa.unlearn_epochs must be >= 1");
  if (!(unlearn_rate >= 0.0)) throw ConfigError("masa.unlearn_rate must be >= 0");
  if (!(unlearn_momentum >= 0.0 && unlearn_momentum < 1.0)) {
    throw ConfigError("masa.unlearn_momentum must lie in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("masa.batch_size must be positive");
  if (!(loss_cap > 0.0)) throw ConfigError("masa.loss_cap must be > 0");
}

ModelState fuse(const ModelState& theta_prev, const ParamVector& own_update, const ParamVector& mean_update,
                double fusion_degree) {
  if (!(fusion_degree > 0.5 && fusion_degree <= 1.0)) {
    throw ConfigError("fusion degree must lie in (0.5, 1], got " + std::to_string(fusion_degree));
  }
  if (own_update.size() != mean_update.size() || own_update.size() != theta_prev.parameter_count()) {
    throw ConfigError("fuse: update lengths do not match the model");
  }
  ModelState fused = theta_prev;
  if (fusion_degree == 1.0) {
    apply_delta(fused, own_update);
    return fused;
  }
  // mean + lambda * (own - mean): identical updates fuse to exactly that update.
  ParamVector blended(own_update.size());
  for (std::size_t i = 0; i < blended.size(); ++i) {
    blended[i] = mean_update[i] + fusion_degree * (own_update[i] - mean_update[i]);
  }
  apply_delta(fused, blended);
  return fused;
}

UnlearningTrace unlearn_and_accumulate(const ModelState& fused, const Dataset& proxy, const MasaConfig& cfg,
                                       std::uint64_t seed) {
  if (proxy.empty()) throw ArgumentError("unlearning needs a non-empty proxy set");
  if (cfg.batch_size == 0) throw ConfigError("masa.batch_size must be positive");
  ModelState model = fused;
  OptimizerState opt = OptimizerState::for_model(model, cfg.unlearn_rate, cfg.unlearn_momentum);
  Rng rng(seed);
  UnlearningTrace trace;
  bool diverged = false;
  std::vector<LabeledExample> batch;
  for (std::size_t epoch = 0; epoch < cfg.unlearn_epochs; ++epoch) {
    const auto order = permutation(proxy.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (diverged) {
        trace.per_batch_losses.push_back(cfg.loss_cap);
        ++trace.nonfinite_events;
        continue;
      }
      batch.clear();
      for (std::size_t j = start; j < end; ++j) batch.push_back(proxy.examples[order[j]]);
      LossAndGradient lg = loss_and_gradient(model, batch);
      double loss = lg.loss;
      if (!std::isfinite(loss)) {
        loss = cfg.loss_cap;
        ++trace.nonfinite_events;
        diverged = true;
      } else if (loss > cfg.loss_cap) {
        loss = cfg.loss_cap;
        ++trace.cap_events;
      }
      trace.per_batch_losses.push_back(loss);
      if (diverged) continue;
      if (!lg.gradient.all_finite()) {
        diverged = true;
        continue;
      }
      sgd_step(model, lg.gradient, opt, StepDirection::kAscend);
    }
  }
  for (double l : trace.per_batch_losses) trace.accumulated_loss += l;
  return trace;
}

MdsResult mds(std::span<const double> values) {
  MdsResult out;
  const std::size_t n = values.size();
  out.scores.assign(n, 0.0);
  if (n == 0) return out;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  out.median = sorted[(n - 1) / 2];
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  out.sigma = std::sqrt(var / static_cast<double>(n));
  if (out.sigma > 0.0) {
    for (std::size_t i = 0; i < n; ++i) out.scores[i] = (values[i] - out.median) / out.sigma;
  }
  return out;
}

std::vector<std::size_t> filter_scores(std::span<const double> scores, double radius) {
  if (!(radius > 0.0)) throw ConfigError("filter radius must be > 0");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] < radius) kept.push_back(i);
  }
  return kept;
}

MasaOutcome masa_aggregate(std::span<const ClientUpdate> updates, const ModelState& theta_prev,
                           const Dataset& proxy, const MasaConfig& cfg, std::uint64_t seed,
                           std::size_t threads) {
  cfg.validate();
  if (updates.empty()) throw ArgumentError("masa_aggregate needs at least one update");
  std::vector<const ClientUpdate*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  const std::size_t n = sorted.size();

  std::vector<const ParamVector*> deltas;
  for (const auto* u : sorted) deltas.push_back(&u->delta);
  const ParamVector mean_update = mean(std::span<const ParamVector* const>(deltas));

  // Every client is unlearned on the same minibatch sequence.
  const std::uint64_t unlearn_seed = derive_seed(seed, {static_cast<std::uint64_t>(Stream::kUnlearn)});
  MasaOutcome out;
  auto& diag = out.diagnostics;
  diag.traces.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const ModelState fused = fuse(theta_prev, sorted[i]->delta, mean_update, cfg.fusion_degree);
    UnlearningTrace trace = unlearn_and_accumulate(fused, proxy, cfg, unlearn_seed);
    trace.client_id = sorted[i]->client_id;
    diag.traces[i] = std::move(trace);
  });

  std::vector<double> accumulated(n);
  for (std::size_t i = 0; i < n; ++i) {
    accumulated[i] = diag.traces[i].accumulated_loss;
    diag.cap_events += diag.traces[i].cap_events;
  }
  diag.mds = mds(accumulated);
  std::vector<std::size_t> kept = filter_scores(diag.mds.scores, cfg.filter_radius);
  if (kept.empty()) {
    diag.fallback_used = true;
    const auto& s = diag.mds.scores;
    kept.push_back(static_cast<std::size_t>(std::min_element(s.begin(), s.end()) - s.begin()));
  }

  std::vector<bool> keep(n, false);
  for (std::size_t i : kept) keep[i] = true;
  std::vector<const ParamVector*> chosen;
  auto& agg = out.aggregation;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) {
      chosen.push_back(&sorted[i]->delta);
      agg.selected.push_back(sorted[i]->client_id);
    } else {
      agg.diagnostics.excluded.push_back(sorted[i]->client_id);
    }
  }
  agg.global_update = mean(std::span<const ParamVector* const>(chosen));
  agg.diagnostics.scores = diag.mds.scores;
  return out;
}

}  // namespace masafl
