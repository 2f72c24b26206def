#include "masafl/attacks.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "masafl/error.hpp"
#include "masafl/random.hpp"

namespace masafl {
namespace {

constexpr std::array<std::pair<AttackKind, std::string_view>, 7> kAttackNames{{
    {AttackKind::kNone, "none"},
    {AttackKind::kBadnet, "badnet"},
    {AttackKind::kDba, "dba"},
    {AttackKind::kScaling, "scaling"},
    {AttackKind::kPgd, "pgd"},
    {AttackKind::kNeurotoxin, "neurotoxin"},
    {AttackKind::kLie, "lie"},
}};

void project_into_ball(ModelState& model, const ParamVector& theta_global, double radius_factor) {
  const ParamVector projected = apply_pgd(flatten(model), theta_global, radius_factor);
  model = unflatten(projected, model.shape_signature());
}

}  // namespace

std::string_view to_string(AttackKind kind) {
  for (const auto& [k, name] : kAttackNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (const auto& [k, n] : kAttackNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown attack '" + std::string(name) +
                    "' (expected none|badnet|dba|scaling|pgd|neurotoxin|lie)");
}

void AttackSpec::validate() const {
  if (!(scale_factor > 0.0)) throw ConfigError("attack.scale_factor must be > 0");
  if (!(pgd_radius_factor > 0.0)) throw ConfigError("attack.pgd_radius_factor must be > 0");
  if (!(mask_percentile > 0.0 && mask_percentile < 1.0)) {
    throw ConfigError("attack.mask_percentile must lie in (0, 1)");
  }
  if (!(lie_z > 0.0)) throw ConfigError("attack.lie_z must be > 0");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train.lr_decay must lie in (0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
}

double TrainConfig::rate_at(std::size_t round) const {
  return learning_rate * std::pow(lr_decay, static_cast<double>(round));
}

std::optional<ParamVector> local_train(const ModelState& global, std::span<const LabeledExample> data,
                                       const TrainConfig& cfg, double learning_rate, std::uint64_t seed,
                                       const TrainHooks& hooks) {
  if (data.empty()) return std::nullopt;
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  const ParamVector theta_global = flatten(global);
  ModelState model = global;
  OptimizerState opt = OptimizerState::for_model(model, learning_rate, cfg.momentum);
  Rng rng(seed);
  std::vector<LabeledExample> batch;
  batch.reserve(cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = permutation(data.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t j = start; j < end; ++j) batch.push_back(data[order[j]]);
      ParamVector grad = backward(model, batch);
      if (hooks.gradient_mask != nullptr) {
        const auto& mask = *hooks.gradient_mask;
        for (std::size_t i = 0; i < grad.size(); ++i) {
          if (!mask[i]) grad[i] = 0.0;
        }
      }
      sgd_step(model, grad, opt, StepDirection::kDescend);
    }
    if (hooks.pgd_radius_factor) project_into_ball(model, theta_global, *hooks.pgd_radius_factor);
  }
  return subtract(flatten(model), theta_global);
}

std::optional<ParamVector> benign_local_train(const ModelState& global, const Dataset& shard,
                                              const TrainConfig& cfg, double learning_rate,
                                              std::uint64_t seed) {
  return local_train(global, shard.view(), cfg, learning_rate, seed);
}

std::optional<ParamVector> malicious_local_train(const ModelState& global, const Dataset& clean_part,
                                                 const Dataset& poisoned_part, const TrainConfig& cfg,
                                                 double learning_rate, std::uint64_t seed,
                                                 const TrainHooks& hooks) {
  if (poisoned_part.empty()) {
    return local_train(global, clean_part.view(), cfg, learning_rate, seed, hooks);
  }
  const Dataset pool = concat(clean_part, poisoned_part);
  return local_train(global, pool.view(), cfg, learning_rate, seed, hooks);
}

ParamVector apply_scaling(const ParamVector& update, double factor) {
  if (!(factor > 0.0)) throw ConfigError("scale factor must be > 0");
  return scale(update, factor);
}

ParamVector apply_pgd(const ParamVector& theta_mal, const ParamVector& theta_global, double radius_factor) {
  if (!(radius_factor > 0.0)) throw ConfigError("PGD radius factor must be > 0");
  const ParamVector v = subtract(theta_mal, theta_global);
  const double norm = l2_norm(v);
  const double radius = radius_factor * l2_norm(theta_global);
  if (norm == 0.0 || norm <= radius) return theta_mal;
  ParamVector out = theta_global;
  axpy_inplace(out, radius / norm, v);
  return out;
}

std::vector<bool> neurotoxin_mask(const ParamVector& prev_aggregate, double percentile) {
  if (!(percentile > 0.0 && percentile < 1.0)) {
    throw ConfigError("mask percentile must lie in (0, 1)");
  }
  const std::size_t d = prev_aggregate.size();
  std::vector<bool> mask(d, true);
  if (d == 0) return mask;
  std::vector<double> magnitude(d);
  for (std::size_t i = 0; i < d; ++i) magnitude[i] = std::abs(prev_aggregate[i]);
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(d))), 1, d);
  std::vector<double> sorted = magnitude;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep - 1), sorted.end());
  const double cutoff = sorted[keep - 1];
  for (std::size_t i = 0; i < d; ++i) mask[i] = magnitude[i] <= cutoff;
  return mask;
}

ParamVector neurotoxin_constrain(const ParamVector& grad, const ParamVector& prev_aggregate,
                                 double percentile) {
  if (grad.size() != prev_aggregate.size()) {
    throw ArgumentError("neurotoxin: gradient and previous aggregate differ in length");
  }
  const auto mask = neurotoxin_mask(prev_aggregate, percentile);
  ParamVector out = grad;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask[i]) out[i] = 0.0;
  }
  return out;
}

ParamVector lie_craft(std::span<const ParamVector> references, double z) {
  if (references.empty()) throw ArgumentError("lie_craft needs at least one reference update");
  const ParamVector mu = mean(references);
  const std::size_t d = mu.size();
  ParamVector sigma(d);
  for (const auto& r : references) {
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = r[i] - mu[i];
      sigma[i] += diff * diff;
    }
  }
  const auto n = static_cast<double>(references.size());
  ParamVector out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = mu[i] + z * std::sqrt(sigma[i] / n);
  return out;
}

TriggerSpec dba_subtrigger(const TriggerSpec& trigger, std::size_t part) {
  if (part > 3) throw ArgumentError("DBA part must be in 0..3, got " + std::to_string(part));
  if (trigger.pattern.size() < 4) throw ArgumentError("DBA needs a trigger with at least 4 pixels");
  std::size_t min_r = trigger.pattern.front().row;
  std::size_t max_r = min_r;
  std::size_t min_c = trigger.pattern.front().col;
  std::size_t max_c = min_c;
  for (const auto& px : trigger.pattern) {
    min_r = std::min(min_r, px.row);
    max_r = std::max(max_r, px.row);
    min_c = std::min(min_c, px.col);
    max_c = std::max(max_c, px.col);
  }
  // Twice the centre, to stay in integers for even-sized boxes.
  const std::size_t cr2 = min_r + max_r;
  const std::size_t cc2 = min_c + max_c;

  TriggerSpec out = trigger;
  out.pattern.clear();
  for (const auto& px : trigger.pattern) {
    const std::size_t r2 = 2 * px.row;
    const std::size_t c2 = 2 * px.col;
    std::size_t group;
    if (r2 < cr2) {
      group = 0;  // north
    } else if (c2 > cc2) {
      group = 1;  // east
    } else if (r2 > cr2) {
      group = 2;  // south
    } else if (c2 < cc2) {
      group = 3;  // west
    } else {
      group = 0;  // centre
    }
    if (group == part) out.pattern.push_back(px);
  }
  return out;
}

}  // namespace masafl
