#include "masafl/defenses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "masafl/error.hpp"

namespace masafl {
namespace {

constexpr std::array<std::pair<DefenseKind, std::string_view>, 6> kDefenseNames{{
    {DefenseKind::kFedAvg, "fedavg"},
    {DefenseKind::kFedAvgStar, "fedavg_star"},
    {DefenseKind::kMultiKrum, "multi_krum"},
    {DefenseKind::kRfa, "rfa"},
    {DefenseKind::kRlr, "rlr"},
    {DefenseKind::kMasa, "masa"},
}};

// Rules sum in client-id order, which makes every result bitwise
// independent of the order updates arrive in.
std::vector<const ClientUpdate*> sorted_by_id(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ArgumentError("aggregation needs at least one update");
  std::vector<const ClientUpdate*> out;
  out.reserve(updates.size());
  for (const auto& u : updates) {
    if (u.delta.size() != updates.front().delta.size()) {
      throw ArgumentError("updates differ in length");
    }
    out.push_back(&u);
  }
  std::sort(out.begin(), out.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
  return out;
}

ParamVector mean_of(const std::vector<const ClientUpdate*>& chosen) {
  std::vector<const ParamVector*> ptrs;
  ptrs.reserve(chosen.size());
  for (const auto* u : chosen) ptrs.push_back(&u->delta);
  return mean(std::span<const ParamVector* const>(ptrs));
}

std::vector<std::size_t> ids_of(const std::vector<const ClientUpdate*>& chosen) {
  std::vector<std::size_t> ids;
  ids.reserve(chosen.size());
  for (const auto* u : chosen) ids.push_back(u->client_id);
  return ids;
}

}  // namespace

std::string_view to_string(DefenseKind kind) {
  for (const auto& [k, name] : kDefenseNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

DefenseKind parse_defense_kind(std::string_view name) {
  for (const auto& [k, n] : kDefenseNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown defense '" + std::string(name) +
                    "' (expected fedavg|fedavg_star|multi_krum|rfa|rlr|masa)");
}

bool is_filtering(DefenseKind kind) {
  return kind == DefenseKind::kMasa || kind == DefenseKind::kMultiKrum || kind == DefenseKind::kFedAvgStar;
}

std::size_t default_krum_f(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(0.25 * static_cast<double>(n)));
}

AggregationOutcome fedavg(std::span<const ClientUpdate> updates) {
  const auto all = sorted_by_id(updates);
  AggregationOutcome out;
  out.global_update = mean_of(all);
  out.selected = ids_of(all);
  return out;
}

AggregationOutcome fedavg_star(std::span<const ClientUpdate> updates,
                               std::span<const std::size_t> malicious_ids) {
  const auto all = sorted_by_id(updates);
  std::vector<const ClientUpdate*> benign;
  AggregationOutcome out;
  for (const auto* u : all) {
    const bool bad = std::find(malicious_ids.begin(), malicious_ids.end(), u->client_id) != malicious_ids.end();
    if (bad) {
      out.diagnostics.excluded.push_back(u->client_id);
    } else {
      benign.push_back(u);
    }
  }
  if (benign.empty()) throw ArgumentError("fedavg_star: no benign updates to average");
  out.global_update = mean_of(benign);
  out.selected = ids_of(benign);
  return out;
}

AggregationOutcome multi_krum(std::span<const ClientUpdate> updates, std::size_t f, std::size_t m) {
  const auto all = sorted_by_id(updates);
  const std::size_t n = all.size();
  if (n < 2 * f + 3) {
    throw ConfigError("multi_krum requires n >= 2f + 3 (n=" + std::to_string(n) +
                      ", f=" + std::to_string(f) + ")");
  }
  if (m < 1 || m > n - f) {
    throw ConfigError("multi_krum requires 1 <= m <= n - f (m=" + std::to_string(m) + ")");
  }
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = squared_distance(all[i]->delta, all[j]->delta);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
  }
  const std::size_t neighbours = n - f - 2;
  std::vector<double> scores(n, 0.0);
  std::vector<double> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(dist[i * n + j]);
    }
    std::sort(row.begin(), row.end());
    scores[i] = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbours), 0.0);
  }
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<bool> keep(n, false);
  for (std::size_t k = 0; k < m; ++k) keep[rank[k]] = true;
  std::vector<const ClientUpdate*> chosen;
  AggregationOutcome out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) {
      chosen.push_back(all[i]);
    } else {
      out.diagnostics.excluded.push_back(all[i]->client_id);
    }
  }
  out.global_update = mean_of(chosen);
  out.selected = ids_of(chosen);
  out.diagnostics.scores = std::move(scores);
  return out;
}

double geometric_median_objective(std::span<const ClientUpdate> updates, const ParamVector& v) {
  double total = 0.0;
  for (const auto& u : updates) total += l2_distance(u.delta, v);
  return total;
}

AggregationOutcome rfa_geometric_median(std::span<const ClientUpdate> updates, const RfaParams& params) {
  const auto all = sorted_by_id(updates);
  ParamVector v = mean_of(all);
  const std::size_t d = v.size();
  AggregationOutcome out;
  auto objective = [&](const ParamVector& point) {
    double total = 0.0;
    for (const auto* u : all) total += l2_distance(u->delta, point);
    return total;
  };
  out.diagnostics.objective_trace.push_back(objective(v));
  std::size_t iters = 0;
  while (iters < params.max_iters) {
    ++iters;
    ParamVector next(d);
    double weight_sum = 0.0;
    for (const auto* u : all) {
      const double w = 1.0 / std::max(params.smoothing, l2_distance(u->delta, v));
      axpy_inplace(next, w, u->delta);
      weight_sum += w;
    }
    for (auto& x : next) x /= weight_sum;
    const double step = l2_distance(next, v);
    v = std::move(next);
    out.diagnostics.objective_trace.push_back(objective(v));
    if (step < params.tol) break;
  }
  out.diagnostics.iterations = iters;
  out.global_update = std::move(v);
  out.selected = ids_of(all);
  return out;
}

AggregationOutcome rlr(std::span<const ClientUpdate> updates, double sign_threshold, double server_lr) {
  if (!(sign_threshold >= 0.0)) throw ConfigError("rlr sign threshold must be >= 0");
  const auto all = sorted_by_id(updates);
  const ParamVector avg = mean_of(all);
  AggregationOutcome out;
  out.global_update = ParamVector(avg.size());
  for (std::size_t k = 0; k < avg.size(); ++k) {
    double sign_sum = 0.0;
    for (const auto* u : all) {
      const double x = u->delta[k];
      sign_sum += (x > 0.0) - (x < 0.0);
    }
    const double agreement = std::abs(sign_sum);
    const bool agree = agreement >= sign_threshold;
    if (!agree) ++out.diagnostics.flipped_coordinates;
    const double lr = agree ? server_lr : -server_lr;
    out.global_update[k] = lr * avg[k];
  }
  out.selected = ids_of(all);
  return out;
}

}  // namespace masafl
