#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "masafl/param_vector.hpp"

namespace masafl {

struct ClientUpdate {
  std::size_t client_id = 0;
  ParamVector delta;
};

struct AggregationDiagnostics {
  // Per received update, in ascending client-id order (Krum scores, ...).
  std::vector<double> scores;
  std::vector<std::size_t> excluded;
  std::size_t iterations = 0;
  std::size_t flipped_coordinates = 0;  // RLR
  std::vector<double> objective_trace;  // RFA objective after each iterate
};

struct AggregationOutcome {
  ParamVector global_update;
  // Client ids whose updates entered the aggregate, ascending.
  std::vector<std::size_t> selected;
  AggregationDiagnostics diagnostics;
};

enum class DefenseKind { kFedAvg, kFedAvgStar, kMultiKrum, kRfa, kRlr, kMasa };

std::string_view to_string(DefenseKind kind);
DefenseKind parse_defense_kind(std::string_view name);
// Rules that drop updates and therefore get TPR/FPR bookkeeping.
bool is_filtering(DefenseKind kind);

AggregationOutcome fedavg(std::span<const ClientUpdate> updates);

// Simulator-only oracle: averages the updates of clients not in `malicious_ids`.
AggregationOutcome fedavg_star(std::span<const ClientUpdate> updates,
                               std::span<const std::size_t> malicious_ids);

// score(i) = sum of squared distances to the n - f - 2 nearest other updates;
// the m lowest scores are averaged. Requires n >= 2f + 3 and 1 <= m <= n - f.
AggregationOutcome multi_krum(std::span<const ClientUpdate> updates, std::size_t f, std::size_t m);

struct RfaParams {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  double smoothing = 1e-8;
};

// Smoothed Weiszfeld iteration for the geometric median, started at the mean.
AggregationOutcome rfa_geometric_median(std::span<const ClientUpdate> updates, const RfaParams& params = {});

// Sum over updates of ||u_i - v||.
double geometric_median_objective(std::span<const ClientUpdate> updates, const ParamVector& v);

// Robust learning rate: coordinates whose sign agreement |sum sign| falls
// below the threshold get a negated server rate.
AggregationOutcome rlr(std::span<const ClientUpdate> updates, double sign_threshold, double server_lr = 1.0);

// Blind-run defaults when the number of attackers is unknown.
std::size_t default_krum_f(std::size_t n);

}  // namespace masafl
