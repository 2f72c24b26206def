#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "masafl/dataset.hpp"
#include "masafl/defenses.hpp"
#include "masafl/nn.hpp"
#include "masafl/param_vector.hpp"

namespace masafl {

// Hyperparameters of the unlearning-based filter.
struct MasaConfig {
  double fusion_degree = 0.7;  // lambda, in (0.5, 1]; 1 disables fusion
  double filter_radius = 1.0;  // delta > 0
  std::size_t unlearn_epochs = 5;
  double unlearn_rate = 0.001;
  double unlearn_momentum = 0.9;
  std::size_t batch_size = 64;
  double loss_cap = 50.0;  // per-batch cap on accumulated loss

  // Throws ConfigError naming the violated constraint.
  void validate() const;
};

struct UnlearningTrace {
  std::size_t client_id = 0;
  double accumulated_loss = 0.0;
  std::vector<double> per_batch_losses;
  std::size_t cap_events = 0;       // batches whose loss exceeded the cap
  std::size_t nonfinite_events = 0; // batches whose loss or gradient blew up
};

struct MdsResult {
  std::vector<double> scores;
  double median = 0.0;
  double sigma = 0.0;
};

struct MasaDiagnostics {
  std::vector<UnlearningTrace> traces;  // ascending client id
  MdsResult mds;
  bool fallback_used = false;           // no score passed the filter
  std::size_t cap_events = 0;
};

struct MasaOutcome {
  AggregationOutcome aggregation;
  MasaDiagnostics diagnostics;
};

// theta_prev + lambda * own_update + (1 - lambda) * mean_update.
ModelState fuse(const ModelState& theta_prev, const ParamVector& own_update, const ParamVector& mean_update,
                double fusion_degree);

// Gradient ascent on the proxy set; each batch's loss (capped) is recorded
// before the step that follows it. The input model is left untouched.
UnlearningTrace unlearn_and_accumulate(const ModelState& fused, const Dataset& proxy, const MasaConfig& cfg,
                                       std::uint64_t seed);

// Median deviation score: (A_i - median) / population std about the mean.
// Even n takes the lower-middle element as the median; sigma = 0 gives all 0.
MdsResult mds(std::span<const double> values);

// Indices i with scores[i] < radius. May be empty.
std::vector<std::size_t> filter_scores(std::span<const double> scores, double radius);

// Fuse, unlearn and score every update, then average the raw updates of the
// clients that pass the filter. If none pass, the lowest-scoring client is kept.
MasaOutcome masa_aggregate(std::span<const ClientUpdate> updates, const ModelState& theta_prev,
                           const Dataset& proxy, const MasaConfig& cfg, std::uint64_t seed,
                           std::size_t threads = 1);

}  // namespace masafl
