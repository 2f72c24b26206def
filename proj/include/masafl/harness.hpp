#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "masafl/config.hpp"
#include "masafl/data.hpp"
#include "masafl/masa.hpp"
#include "masafl/nn.hpp"

namespace masafl {

struct ClientUnlearningRecord {
  std::size_t client_id = 0;
  bool malicious = false;
  double accumulated_loss = 0.0;
  double score = 0.0;
  bool selected = false;
};

struct RoundReport {
  std::size_t round = 0;  // 1-based
  double ma = 0.0;        // percentages
  double ba = 0.0;
  double ra = 0.0;
  std::optional<double> tpr;  // filtering rules, >= 1 malicious sampled
  std::optional<double> fpr;  // filtering rules, >= 1 benign sampled
  std::vector<std::size_t> sampled;
  std::vector<std::size_t> malicious_sampled;
  std::vector<std::size_t> selected;
  double global_update_norm = 0.0;
  // MASA only.
  std::vector<ClientUnlearningRecord> unlearning;
  double mds_median = 0.0;
  double mds_sigma = 0.0;
  bool fallback_used = false;
  std::size_t cap_events = 0;
};

struct ExperimentSummary {
  std::size_t window_rounds = 0;  // final 25% of rounds
  double ma = 0.0;
  double ba = 0.0;
  double ra = 0.0;
  double final_ma = 0.0;
  double final_ba = 0.0;
  double final_ra = 0.0;
  // Means over the rounds where the metric is defined.
  std::optional<double> tpr_all;
  std::optional<double> fpr_all;
  std::optional<double> tpr_post_warmup;
  std::optional<double> fpr_post_warmup;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<RoundReport> rounds;
  ExperimentSummary summary;
};

struct Accuracy {
  double ma = 0.0;
  double ba = 0.0;
  double ra = 0.0;
};

// MA on clean_test; BA (predicted == target) and RA (predicted == original
// label) on triggered_test.
Accuracy evaluate(const ModelState& model, const Dataset& clean_test, const Dataset& triggered_test, int target);

struct DetectionRates {
  std::optional<double> tpr;
  std::optional<double> fpr;
};

// Exclusion counts as a positive detection. Percentages.
DetectionRates detection_metrics(std::span<const std::size_t> selected, std::span<const std::size_t> sampled,
                                 const std::set<std::size_t>& malicious);

// k of n clients, uniform without replacement, keyed by (seed, round). Ascending.
std::vector<std::size_t> sample_clients(std::size_t n, std::size_t k, std::size_t round, std::uint64_t seed);

struct ClientState {
  std::size_t id = 0;
  bool malicious = false;
  Dataset clean;     // everything for benign clients, D_M for malicious ones
  Dataset poisoned;  // D_B
};

// Owns the federation: data, clients, global model and round counter.
class Simulation {
 public:
  explicit Simulation(ExperimentConfig cfg);

  RoundReport run_round();

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const ModelState& global_model() const noexcept { return global_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  const std::set<std::size_t>& malicious_ids() const noexcept { return malicious_; }
  const Dataset& train_set() const noexcept { return train_; }
  const Dataset& test_set() const noexcept { return test_; }
  const Dataset& triggered_test() const noexcept { return triggered_test_; }
  const Dataset& proxy() const noexcept { return proxy_; }
  std::size_t rounds_done() const noexcept { return round_; }

 private:
  std::vector<ClientUpdate> train_clients(std::span<const std::size_t> sampled, double lr) const;

  ExperimentConfig cfg_;
  Dataset train_;
  Dataset test_;
  Dataset triggered_test_;
  Dataset proxy_;
  std::vector<ClientState> clients_;
  std::set<std::size_t> malicious_;
  ModelState global_;
  ParamVector prev_aggregate_;
  std::size_t round_ = 0;
};

ExperimentSummary summarize(const std::vector<RoundReport>& rounds, std::size_t warmup_rounds);

ExperimentReport run_experiment(const ExperimentConfig& cfg);

}  // namespace masafl
