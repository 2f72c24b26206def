#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "masafl/attacks.hpp"
#include "masafl/data.hpp"
#include "masafl/defenses.hpp"
#include "masafl/masa.hpp"

namespace masafl {

enum class Distribution { kIid, kDirichlet };

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | idx
  int classes = 8;
  std::size_t image_rows = 10;
  std::size_t image_cols = 10;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
};

struct FederationConfig {
  std::size_t n_clients = 20;
  std::size_t clients_per_round = 20;
  std::size_t rounds = 40;
  double attack_ratio = 0.2;
  Distribution distribution = Distribution::kIid;
  double dirichlet_alpha = 0.5;
  // Detection means are also reported for rounds >= warmup_rounds.
  // Unset means rounds / 4.
  std::optional<std::size_t> warmup_rounds;
};

struct DefenseConfig {
  DefenseKind rule = DefenseKind::kMasa;
  MasaConfig masa;
  std::optional<std::size_t> krum_f;  // default ceil(0.25 k)
  std::optional<std::size_t> krum_m;  // default k - f
  RfaParams rfa;
  std::optional<double> rlr_threshold;  // default ceil(0.25 k) + 1
  double rlr_server_lr = 1.0;
};

struct ProxyConfig {
  double fraction = 0.01;
  bool shifted = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  DatasetConfig dataset;
  FederationConfig federation;
  std::size_t hidden_units = 64;
  TrainConfig train;
  AttackSpec attack;
  PoisonSpec poison;
  DefenseConfig defense;
  ProxyConfig proxy;

  void validate() const;
  // Number of malicious clients: floor(attack_ratio * n), 0 when attack is none.
  std::size_t malicious_count() const;
  std::size_t warmup_rounds() const;
};

// Grid axes for `sweep`. Empty axes are not varied.
struct SweepGrid {
  std::vector<double> fusion_degree;
  std::vector<double> filter_radius;
  std::vector<double> poison_ratio;
  std::vector<double> dirichlet_alpha;
  std::vector<double> proxy_fraction;

  bool empty() const;
};

struct ConfigFile {
  ExperimentConfig experiment;
  SweepGrid sweep;
};

// Nested JSON; every key is optional and unknown keys are rejected.
// Errors are ConfigError naming the offending key and rule.
ConfigFile parse_config_text(const std::string& text);
ConfigFile parse_config_file(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::filesystem::path& path);

// Canonical JSON text (2-space indent, sorted keys) that parses back to `cfg`.
std::string serialize_config(const ExperimentConfig& cfg);

std::string_view to_string(Distribution d);

}  // namespace masafl
