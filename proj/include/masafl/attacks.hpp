#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "masafl/data.hpp"
#include "masafl/nn.hpp"
#include "masafl/param_vector.hpp"

namespace masafl {

enum class AttackKind { kNone, kBadnet, kDba, kScaling, kPgd, kNeurotoxin, kLie };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

struct AttackSpec {
  AttackKind kind = AttackKind::kBadnet;
  double scale_factor = 2.0;
  double pgd_radius_factor = 1.0;
  double mask_percentile = 0.75;
  double lie_z = 1.5;

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 2;
  double learning_rate = 0.1;
  double lr_decay = 0.99;
  double momentum = 0.0;
  std::size_t batch_size = 16;

  void validate() const;
  // learning_rate * lr_decay^round, round counted from 0.
  double rate_at(std::size_t round) const;
};

// Optional per-step / per-epoch constraints layered on top of plain SGD.
struct TrainHooks {
  // Neurotoxin: gradient coordinates outside the mask are zeroed every step.
  const std::vector<bool>* gradient_mask = nullptr;
  // PGD: after every epoch the model is projected into the L2 ball of radius
  // pgd_radius_factor * ||theta_global|| around theta_global.
  std::optional<double> pgd_radius_factor;
};

// Minibatch SGD on cross-entropy starting from `global`. Returns the update
// theta_local - theta_global, or nullopt if `data` is empty (skip the client).
std::optional<ParamVector> local_train(const ModelState& global, std::span<const LabeledExample> data,
                                       const TrainConfig& cfg, double learning_rate, std::uint64_t seed,
                                       const TrainHooks& hooks = {});

std::optional<ParamVector> benign_local_train(const ModelState& global, const Dataset& shard,
                                              const TrainConfig& cfg, double learning_rate,
                                              std::uint64_t seed);

// Trains on D_M followed by D_B in one shuffled pool, i.e. main-task plus
// backdoor-task loss.
std::optional<ParamVector> malicious_local_train(const ModelState& global, const Dataset& clean_part,
                                                 const Dataset& poisoned_part, const TrainConfig& cfg,
                                                 double learning_rate, std::uint64_t seed,
                                                 const TrainHooks& hooks = {});

ParamVector apply_scaling(const ParamVector& update, double factor);

ParamVector apply_pgd(const ParamVector& theta_mal, const ParamVector& theta_global, double radius_factor);

// Keeps coordinates whose |prev_aggregate| is within the bottom `percentile`
// (ties at the cut-off are kept). An all-zero previous aggregate keeps all.
std::vector<bool> neurotoxin_mask(const ParamVector& prev_aggregate, double percentile);
ParamVector neurotoxin_constrain(const ParamVector& grad, const ParamVector& prev_aggregate,
                                 double percentile);

// Per-coordinate mean + z * population std over the reference updates.
ParamVector lie_craft(std::span<const ParamVector> references, double z);

// Splits a plus trigger into its N (with centre), E, S and W arms.
TriggerSpec dba_subtrigger(const TriggerSpec& trigger, std::size_t part);

}  // namespace masafl
