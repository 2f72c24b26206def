#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "masafl/dataset.hpp"

namespace masafl {

struct TriggerPixel {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 1.0;

  friend bool operator==(const TriggerPixel&, const TriggerPixel&) = default;
};

// Pixel overrides relative to an anchor (top-left offset).
struct TriggerSpec {
  std::vector<TriggerPixel> pattern;
  std::size_t anchor_row = 1;
  std::size_t anchor_col = 1;
  std::string shape_name = "plus";

  friend bool operator==(const TriggerSpec&, const TriggerSpec&) = default;
};

// 5-pixel plus inside a 3x3 box: (0,1), (1,0), (1,1), (1,2), (2,1).
TriggerSpec plus_trigger(std::size_t anchor_row = 1, std::size_t anchor_col = 1, double value = 1.0);

struct PoisonSpec {
  double ratio = 0.5;
  int target_label = 0;
  TriggerSpec trigger = plus_trigger();
};

// Parameters of the procedural class-template generator.
struct SyntheticSpec {
  int classes = 8;
  std::size_t per_class = 200;
  ImageShape shape{10, 10};
  double noise = 0.2;           // additive U[0, noise] per pixel
  double intensity_lo = 0.7;    // per-example template gain U[lo, hi]
  double intensity_hi = 1.0;
};

// Noise-free template image for one class. Depends only on (class, classes, shape).
std::vector<double> class_template(int label, int classes, ImageShape shape);

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);
Dataset gen_synthetic(int classes, std::size_t per_class, ImageShape shape, std::uint64_t seed);

// IDX images (magic 0x00000803) + labels (magic 0x00000801). Pixels scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
Dataset decode_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels);

std::vector<Dataset> partition_iid(const Dataset& ds, std::size_t n_clients, std::uint64_t seed);
std::vector<Dataset> partition_dirichlet(const Dataset& ds, std::size_t n_clients, double alpha,
                                         std::uint64_t seed);

LabeledExample stamp_trigger(const LabeledExample& ex, const TriggerSpec& trigger, ImageShape shape);

struct PoisonedShard {
  Dataset clean;     // D_M
  Dataset poisoned;  // D_B
};

PoisonedShard poison_shard(const Dataset& ds, const PoisonSpec& spec, std::uint64_t seed);

// Uniform sample of ceil(fraction * |ds|) clean examples. With `shifted`, each
// sampled example is re-synthesized from its class template under a different
// noise regime, emulating a generated proxy set.
Dataset sample_proxy(const Dataset& ds, double fraction, std::uint64_t seed, bool shifted = false);

struct ProxySplit {
  Dataset proxy;
  Dataset rest;  // ds minus the sampled examples, original order
};

// sample_proxy plus the complement, so the server's examples can be kept out
// of every client shard.
ProxySplit split_proxy(const Dataset& ds, double fraction, std::uint64_t seed, bool shifted = false);

// Test-time views.
Dataset triggered_test_set(const Dataset& clean_test, const TriggerSpec& trigger, int target_label);

Dataset concat(const Dataset& a, const Dataset& b);

}  // namespace masafl
