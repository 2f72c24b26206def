#include "masafl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "masafl/error.hpp"
#include "masafl/random.hpp"

namespace masafl {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

void check_shape(int classes, ImageShape shape) {
  if (classes < 4) throw ConfigError("synthetic dataset needs at least 4 classes");
  if (shape.rows < 8 || shape.cols < 8) {
    throw ConfigError("synthetic images must be at least 8x8");
  }
}

LabeledExample synthesize(const std::vector<double>& tmpl, int label, const SyntheticSpec& spec,
                          Rng& rng) {
  LabeledExample ex;
  ex.label = label;
  ex.original_label = label;
  ex.pixels.resize(tmpl.size());
  const double gain = rng.uniform(spec.intensity_lo, spec.intensity_hi);
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const double v = gain * tmpl[i] + spec.noise * rng.uniform();
    ex.pixels[i] = std::clamp(v, 0.0, 1.0);
  }
  return ex;
}

Dataset empty_like(const Dataset& ds) {
  Dataset out;
  out.classes = ds.classes;
  out.shape = ds.shape;
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const char* what) {
  if (offset + 4 > bytes.size()) {
    throw IngestionError(std::string("truncated IDX header: missing ") + what, bytes.size());
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Keeps the empty-shard invariant: every client gets at least one example.
void repair_empty_shards(std::vector<Dataset>& shards, Rng& rng) {
  for (;;) {
    auto empty = std::find_if(shards.begin(), shards.end(), [](const Dataset& d) { return d.empty(); });
    if (empty == shards.end()) return;
    auto largest = std::max_element(shards.begin(), shards.end(), [](const Dataset& a, const Dataset& b) {
      return a.size() < b.size();
    });
    if (largest->size() <= 1) return;
    const std::size_t pick = rng.below(largest->size());
    empty->examples.push_back(largest->examples[pick]);
    largest->examples.erase(largest->examples.begin() + static_cast<std::ptrdiff_t>(pick));
  }
}

}  // namespace

TriggerSpec plus_trigger(std::size_t anchor_row, std::size_t anchor_col, double value) {
  TriggerSpec t;
  t.anchor_row = anchor_row;
  t.anchor_col = anchor_col;
  t.shape_name = "plus";
  t.pattern = {{0, 1, value}, {1, 0, value}, {1, 1, value}, {1, 2, value}, {2, 1, value}};
  return t;
}

std::vector<double> class_template(int label, int classes, ImageShape shape) {
  check_shape(classes, shape);
  if (label < 0 || label >= classes) throw ArgumentError("label out of range for template");
  const std::size_t h = shape.rows;
  const std::size_t w = shape.cols;
  std::vector<double> img(shape.pixels(), 0.0);
  const auto c = static_cast<std::size_t>(label);

  // A full-length bar (horizontal for even classes, vertical for odd), a 2x2
  // blob and a 3x3 corner block.
  const bool horizontal = c % 2 == 0;
  const std::size_t slots = std::max<std::size_t>(1, ((horizontal ? h : w) - 4) / 2);
  const std::size_t bar = 4 + 2 * ((c / 2) % slots);
  for (std::size_t i = 0; i < (horizontal ? w : h); ++i) {
    if (horizontal) {
      img[bar * w + i] = 0.8;
    } else {
      img[i * w + bar] = 0.8;
    }
  }
  const std::size_t br = 4 + (c * 3) % (h - 5);
  const std::size_t bc = 4 + (c * 2 + 1) % (w - 5);
  for (std::size_t r = br; r < br + 2; ++r) {
    for (std::size_t q = bc; q < bc + 2; ++q) img[r * w + q] = 1.0;
  }
  const std::size_t cr = (c % 4) < 2 ? 0 : h - 3;
  const std::size_t cc = (c % 2) == 0 ? 0 : w - 3;
  for (std::size_t r = cr; r < cr + 3; ++r) {
    for (std::size_t q = cc; q < cc + 3; ++q) img[r * w + q] = 0.6;
  }
  return img;
}

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  check_shape(spec.classes, spec.shape);
  if (spec.per_class == 0) throw ConfigError("per_class must be positive");
  Dataset ds;
  ds.classes = spec.classes;
  ds.shape = spec.shape;
  ds.examples.reserve(static_cast<std::size_t>(spec.classes) * spec.per_class);
  Rng rng(seed);
  std::vector<std::vector<double>> templates;
  for (int c = 0; c < spec.classes; ++c) templates.push_back(class_template(c, spec.classes, spec.shape));
  for (int c = 0; c < spec.classes; ++c) {
    for (std::size_t k = 0; k < spec.per_class; ++k) {
      ds.examples.push_back(synthesize(templates[static_cast<std::size_t>(c)], c, spec, rng));
    }
  }
  return ds;
}

Dataset gen_synthetic(int classes, std::size_t per_class, ImageShape shape, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.per_class = per_class;
  spec.shape = shape;
  return gen_synthetic(spec, seed);
}

Dataset decode_idx(const std::vector<std::uint8_t>& images, const std::vector<std::uint8_t>& labels) {
  if (images.empty()) throw IngestionError("empty IDX image file", 0);
  if (labels.empty()) throw IngestionError("empty IDX label file", 0);
  const std::uint32_t img_magic = read_be32(images, 0, "magic");
  if (img_magic != kIdxImagesMagic) throw IngestionError("bad IDX image magic", 0);
  const std::uint32_t lbl_magic = read_be32(labels, 0, "magic");
  if (lbl_magic != kIdxLabelsMagic) throw IngestionError("bad IDX label magic", 0);

  const std::uint32_t n_images = read_be32(images, 4, "image count");
  const std::uint32_t rows = read_be32(images, 8, "row count");
  const std::uint32_t cols = read_be32(images, 12, "column count");
  const std::uint32_t n_labels = read_be32(labels, 4, "label count");
  if (n_images != n_labels) {
    throw IngestionError("image count " + std::to_string(n_images) + " differs from label count " +
                             std::to_string(n_labels),
                         4);
  }
  if (rows == 0 || cols == 0) throw IngestionError("zero image dimension", 8);

  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t img_needed = 16 + pixels * n_images;
  if (images.size() < img_needed) throw IngestionError("truncated IDX image data", images.size());
  const std::size_t lbl_needed = 8 + std::size_t{n_labels};
  if (labels.size() < lbl_needed) throw IngestionError("truncated IDX label data", labels.size());

  Dataset ds;
  ds.shape = {rows, cols};
  ds.examples.reserve(n_images);
  int max_label = 0;
  for (std::size_t i = 0; i < n_images; ++i) {
    LabeledExample ex;
    ex.pixels.resize(pixels);
    const std::uint8_t* src = images.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) ex.pixels[p] = static_cast<double>(src[p]) / 255.0;
    ex.label = labels[8 + i];
    ex.original_label = ex.label;
    max_label = std::max(max_label, ex.label);
    ds.examples.push_back(std::move(ex));
  }
  ds.classes = max_label + 1;
  return ds;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return decode_idx(read_file(images_path), read_file(labels_path));
}

std::vector<Dataset> partition_iid(const Dataset& ds, std::size_t n_clients, std::uint64_t seed) {
  if (n_clients == 0) throw ConfigError("partition needs at least one client");
  Rng rng(seed);
  const auto order = permutation(ds.size(), rng);
  std::vector<Dataset> shards(n_clients, empty_like(ds));
  const std::size_t base = ds.size() / n_clients;
  const std::size_t extra = ds.size() % n_clients;
  std::size_t k = 0;
  for (std::size_t c = 0; c < n_clients; ++c) {
    const std::size_t take = base + (c < extra ? 1 : 0);
    shards[c].examples.reserve(take);
    for (std::size_t j = 0; j < take; ++j) shards[c].examples.push_back(ds.examples[order[k++]]);
  }
  return shards;
}

std::vector<Dataset> partition_dirichlet(const Dataset& ds, std::size_t n_clients, double alpha,
                                         std::uint64_t seed) {
  if (n_clients == 0) throw ConfigError("partition needs at least one client");
  if (!(alpha > 0.0)) throw ConfigError("dirichlet alpha must be positive");
  Rng rng(seed);
  std::vector<Dataset> shards(n_clients, empty_like(ds));
  for (int c = 0; c < ds.classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.examples[i].label == c) members.push_back(i);
    }
    rng.shuffle(members);
    const std::vector<double> p = rng.dirichlet(n_clients, alpha);
    // Cut points from the cumulative proportions; the last client takes the rest.
    std::size_t start = 0;
    double cumulative = 0.0;
    for (std::size_t k = 0; k < n_clients; ++k) {
      cumulative += p[k];
      std::size_t end = k + 1 == n_clients
                            ? members.size()
                            : std::min(members.size(), static_cast<std::size_t>(std::floor(
                                                           cumulative * static_cast<double>(members.size()))));
      end = std::max(end, start);
      for (std::size_t j = start; j < end; ++j) shards[k].examples.push_back(ds.examples[members[j]]);
      start = end;
    }
  }
  repair_empty_shards(shards, rng);
  return shards;
}

LabeledExample stamp_trigger(const LabeledExample& ex, const TriggerSpec& trigger, ImageShape shape) {
  if (ex.pixels.size() != shape.pixels()) {
    throw ConfigError("example pixel count does not match image shape");
  }
  LabeledExample out = ex;
  for (const auto& px : trigger.pattern) {
    const std::size_t r = trigger.anchor_row + px.row;
    const std::size_t c = trigger.anchor_col + px.col;
    if (r >= shape.rows || c >= shape.cols) {
      throw ConfigError("trigger pixel (" + std::to_string(r) + "," + std::to_string(c) +
                        ") outside " + std::to_string(shape.rows) + "x" + std::to_string(shape.cols) +
                        " image");
    }
    out.pixels[r * shape.cols + c] = px.value;
  }
  return out;
}

PoisonedShard poison_shard(const Dataset& ds, const PoisonSpec& spec, std::uint64_t seed) {
  if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) {
    throw ConfigError("poison ratio must lie in [0, 1]");
  }
  const auto count = std::min(ds.size(), static_cast<std::size_t>(std::floor(
                                             spec.ratio * static_cast<double>(ds.size()) + 1e-9)));
  Rng rng(seed);
  auto order = permutation(ds.size(), rng);
  std::vector<bool> chosen(ds.size(), false);
  for (std::size_t i = 0; i < count; ++i) chosen[order[i]] = true;

  PoisonedShard out{empty_like(ds), empty_like(ds)};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& ex = ds.examples[i];
    if (!chosen[i]) {
      out.clean.examples.push_back(ex);
      continue;
    }
    LabeledExample p = stamp_trigger(ex, spec.trigger, ds.shape);
    p.original_label = ex.original_label;
    p.label = spec.target_label;
    p.poisoned = true;
    out.poisoned.examples.push_back(std::move(p));
  }
  return out;
}

ProxySplit split_proxy(const Dataset& ds, double fraction, std::uint64_t seed, bool shifted) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("proxy fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> clean;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.examples[i].poisoned) clean.push_back(i);
  }
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ds.size()) - 1e-9));
  const std::size_t count = std::min(want, clean.size());
  Rng rng(seed);
  rng.shuffle(clean);
  clean.resize(count);
  std::sort(clean.begin(), clean.end());

  ProxySplit out{empty_like(ds), empty_like(ds)};
  out.proxy.examples.reserve(count);
  out.rest.examples.reserve(ds.size() - count);
  std::size_t next = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (next < clean.size() && clean[next] == i) {
      ++next;
      continue;
    }
    out.rest.examples.push_back(ds.examples[i]);
  }
  if (!shifted) {
    for (std::size_t i : clean) out.proxy.examples.push_back(ds.examples[i]);
    return out;
  }
  // Same class templates, different noise regime and gain range.
  SyntheticSpec shift;
  shift.noise = 0.3;
  shift.intensity_lo = 0.5;
  shift.intensity_hi = 0.9;
  Rng gen(derive_seed(seed, {0x5b1f7ULL}));
  for (std::size_t i : clean) {
    const int label = ds.examples[i].label;
    out.proxy.examples.push_back(synthesize(class_template(label, ds.classes, ds.shape), label, shift, gen));
  }
  return out;
}

Dataset sample_proxy(const Dataset& ds, double fraction, std::uint64_t seed, bool shifted) {
  return split_proxy(ds, fraction, seed, shifted).proxy;
}

Dataset triggered_test_set(const Dataset& clean_test, const TriggerSpec& trigger, int target_label) {
  Dataset out = empty_like(clean_test);
  for (const auto& ex : clean_test.examples) {
    if (ex.label == target_label) continue;
    out.examples.push_back(stamp_trigger(ex, trigger, clean_test.shape));
  }
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  Dataset out = empty_like(a);
  out.examples.reserve(a.size() + b.size());
  out.examples.insert(out.examples.end(), a.examples.begin(), a.examples.end());
  out.examples.insert(out.examples.end(), b.examples.begin(), b.examples.end());
  return out;
}

}  // namespace masafl
