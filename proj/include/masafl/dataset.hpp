#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace masafl {

struct ImageShape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t pixels() const noexcept { return rows * cols; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// Grayscale image in [0,1], row-major, plus its (possibly flipped) label.
struct LabeledExample {
  std::vector<double> pixels;
  int label = 0;
  bool poisoned = false;
  int original_label = 0;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct Dataset {
  std::vector<LabeledExample> examples;
  int classes = 0;
  ImageShape shape;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
  std::span<const LabeledExample> view() const noexcept { return examples; }
};

}  // namespace masafl
