#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace masafl {

// Flat real-valued vector holding model parameters or model updates.
// All aggregation math operates on this type.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t size, double fill = 0.0) : values_(size, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

// Elementwise arithmetic. Length mismatches throw ArgumentError.
ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector subtract(const ParamVector& a, const ParamVector& b);
ParamVector scale(const ParamVector& a, double k);
// a += k * b
void axpy_inplace(ParamVector& a, double k, const ParamVector& b);
double dot(const ParamVector& a, const ParamVector& b);
double l2_norm(const ParamVector& a);
double l2_distance(const ParamVector& a, const ParamVector& b);
double squared_distance(const ParamVector& a, const ParamVector& b);

// (1/n) * sum. Empty input throws ArgumentError.
ParamVector mean(std::span<const ParamVector> vectors);
ParamVector mean(std::span<const ParamVector* const> vectors);

}  // namespace masafl
