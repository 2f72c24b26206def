#include "masafl/param_vector.hpp"

#include <cmath>
#include <string>

#include "masafl/error.hpp"

namespace masafl {
namespace {

void require_same_size(const ParamVector& a, const ParamVector& b, const char* op) {
  if (a.size() != b.size()) {
    throw ArgumentError(std::string(op) + ": length mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

bool ParamVector::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "add");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "subtract");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

ParamVector scale(const ParamVector& a, double k) {
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = k * a[i];
  return out;
}

void axpy_inplace(ParamVector& a, double k, const ParamVector& b) {
  require_same_size(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += k * b[i];
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

double squared_distance(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double l2_distance(const ParamVector& a, const ParamVector& b) {
  return std::sqrt(squared_distance(a, b));
}

ParamVector mean(std::span<const ParamVector* const> vectors) {
  if (vectors.empty()) {
    throw ArgumentError("mean of an empty list");
  }
  ParamVector out(vectors.front()->size());
  for (const ParamVector* v : vectors) {
    require_same_size(out, *v, "mean");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*v)[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (auto& x : out) x /= n;
  return out;
}

ParamVector mean(std::span<const ParamVector> vectors) {
  std::vector<const ParamVector*> ptrs;
  ptrs.reserve(vectors.size());
  for (const auto& v : vectors) ptrs.push_back(&v);
  return mean(std::span<const ParamVector* const>(ptrs));
}

}  // namespace masafl
