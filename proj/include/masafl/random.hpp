#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

namespace masafl {

// Derives an independent 64-bit seed from a base seed and a list of keys
// (round, client id, purpose tag, ...). splitmix64 finalizer per key.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

// Stream tags used with derive_seed so that different consumers of the same
// (seed, round, client) triple never share a stream.
enum class Stream : std::uint64_t {
  kModelInit = 1,
  kTrainData = 2,
  kTestData = 3,
  kPartition = 4,
  kPoison = 5,
  kProxy = 6,
  kLocalTrain = 7,
  kSampling = 8,
  kUnlearn = 9,
  kRoles = 10,
};

// Portable random source. std::mt19937_64 output is fixed by the standard;
// the distributions below are implemented here because the <random>
// distribution objects are implementation-defined and would break
// cross-platform bit-exact reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::size_t below(std::size_t bound);

  // Standard normal via the Box-Muller transform (one value per call).
  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the boosting identity.
  double gamma(double shape);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  // Symmetric Dirichlet(alpha * 1_n) draw.
  std::vector<double> dirichlet(std::size_t n, double alpha);

 private:
  std::mt19937_64 engine_;
};

// Returns 0..n-1 in a seeded random order.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace masafl
