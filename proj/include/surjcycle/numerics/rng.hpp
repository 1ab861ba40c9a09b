#pragma once

#include <cstdint>
#include <random>

#include "surjcycle/numerics/dense.hpp"

namespace surjcycle {

/// Seeded random stream. Identical seeds give identical sample streams on a
/// given toolchain; independent streams are derived with split().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  /// Child stream keyed on (seed, stream); does not advance this stream.
  Rng split(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL))); }

  double normal() { return normal_(engine_); }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * unit_(engine_);
  }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  DenseMatrix normal_matrix(Index rows, Index cols, double stddev = 1.0) {
    DenseMatrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal();
    return m;
  }

  DenseMatrix uniform_matrix(Index rows, Index cols, double lo, double hi) {
    DenseMatrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace surjcycle
