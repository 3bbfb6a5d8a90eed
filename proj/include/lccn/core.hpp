#pragma once

// Shared vocabulary for the lccn library: error types, matrix aliases and the
// seeded random source every stochastic routine draws from.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lccn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Class index used for samples that have no in-distribution class.
inline constexpr int kNoClass = -1;

/// Invalid arguments or configuration supplied by the caller.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A training run could not continue (divergence, non-finite values).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant was broken; always indicates a bug.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ParameterError(message);
}

inline void ensure(bool condition, const std::string& message) {
  if (!condition) throw InvariantViolation(message);
}

}  // namespace detail

/// Seeded pseudo-random source. All stochastic code takes an Rng& so that a
/// run is reproducible from its seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  /// Independent stream derived from (seed, stream).
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed) ^ mix(stream + 0x9e3779b97f4a7c15ULL));
  }

  /// Uniform double in [0, 1) built from the top 53 bits of the engine.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(engine_); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Draw from an unnormalized nonnegative weight vector.
  template <typename Weights>
  int categorical(const Weights& weights) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(weights.size()); ++k) total += weights[k];
    double u = uniform() * total;
    const auto last = static_cast<Eigen::Index>(weights.size()) - 1;
    for (Eigen::Index k = 0; k < last; ++k) {
      if (u < weights[k]) return static_cast<int>(k);
      u -= weights[k];
    }
    // Floating-point residue lands on the last class with positive weight.
    for (Eigen::Index k = last; k > 0; --k)
      if (weights[k] > 0.0) return static_cast<int>(k);
    return 0;
  }

  /// Fisher-Yates shuffle with our own index draws (std::shuffle is not
  /// specified bit-for-bit across standard libraries).
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Row-wise probability check used by several modules.
inline bool rows_are_distributions(const Matrix& m, double tol = 1e-9) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v) || v < -tol || v > 1.0 + tol) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace lccn
