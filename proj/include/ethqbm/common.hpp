#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace ethqbm {

using Rng = std::mt19937_64;

/// Largest register the dense simulator accepts.
inline constexpr int kMaxQubits = 14;

/// Quench evolution times are drawn uniformly from [kQuenchTimeMin, kQuenchTimeMax].
/// This interval also fixes the energy units of every model parameter.
inline const double kQuenchTimeMin = std::sqrt(2.0 / std::numbers::pi);
inline const double kQuenchTimeMax = 10.0 * std::sqrt(2.0 / std::numbers::pi);

/// Thrown for violated preconditions on user-supplied inputs.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical routine cannot produce a result (empty window,
/// target outside a spectrum, degenerate sample, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

/// Draw from N(mean, variance). Note the second argument is a variance.
inline double normal_with_variance(Rng& rng, double mean, double variance) {
  std::normal_distribution<double> dist(mean, std::sqrt(variance));
  return dist(rng);
}

inline double uniform_quench_time(Rng& rng) {
  std::uniform_real_distribution<double> dist(kQuenchTimeMin, kQuenchTimeMax);
  return dist(rng);
}

/// Deterministic child seed from (master, stream ids); independent of
/// std::hash so it is stable across standard library implementations.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

}  // namespace ethqbm
