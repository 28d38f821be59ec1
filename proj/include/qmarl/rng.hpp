#pragma once

// Seed splitting. A run owns one 64-bit seed; every component derives its
// own stream with derive_seed(seed, stream, index...) so that adding a
// consumer never shifts the random numbers another consumer sees.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace qmarl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stream identifiers; values are part of the reproducibility contract.
enum class Stream : std::uint64_t {
  ActorInit = 1,
  CriticInit = 2,
  Episode = 3,
  EnvReset = 4,
  EnvDynamics = 5,
  Policy = 6,
  Baseline = 7,
  Gradcheck = 8,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(stream)));
  for (auto p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> path = {}) {
  return Rng(derive_seed(seed, stream, path));
}

/// Uniform double in [0, 1) from 53 random bits; unlike
/// std::uniform_real_distribution this is identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return x % n;
}

/// Standard normal via Box-Muller on uniform01.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace qmarl
