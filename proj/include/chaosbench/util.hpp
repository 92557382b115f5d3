#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>

namespace chaosbench::util {

/// Deterministic 64-bit RNG. mt19937_64 output is pinned by the standard,
/// so seeded streams are reproducible across platforms.
inline std::mt19937_64 make_rng(std::uint64_t seed) {
  // splitmix64 pre-mix: avoids correlated low-entropy seeds (0, 1, 2, ...)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z = z ^ (z >> 31);
  return std::mt19937_64(z);
}

/// Uniform double in [0, 1). Hand-rolled: std::uniform_real_distribution is
/// not bit-stable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Standard normal via Box-Muller on the bit-stable uniform.
inline double normal(std::mt19937_64& rng) {
  double u1 = 0.0;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

/// Shortest round-trippable decimal form of a double (for CSV/JSON output).
inline std::string fmt_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return std::string(buf);
}

}  // namespace chaosbench::util
