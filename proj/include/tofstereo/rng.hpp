#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace tofstereo::rng {

// Counter-based hashing so per-pixel draws do not depend on iteration order.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                             std::uint64_t c = 0) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (c + 0x85157af5ULL));
  return h;
}

/// Uniform in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) noexcept {
  return to_unit(hash(seed, a, b, c));
}

/// Standard normal via Box-Muller on two hashed uniforms.
inline double normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  const double u1 = 1.0 - uniform(seed, a, b, 1);  // (0, 1]
  const double u2 = uniform(seed, a, b, 2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace tofstereo::rng
