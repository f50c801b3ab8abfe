#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

namespace mdenas {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of several keys into one 64-bit seed.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (auto k : keys) h = mix64(h ^ mix64(k));
  return h;
}

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent generator for the (seed, keys...) substream. Streams for
/// different keys never share state, so their consumers can run in any order.
inline std::mt19937_64 substream(std::initializer_list<std::uint64_t> keys) {
  return std::mt19937_64(derive_seed(keys));
}

/// Uniform double in [0, 1) from exactly one 64-bit draw.
template <class Rng>
double uniform01(Rng& rng) {
  static_assert(Rng::max() - Rng::min() == ~std::uint64_t{0}, "uniform01 needs a full 64-bit generator");
  return static_cast<double>((rng() - Rng::min()) >> 11) * 0x1.0p-53;
}

}  // namespace mdenas
