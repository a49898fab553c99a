#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace pragnav {

// mt19937_64 is fully specified by the standard, so streams are reproducible
// everywhere. The std:: distributions are not, hence the helpers below.
using Rng = std::mt19937_64;

constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a parent seed and any number of
/// integer coordinates (task key, member index, rollout index, ...).
template <class... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Parts... parts) {
  std::uint64_t h = mix64(seed);
  ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(parts) + 0x632be59bd9b4e019ULL))), ...);
  return h;
}

/// 64-bit FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t hash_string(std::string_view text);

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(Rng& rng, std::size_t n);

/// Draws an index with probability proportional to `weights`.
std::size_t sample_discrete(Rng& rng, std::span<const double> weights);

}  // namespace pragnav
