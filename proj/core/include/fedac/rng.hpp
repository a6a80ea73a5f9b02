#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace fedac {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; good bit diffusion for seed derivation.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

/// Derives an independent generator from (seed, tag, a, b).
///
/// Streams are keyed, not sequential, so the order in which components draw
/// randomness (or whether a component runs at all) never shifts another
/// component's stream. This is what makes runs reproducible regardless of
/// worker parallelism.
inline Rng derive_stream(std::uint64_t seed, std::string_view tag,
                         std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = mix64(seed ^ hash_tag(tag));
  s = mix64(s ^ mix64(a));
  s = mix64(s ^ mix64(b ^ 0x5bf0f1d78a0a839bull));
  return Rng(s);
}

/// k distinct values from [0, n) via partial Fisher-Yates, in draw order.
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace fedac
