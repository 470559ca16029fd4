#pragma once

#include <cstdint>
#include <random>

namespace rbsde {

// splitmix64: the standard 64-bit finalizer-style mixer. Used to derive
// independent per-path seeds from (base seed, path index) so that path i can
// be regenerated in isolation and parallel generation is order-independent.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_path_seed(std::uint64_t base_seed, std::uint64_t path) {
  return splitmix64(splitmix64(base_seed) ^ splitmix64(path + 0x632be59bd9b4e019ULL));
}

// Per-path random stream. A fresh engine per path keeps the distribution
// state (normal caches a spare variate) out of cross-path coupling.
struct PathRng {
  std::mt19937_64 engine;

  explicit PathRng(std::uint64_t path_seed) : engine(path_seed) {}
  PathRng(std::uint64_t base_seed, std::uint64_t path)
      : engine(derive_path_seed(base_seed, path)) {}

  double normal(double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    return d(engine);
  }
  int poisson(double mean) {
    std::poisson_distribution<int> d(mean);
    return d(engine);
  }
  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine);
  }
};

// 64-bit FNV-1a, for config hashing in manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace rbsde
