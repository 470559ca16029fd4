#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace rbsde {

// Resolve a worker count: 0 means auto (hardware concurrency).
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Read the RBSDE_THREADS cap from the environment (0 = auto).
inline int threads_from_env() {
  const char* env = std::getenv("RBSDE_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  return std::max(0, std::atoi(env));
}

// Fixed block size for splitting path ranges. Results must not depend on the
// worker count, so reductions always merge per-block partials in block order;
// threads only decide who computes which block.
inline constexpr std::size_t kParallelBlock = 4096;

inline std::size_t block_count(std::size_t n) {
  return (n + kParallelBlock - 1) / kParallelBlock;
}

// Run fn(block_index, begin, end) over [0, n) split into fixed blocks.
// fn must only write to state owned by its block.
template <typename Fn>
void parallel_blocks(std::size_t n, int threads, Fn&& fn) {
  const std::size_t nb = block_count(n);
  const int workers = std::min<std::size_t>(std::max(1, threads), nb == 0 ? 1 : nb);
  if (workers <= 1 || nb <= 1) {
    for (std::size_t b = 0; b < nb; ++b)
      fn(b, b * kParallelBlock, std::min(n, (b + 1) * kParallelBlock));
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t b = static_cast<std::size_t>(w); b < nb; b += workers)
        fn(b, b * kParallelBlock, std::min(n, (b + 1) * kParallelBlock));
    });
  }
  for (auto& t : pool) t.join();
}

} // namespace rbsde
