#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace kcd {

// Worker count used by data-parallel loops. Set once by the CLI from
// --threads / KCD_THREADS; library callers may override per process.
inline int& max_threads_slot() {
  static int value = 0;  // 0 = auto
  return value;
}

inline void set_max_threads(int n) { max_threads_slot() = n; }

inline int max_threads() {
  const int configured = max_threads_slot();
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static chunking over [0, n). Each index is handled by exactly one worker
// and workers only write to their own output slots, so results do not
// depend on the worker count.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace kcd
