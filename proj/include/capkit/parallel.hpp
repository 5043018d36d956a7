#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace capkit {

// Thread cap from CAPKIT_THREADS (0 or unset = hardware concurrency).
inline unsigned thread_limit() {
  if (const char* env = std::getenv("CAPKIT_THREADS")) {
    long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Work items must be independent; results land in
// caller-owned slots indexed by i, so output order never depends on timing.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
  unsigned workers = thread_limit();
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (workers > n) workers = static_cast<unsigned>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace capkit
