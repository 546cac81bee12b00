#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace balltrain {

// Worker cap: BALLTRAIN_THREADS if set, else hardware concurrency.
// Affects speed only; every parallel_for writes to disjoint slots in a
// fixed index order, so results never depend on the worker count.
inline unsigned worker_count() {
  if (const char* env = std::getenv("BALLTRAIN_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace balltrain
