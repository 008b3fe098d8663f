#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace riskgrad {

// Thread cap: RISKGRAD_THREADS env var, else hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("RISKGRAD_THREADS")) {
    const long v = std::atol(env);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Runs fn(i) for i in [0, n). Results must be written into caller-owned,
// index-addressed storage so the combination order is fixed regardless of
// scheduling; reductions over the results stay bit-reproducible.
inline void parallel_for_indexed(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned nthreads = std::min<std::size_t>(thread_cap(), n);
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nthreads);
  for (unsigned t = 0; t < nthreads; ++t) {
    workers.emplace_back([&, t]() {
      for (std::size_t i = t; i < n; i += nthreads) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace riskgrad
