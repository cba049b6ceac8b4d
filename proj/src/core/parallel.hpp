#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace nlelab {

/// Static-partition parallel loop over [0, n). Each worker owns a contiguous
/// index range, so writes to disjoint slots are race-free and the result does
/// not depend on the thread count. threads <= 1 runs inline.
inline void parallel_for(long n, int threads, const std::function<void(long, long)>& body) {
  if (n <= 0) return;
  if (threads <= 1 || n < 2 * threads) {
    body(0, n);
    return;
  }
  const long chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    const long lo = t * chunk;
    const long hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

} // namespace nlelab
