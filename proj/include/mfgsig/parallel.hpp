#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mfgsig {

// Process-wide cap on worker threads. 0 means hardware concurrency.
inline std::atomic<std::size_t>& worker_cap() {
  static std::atomic<std::size_t> cap{0};
  return cap;
}

inline void set_workers(std::size_t k) { worker_cap().store(k); }

inline std::size_t workers() {
  std::size_t k = worker_cap().load();
  if (k == 0) k = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return k;
}

// Runs body(i) for i in [begin, end) over contiguous chunks. Every index is
// visited exactly once, so results written per index are independent of the
// worker count. The first exception thrown by any worker is rethrown.
template <typename Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  const std::size_t k = std::min(workers(), n);
  if (k <= 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(k);
  const std::size_t chunk = (n + k - 1) / k;
  for (std::size_t w = 0; w < k; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mfgsig
