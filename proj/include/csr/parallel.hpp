#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace csr {

inline int default_jobs() {
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

/// Runs body(i, worker) for i in [0, count) on up to `jobs` threads. Indices
/// are handed out dynamically, so `body` must write only to slot i (or to
/// per-worker storage). The first exception is rethrown after all workers join.
template <typename Body>
void parallel_for(std::size_t count, int jobs, Body&& body) {
  const auto workers = static_cast<std::size_t>(std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(count, 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i, std::size_t{0});
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < count; i = next++) body(i, w);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace csr
