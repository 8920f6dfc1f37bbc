#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lmf {

/// Number of workers used when the caller passes 0.
inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; results must be written to disjoint slots so that
/// the outcome does not depend on the worker count. The first exception
/// thrown by any task is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers == 0) workers = default_workers();
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace lmf
