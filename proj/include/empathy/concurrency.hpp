#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace empathy {

/// Calls fn(i) for i in [0, n) on at most max_workers threads. I/O-bound work
/// (model calls) goes through here; CPU kernels use OpenMP instead. The first
/// exception thrown by any fn(i) is rethrown after all workers finish.
template <typename Fn>
void run_bounded(std::size_t n, int max_workers, Fn&& fn) {
  if (n == 0) return;
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < n && !failed.load(); i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, max_workers)), n);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace empathy
