#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace crlm {

// Runs fn(0..n-1) across up to `threads` workers. Callers own the output
// slots (indexed by job id), so results are identical to a serial run
// regardless of scheduling. The first exception wins and is rethrown
// after all workers join.
inline void parallel_for(size_t n, int threads,
                         const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  const size_t workers =
      threads <= 1 ? 1 : std::min<size_t>(static_cast<size_t>(threads), n);
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed.load() && error) std::rethrow_exception(error);
}

}  // namespace crlm
