#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace graphflow::parallel {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> threads{1};
  return threads;
}
}  // namespace detail

// Below this many items a loop always runs on the calling thread.
inline constexpr std::size_t kMinParallelItems = 2048;

inline void set_threads(int k) { detail::thread_setting().store(std::max(1, k)); }
inline int threads() { return detail::thread_setting().load(); }

/// Runs f(i) for i in [0, count). Each index is visited exactly once; callers
/// write results into per-index slots and reduce serially afterwards, which
/// keeps every result independent of the thread count.
template <class F>
void for_each_index(std::size_t count, F&& f) {
  const int k = threads();
  if (k <= 1 || count < kMinParallelItems) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(k), count);
  const std::size_t chunk = (count + workers - 1) / workers;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(count, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        try {
          for (std::size_t i = lo; i < hi; ++i) f(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace graphflow::parallel
