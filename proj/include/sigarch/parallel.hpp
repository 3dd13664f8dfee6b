#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sigarch {

/// Runs fn(i) for i in [0, count) on up to `max_threads` workers. Work items
/// must write only to their own output slot; callers reduce by index so the
/// result never depends on scheduling. The first exception (lowest index) is
/// rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t max_threads, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(max_threads, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::size_t first_error_index = count;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (i < first_error_index) {
              first_error_index = i;
              first_error = std::current_exception();
            }
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sigarch
