#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace hypobridge {

namespace detail {
inline int& worker_count_storage() {
  static int n = 1;
  return n;
}
}  // namespace detail

/// Process-wide worker count used by ensemble loops (CLI --jobs).
inline int worker_count() { return detail::worker_count_storage(); }
inline void set_worker_count(int n) { detail::worker_count_storage() = std::max(1, n); }

namespace detail {
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

/// Runs fn(i) for i in [0, n) on static contiguous chunks. Each index writes
/// only its own slot in caller-owned storage, so results are independent of
/// the worker count; reductions happen afterwards in index order. Nested
/// calls run serially.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int workers = std::max(1, worker_count());
  if (workers == 1 || n < 2 || detail::in_parallel_region()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t w = std::min<std::size_t>(workers, n);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  threads.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    std::size_t lo = n * t / w;
    std::size_t hi = n * (t + 1) / w;
    threads.emplace_back([lo, hi, t, &fn, &errors] {
      detail::in_parallel_region() = true;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace hypobridge
