#pragma once

// Fixed-size worker pool for independent Monte-Carlo tasks. Results are
// stored by task index, so output order never depends on scheduling.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sdnlw {

template <class F>
auto parallel_map(std::size_t count, int workers, F&& task) -> std::vector<decltype(task(std::size_t{}))> {
  using R = decltype(task(std::size_t{}));
  std::vector<R> out(count);
  const std::size_t nthreads = std::min<std::size_t>(std::max(1, workers), std::max<std::size_t>(count, 1));
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = task(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < nthreads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          out[i] = task(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
          next = count;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace sdnlw
