#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace botscope {

/// Default worker count: BOTSCOPE_THREADS if set to a positive integer, else 1.
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("BOTSCOPE_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return 1;
}

/// Applies fn to every element of items with up to `threads` workers.
/// Result i always corresponds to items[i], so output is independent of the
/// worker count. The first exception thrown by fn is rethrown on the caller.
template <typename T, typename Fn>
auto parallel_map(const std::vector<T>& items, unsigned threads, Fn&& fn)
    -> std::vector<std::invoke_result_t<Fn&, const T&>> {
  using R = std::invoke_result_t<Fn&, const T&>;
  std::vector<R> out(items.size());
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, threads), items.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) out[i] = fn(items[i]);
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < items.size();
             i = next.fetch_add(1)) {
          try {
            out[i] = fn(items[i]);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(items.size());
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace botscope
