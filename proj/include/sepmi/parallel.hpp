#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sepmi {

// Cooperative cancellation flag; the CLI's SIGINT handler sets it so long
// studies can flush partial results with a truncated marker.
inline std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline int default_workers() {
  if (const char* env = std::getenv("SEPMI_WORKERS")) {
    int w = std::atoi(env);
    if (w > 0) return w;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n); results must be written into pre-sized slots
// keyed by i so the merge order (and therefore the output) is deterministic
// regardless of worker count. Returns the number of tasks actually run
// (< n only if the interrupt flag was raised).
inline int parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers < 1) workers = 1;
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::exception_ptr first_error = nullptr;
  std::mutex err_mutex;
  auto body = [&]() {
    for (;;) {
      if (interrupt_flag().load(std::memory_order_relaxed)) return;
      int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
        done.fetch_add(1, std::memory_order_relaxed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        interrupt_flag().store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  if (workers == 1 || n <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (first_error) {
    interrupt_flag().store(false, std::memory_order_relaxed);
    std::rethrow_exception(first_error);
  }
  return done.load();
}

}  // namespace sepmi
