#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rebal {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(k) for k in [0, count) over `threads` workers with an atomic
/// work counter. The first exception (lowest index) is rethrown.
template <typename Body>
void parallel_for(std::int64_t count, int threads, Body&& body) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::int64_t>(count, 1))));
  if (threads == 1) {
    for (std::int64_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::mutex mu;
  std::int64_t next = 0;
  std::int64_t failed_index = count;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::int64_t k;
      {
        std::lock_guard lock(mu);
        if (next >= count || next > failed_index) return;
        k = next++;
      }
      try {
        body(k);
      } catch (...) {
        std::lock_guard lock(mu);
        if (k < failed_index) {
          failed_index = k;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace rebal
