#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace modnet {

/// Runs fn(0..jobs-1) on up to `threads` workers. Job indices are handed out
/// dynamically, so callers must write results into per-index slots to stay
/// order-independent.
inline void run_parallel(int jobs, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || jobs <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(threads, jobs);
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

}  // namespace modnet
