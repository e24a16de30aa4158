#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace flowrbm::detail {

/// Worker threads to use; FLOWTRAIN_THREADS caps it.
inline int worker_count() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("FLOWTRAIN_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) n = std::min(n, cap);
    } catch (...) {
    }
  }
  return n;
}

/// Runs task(i) for i in [0, n). Tasks write to disjoint slots, so the
/// caller's reduction order is independent of the thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) task(i);
    });
  }
}

}  // namespace flowrbm::detail
