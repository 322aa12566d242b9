#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "pheno/common.hpp"

namespace pheno {

inline int resolve_jobs(int jobs) {
  if (jobs < 0) throw ConfigError("jobs must be >= 0");
  if (jobs == 0) {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }
  return jobs;
}

// Runs body(i) for i in [0, n). Work items claim indices from a shared
// counter; results must go into caller-preallocated slots keyed by i so the
// output is identical for any worker count. The first exception thrown by any
// worker is rethrown on the calling thread after all workers join.
template <typename Body>
void parallel_for(std::size_t n, int jobs, Body&& body) {
  const int workers = resolve_jobs(jobs);
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        body(i);
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t spawn =
      std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  pool.reserve(spawn);
  for (std::size_t w = 0; w < spawn; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (failed.load()) std::rethrow_exception(first_error);
}

}  // namespace pheno
