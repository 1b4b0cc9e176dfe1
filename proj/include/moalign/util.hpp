#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace moalign {

/// Runs fn(i) for i in [0, n); results must be written to pre-sized slots so
/// the output order never depends on scheduling.
inline void parallel_for(std::size_t n, int jobs,
                         const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([t, n, workers, &fn]() {
      for (std::size_t i = t; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

/// min, lower quartile, median, upper quartile, max (linear interpolation).
std::array<double, 5> quantile_summary(std::vector<double> values);

}  // namespace moalign
