#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace qmt {

// Static block partition over [0, n). Each index writes only its own output
// slots, so results are identical for any worker count; reductions over the
// slots are done by the caller in a fixed order.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t k = 0; k < w; ++k) {
    const std::size_t lo = n * k / w;
    const std::size_t hi = n * (k + 1) / w;
    pool.emplace_back([lo, hi, &f] {
      for (std::size_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace qmt
