#pragma once

#include <omp.h>

#include <algorithm>
#include <cstdint>

namespace textdet {

/// Caps worker threads for all internally parallel kernels (0 = hardware
/// default). Work is always statically partitioned and each index is processed
/// sequentially by one worker, so results are identical run to run.
inline void set_thread_count(int n) {
  if (n > 0) omp_set_num_threads(n);
}

inline int thread_count() { return omp_get_max_threads(); }

template <typename Fn>
inline void parallel_for(int64_t n, Fn&& fn) {
  if (n <= 0) return;
  if (n == 1) {
    fn(int64_t{0});
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    fn(i);
  }
}

}  // namespace textdet
