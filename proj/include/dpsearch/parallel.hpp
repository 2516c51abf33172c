#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dps::par {

inline int hardware_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Global worker cap, set once by the CLI before any computation starts.
inline int& worker_slot() {
  static int w = hardware_workers();
  return w;
}
inline int workers() { return worker_slot(); }
inline void set_workers(int n) { worker_slot() = n < 1 ? 1 : n; }

// Runs fn(i) for i in [0, n). OpenMP when available and workers > 1.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
#ifdef _OPENMP
  if (workers() > 1 && n > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers())
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      fn(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

// Serial reference for the kernels below; kept so tests can assert the
// parallel path reproduces it exactly.
template <class Fn>
void serial_for(std::size_t n, Fn&& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

inline constexpr std::size_t kChunk = 4096;

// Deterministic sum of fn(i) over [0, n): per-chunk partial sums are
// accumulated in index order and combined in chunk order, so the result does
// not depend on the thread count. fn must be a pure function of i.
template <class Fn>
double chunked_sum(std::size_t n, Fn&& fn) {
  if (n == 0) return 0.0;
  std::size_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(nchunks, 0.0);
  parallel_for(nchunks, [&](std::size_t c) {
    std::size_t lo = c * kChunk;
    std::size_t hi = lo + kChunk < n ? lo + kChunk : n;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += fn(i);
    partial[c] = s;
  });
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

template <class Fn>
double chunked_sum_serial(std::size_t n, Fn&& fn) {
  if (n == 0) return 0.0;
  std::size_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(nchunks, 0.0);
  for (std::size_t c = 0; c < nchunks; ++c) {
    std::size_t lo = c * kChunk;
    std::size_t hi = lo + kChunk < n ? lo + kChunk : n;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += fn(i);
    partial[c] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

}  // namespace dps::par
