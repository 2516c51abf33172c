// Timing comparison of the OpenMP kernels against their serial reference
// paths: matvec, Monte Carlo error estimation, and SUC table construction.
// Usage: bench_kernels [repeats]

#include <cstdio>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>

#include "dpsearch/dataset.hpp"
#include "dpsearch/fselect.hpp"
#include "dpsearch/linalg.hpp"
#include "dpsearch/parallel.hpp"
#include "dpsearch/rng.hpp"
#include "dpsearch/theory.hpp"

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <class Fn>
double time_best_of(int repeats, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    double t0 = now_s();
    fn();
    double dt = now_s() - t0;
    if (dt < best) best = dt;
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s) {
  std::printf("%-28s serial %9.4fs  parallel %9.4fs  speedup %5.2fx\n", name,
              serial_s, parallel_s, serial_s / parallel_s);
}

}  // namespace

int main(int argc, char** argv) {
  int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
  std::printf("workers available: %d\n", dps::par::hardware_workers());

  {
    dps::RngStream rng = dps::derive_stream(7, "bench/matvec");
    std::size_t n = 2048;
    dps::Matrix a(n, n);
    dps::Vector x(n);
    for (auto& v : a.data) v = rng.next_double();
    for (auto& v : x) v = rng.next_double();
    volatile double sink = 0.0;
    dps::par::set_workers(1);
    double serial = time_best_of(repeats, [&] { sink = sink + dps::matvec(a, x)[0]; });
    dps::par::set_workers(dps::par::hardware_workers());
    double parallel = time_best_of(repeats, [&] { sink = sink + dps::matvec(a, x)[0]; });
    report("matvec 2048x2048", serial, parallel);
  }

  {
    dps::LinearInstance inst{{1.0, 0.5, -0.25, 2.0}, {1.0, 1.0, 0.5, 0.5}, 3.0,
                             1.0, 1.0};
    dps::RngStream rng = dps::derive_stream(7, "bench/mc");
    dps::par::set_workers(1);
    double serial = time_best_of(repeats, [&] {
      dps::mc_expected_error(dps::NoiseModel::Full, inst, 2000000, rng);
    });
    dps::par::set_workers(dps::par::hardware_workers());
    double parallel = time_best_of(repeats, [&] {
      dps::mc_expected_error(dps::NoiseModel::Full, inst, 2000000, rng);
    });
    report("mc_expected_error 2e6", serial, parallel);
  }

  {
    dps::RngStream rng = dps::derive_stream(7, "bench/suc");
    dps::Dataset ds = dps::synthetic_sum_dataset(4000, 8, 6, rng);
    dps::par::set_workers(1);
    double serial = time_best_of(
        repeats, [&] { dps::build_suc_table(ds, std::nullopt, rng); });
    dps::par::set_workers(dps::par::hardware_workers());
    double parallel = time_best_of(
        repeats, [&] { dps::build_suc_table(ds, std::nullopt, rng); });
    report("suc_table 48 cols x 4000", serial, parallel);
  }

  return 0;
}
