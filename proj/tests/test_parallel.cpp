#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <vector>

#include "dpsearch/linalg.hpp"
#include "dpsearch/parallel.hpp"
#include "dpsearch/rng.hpp"
#include "dpsearch/theory.hpp"

namespace {

struct WorkerGuard {
  int saved = dps::par::workers();
  ~WorkerGuard() { dps::par::set_workers(saved); }
};

}  // namespace

TEST_CASE("parallel_for touches every index exactly once") {
  WorkerGuard guard;
  dps::par::set_workers(dps::par::hardware_workers());
  std::vector<std::atomic<int>> hits(1000);
  dps::par::parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
}

TEST_CASE("chunked_sum matches the serial reference bit-for-bit") {
  WorkerGuard guard;
  auto f = [](std::size_t i) {
    dps::RngStream rng = dps::derive_stream(11, "chunk").child(i);
    return std::sin(static_cast<double>(i)) * rng.next_double();
  };
  const std::size_t n = 100000;
  double serial = dps::par::chunked_sum_serial(n, f);
  dps::par::set_workers(1);
  double one = dps::par::chunked_sum(n, f);
  dps::par::set_workers(dps::par::hardware_workers());
  double many = dps::par::chunked_sum(n, f);
  CHECK(serial == one);
  CHECK(serial == many);
}

TEST_CASE("matvec result is independent of the worker count") {
  WorkerGuard guard;
  dps::RngStream rng = dps::derive_stream(12, "matvec");
  dps::Matrix a(257, 129);
  dps::Vector x(129);
  for (auto& v : a.data) v = rng.next_double() - 0.5;
  for (auto& v : x) v = rng.next_double() - 0.5;
  dps::par::set_workers(1);
  dps::Vector serial = dps::matvec(a, x);
  dps::par::set_workers(dps::par::hardware_workers());
  dps::Vector parallel = dps::matvec(a, x);
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i] == parallel[i]);
}

TEST_CASE("Monte Carlo error estimate is independent of the worker count") {
  WorkerGuard guard;
  dps::LinearInstance inst{{1.0, 0.5, 2.0}, {1.0, 1.0, 0.5}, 3.0, 1.0, 1.0};
  dps::RngStream rng = dps::derive_stream(13, "mc");
  dps::par::set_workers(1);
  auto serial = dps::mc_expected_error(dps::NoiseModel::Full, inst, 50000, rng);
  dps::par::set_workers(dps::par::hardware_workers());
  auto parallel = dps::mc_expected_error(dps::NoiseModel::Full, inst, 50000, rng);
  CHECK(serial.mean == parallel.mean);
  CHECK(serial.stderr_of_mean == parallel.stderr_of_mean);
}
