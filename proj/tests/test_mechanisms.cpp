#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dpsearch/mechanisms.hpp"
#include "support/oracles.hpp"

using dps::RngStream;
using dps::derive_stream;

TEST_CASE("gaussian sigma calibration") {
  CHECK(dps::gaussian_sigma(1, 1, 1e-5) ==
        doctest::Approx(4.844805262605389).epsilon(1e-12));
  CHECK(dps::gaussian_sigma(2, 1, 1e-5) ==
        doctest::Approx(9.689610525210778).epsilon(1e-12));
  CHECK(dps::gaussian_sigma(1, 2, 1e-5) ==
        doctest::Approx(4.844805262605389 / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(dps::gaussian_sigma(1, 0, 1e-5), std::invalid_argument);
  CHECK_THROWS_AS(dps::gaussian_sigma(1, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(dps::gaussian_sigma(0, 1, 1e-5), std::invalid_argument);
}

TEST_CASE("gaussian sigma is homogeneous in sensitivity and inverse in eps") {
  RngStream rng = derive_stream(21, "homog");
  for (int i = 0; i < 50; ++i) {
    double sens = 0.1 + rng.next_double() * 5;
    double eps = 0.1 + rng.next_double() * 3;
    double delta = 1e-7 + rng.next_double() * 0.01;
    double scale = 0.5 + rng.next_double() * 4;
    double base = dps::gaussian_sigma(sens, eps, delta);
    CHECK(dps::gaussian_sigma(scale * sens, eps, delta) ==
          doctest::Approx(scale * base).epsilon(1e-12));
    CHECK(dps::gaussian_sigma(sens, scale * eps, delta) ==
          doctest::Approx(base / scale).epsilon(1e-12));
  }
}

TEST_CASE("gaussian perturbation") {
  SUBCASE("zero sigma is the identity") {
    RngStream rng = derive_stream(22, "gp0");
    dps::Vector theta{1.0, -2.0, 3.0};
    CHECK(dps::gaussian_perturb(theta, 0.0, rng) == theta);
  }
  SUBCASE("expected squared noise norm is sigma^2 m") {
    struct Case { std::size_t m; double sigma; double expect; double tol; };
    for (auto c : {Case{100, 1.0, 100.0, 0.01}, Case{10, 2.0, 40.0, 0.02}}) {
      dps::Vector theta(c.m, 0.5);
      RngStream root = derive_stream(23, "gpnorm");
      const int trials = 100000;
      double sum = 0.0;
      for (int t = 0; t < trials; ++t) {
        RngStream rng = root.child(t, c.m);
        dps::Vector noised = dps::gaussian_perturb(theta, c.sigma, rng);
        double sq = 0.0;
        for (std::size_t i = 0; i < c.m; ++i) {
          double d = noised[i] - theta[i];
          sq += d * d;
        }
        sum += sq;
      }
      CHECK(sum / trials == doctest::Approx(c.expect).epsilon(c.tol));
    }
  }
  SUBCASE("squared noise norm follows Gamma(m/2, 2 sigma^2)") {
    const std::size_t m = 4;
    const double sigma = 1.5;
    dps::Vector theta(m, 0.0);
    RngStream root = derive_stream(24, "gpks");
    const int trials = 100000;
    std::vector<double> samples(trials);
    for (int t = 0; t < trials; ++t) {
      RngStream rng = root.child(t);
      dps::Vector noised = dps::gaussian_perturb(theta, sigma, rng);
      samples[t] = dps::norm2_squared(noised);
    }
    double shape = m / 2.0;
    double scale = 2.0 * sigma * sigma;
    double d = oracle::ks_statistic(std::move(samples), [&](double x) {
      return oracle::gamma_p(shape, x / scale);
    });
    // two-sided KS critical value at level 0.01
    CHECK(d < 1.628 / std::sqrt(static_cast<double>(trials)));
  }
}

TEST_CASE("laplace perturbation") {
  SUBCASE("argument validation") {
    RngStream rng = derive_stream(25, "lp");
    CHECK_THROWS_AS(dps::laplace_perturb(1.0, 0.0, 1.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(dps::laplace_perturb(1.0, 1.0, 0.0, rng), std::invalid_argument);
  }
  SUBCASE("noise scale sensitivity/epsilon, validation-accuracy setting") {
    // sensitivity 1/5000 at eps' = 0.02 gives scale 0.01
    RngStream root = derive_stream(26, "lpscale");
    const int trials = 200000;
    double sum_abs = 0.0;
    std::vector<double> noise(trials);
    for (int t = 0; t < trials; ++t) {
      RngStream rng = root.child(t);
      double out = dps::laplace_perturb(0.9, 1.0 / 5000.0, 0.02, rng);
      noise[t] = out - 0.9;
      sum_abs += std::fabs(noise[t]);
    }
    CHECK(sum_abs / trials == doctest::Approx(0.01).epsilon(0.02));
    std::nth_element(noise.begin(), noise.begin() + trials / 2, noise.end());
    CHECK(std::fabs(noise[trials / 2]) < 3.0 * 0.01 / std::sqrt(trials));
  }
  SUBCASE("huge epsilon returns nearly the value") {
    RngStream rng = derive_stream(27, "lpinf");
    CHECK(dps::laplace_perturb(0.9, 1.0, 1e12, rng) ==
          doctest::Approx(0.9).epsilon(1e-9));
  }
  SUBCASE("deterministic under an identical stream") {
    RngStream a = derive_stream(28, "lpdet");
    RngStream b = derive_stream(28, "lpdet");
    CHECK(dps::laplace_perturb(0.5, 0.1, 0.2, a) ==
          dps::laplace_perturb(0.5, 0.1, 0.2, b));
  }
}

TEST_CASE("sensitivity bound carries the L2 term") {
  dps::SensitivityBound bound{2.0, -1.0};
  CHECK(dps::gaussian_sigma(bound, 1.0, 1e-5) ==
        doctest::Approx(dps::gaussian_sigma(2.0, 1.0, 1e-5)));
}

TEST_CASE("privacy budget flags") {
  dps::PrivacyBudget pure{0.5, 0.0};
  CHECK(pure.pure());
  CHECK_FALSE(pure.over_unit_epsilon());
  dps::PrivacyBudget big{2.5, 1e-5};
  CHECK_FALSE(big.pure());
  CHECK(big.over_unit_epsilon());
}
