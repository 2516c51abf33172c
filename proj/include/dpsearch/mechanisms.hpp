#pragma once

#include "dpsearch/linalg.hpp"
#include "dpsearch/rng.hpp"

namespace dps {

// Global sensitivity of the released quantity.
struct SensitivityBound {
  double l2 = 0.0;
  double l1 = -1.0;  // negative means "not provided"
};

struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;

  bool pure() const { return delta == 0.0; }
  // The Gaussian-mechanism calibration below is only a certified guarantee
  // for epsilon <= 1; larger budgets are still evaluated but flagged.
  bool over_unit_epsilon() const { return epsilon > 1.0; }
};

// sigma = (sensitivity / epsilon) * sqrt(2 ln(1.25 / delta))
double gaussian_sigma(double l2_sensitivity, double epsilon, double delta);
inline double gaussian_sigma(const SensitivityBound& bound, double epsilon,
                             double delta) {
  return gaussian_sigma(bound.l2, epsilon, delta);
}

// theta + z with z ~ N(0, sigma^2 I), one independent draw per coordinate.
Vector gaussian_perturb(const Vector& theta, double sigma, RngStream& rng);

// value + Lap(sensitivity / epsilon)
double laplace_perturb(double value, double sensitivity, double epsilon,
                       RngStream& rng);

}  // namespace dps
