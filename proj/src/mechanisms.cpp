#include "dpsearch/mechanisms.hpp"

#include <cmath>
#include <stdexcept>

namespace dps {

double gaussian_sigma(double l2_sensitivity, double epsilon, double delta) {
  if (!(l2_sensitivity > 0.0)) {
    throw std::invalid_argument("gaussian_sigma: sensitivity <= 0");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("gaussian_sigma: eps <= 0");
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::invalid_argument("gaussian_sigma: delta outside (0,1)");
  }
  return l2_sensitivity / epsilon * std::sqrt(2.0 * std::log(1.25 / delta));
}

Vector gaussian_perturb(const Vector& theta, double sigma, RngStream& rng) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_perturb: sigma < 0");
  Vector out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    out[i] = sample_gaussian(rng, theta[i], sigma);
  }
  return out;
}

double laplace_perturb(double value, double sensitivity, double epsilon,
                       RngStream& rng) {
  if (!(sensitivity > 0.0)) {
    throw std::invalid_argument("laplace_perturb: sensitivity <= 0");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("laplace_perturb: epsilon <= 0");
  }
  return value + sample_laplace(rng, sensitivity / epsilon);
}

}  // namespace dps
