#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpsearch/dataset.hpp"
#include "dpsearch/linalg.hpp"
#include "dpsearch/model.hpp"
#include "dpsearch/rng.hpp"

namespace dps {

// Linear model instance for the output-perturbation error analysis. The
// "reduced" model drops the last coefficient and receives noise of std
// sigma_prime on the remaining ones.
struct LinearInstance {
  Vector theta;
  Vector x;
  double y = 0.0;
  double sigma = 0.0;
  double sigma_prime = 0.0;
};

// (y - theta . x)^2
double squared_error(const Vector& theta, const Vector& x, double y);

// c^2 + sigma^2 |x|^2 with c the clean residual.
double expected_dp_error_full(const LinearInstance& inst);

// c^2 + 2 c theta_m x_m + (theta_m x_m)^2 + sigma'^2 |x'|^2, where x' zeroes
// the last coordinate.
double expected_dp_error_reduced(const LinearInstance& inst);

// (sqrt(c^2 + d) - |c|) / |x_m| with d = (sigma |x|)^2 - (sigma' |x'|)^2;
// 0 when c^2 + d < 0 (the reduced model is never better). x_m must be nonzero.
double lemma1_threshold(const LinearInstance& inst);

enum class NoiseModel { Full, Reduced };

struct McResult {
  double mean = 0.0;
  double stderr_of_mean = 0.0;
};

// Monte Carlo estimate of the expected squared error under Gaussian output
// perturbation; trials run on per-trial substreams with a fixed reduction
// order, so the estimate is reproducible for any worker count.
McResult mc_expected_error(NoiseModel which, const LinearInstance& inst,
                           std::size_t trials, RngStream rng);

// err_dp - err_nonprivate; negative values are meaningful.
double privacy_cost(double err_dp, double err_nonprivate);

// (epsilon, metric) samples on a strictly increasing epsilon grid.
struct AccuracyCurve {
  std::vector<double> epsilons;
  std::vector<double> metrics;

  void validate() const;
};

AccuracyCurve load_curve_csv(const std::string& path);
void save_curve_csv(const AccuracyCurve& curve, const std::string& path);

struct CrossoverResult {
  enum class Kind { Value, Infinity, None };
  Kind kind = Kind::None;
  double grid_epsilon = 0.0;     // largest grid eps where the simple model wins
  double refined_epsilon = 0.0;  // linear-interpolation refinement
  std::vector<double> sign_changes;  // every interpolated crossing
};

// Largest grid epsilon at which the simple curve's metric strictly exceeds
// the complex one's; Infinity when it wins everywhere, None (diagnostic) when
// it never wins. Grids must match.
CrossoverResult crossover_epsilon(const AccuracyCurve& simple,
                                  const AccuracyCurve& complex_curve);

struct EpsVsNFit {
  double alpha = 0.0;
  double beta = 0.0;
  double residual = 0.0;  // RMS residual in exp(eps) space
  bool alpha_clamped = false;
};

// Least-squares fit of exp(eps) = alpha + beta / n; alpha >= 1 enforced by
// clamping (flagged).
EpsVsNFit fit_eps_vs_n(const std::vector<std::pair<double, double>>& points);

// Per-epoch cosine distance between DP-SGD and SGD parameter trajectories
// started from the same initialization and shuffle streams.
std::vector<double> convergence_trace(const Architecture& arch,
                                      const Dataset& train,
                                      const TrainConfig& dp_config,
                                      const TrainConfig& sgd_config,
                                      std::uint64_t seed);

}  // namespace dps
