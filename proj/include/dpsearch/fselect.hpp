#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "dpsearch/dataset.hpp"
#include "dpsearch/linalg.hpp"
#include "dpsearch/rng.hpp"

namespace dps {

// Sorted unique feature indices; the sorted form is the memoization key.
using FeatureSet = std::vector<std::size_t>;

FeatureSet canonical_feature_set(FeatureSet s);

// Symmetrical uncertainty coefficients between every feature pair and
// between each feature and the label.
struct SucTable {
  Vector corr_y;   // feature-label
  Matrix corr;     // feature-feature, symmetric, unit diagonal
  bool dp_noised = false;
  double eps_h = 0.0;
  std::size_t entropy_queries = 0;  // Laplace queries spent building the table
};

// Equal-frequency binning of a numeric column into `bins` discrete codes.
std::vector<int> discretize(const Vector& values, std::size_t bins);

// Discrete codes for a dataset column: categorical columns use their category
// codes, numeric columns are binned first.
std::vector<int> column_codes(const Dataset& ds, std::size_t column,
                              std::size_t bins = 10);
std::vector<int> label_codes(const Dataset& ds, std::size_t bins = 10);

// suc(x, y) = 2 (1 - H(x,y) / (H(x) + H(y))), in [0,1].
// Returns 0 when both columns are constant.
double suc(const std::vector<int>& x, const std::vector<int>& y);

// Same, but each entropy term is released through the Laplace mechanism with
// sensitivity (2/n) log2(n); the result is clamped to [0,1].
double suc_dp(const std::vector<int>& x, const std::vector<int>& y,
              double eps_h, RngStream& rng);

// Builds all coefficients against the label column. When eps_h is set the
// table is DP-noised; pair computations run in parallel with per-pair
// substreams, so results are independent of scheduling.
SucTable build_suc_table(const Dataset& ds, std::optional<double> eps_h,
                         RngStream rng, std::size_t bins = 10);

// merit(S) = k corr_y(S) / sqrt(k + k(k-1) corr(S)) with mean aggregation.
double merit(const FeatureSet& s, const SucTable& table);

FeatureSet cfs_greedy(const FeatureSet& candidates, std::size_t k,
                      const SucTable& table);

struct CfsGaConfig {
  std::size_t pop_k = 100;
  std::size_t gens_l = 10;
  double alpha = 0.2;   // parent selection proportion
  double p_co = 0.6;
  double p_mu = 0.2;
};

FeatureSet cfs_ga(const FeatureSet& candidates, const CfsGaConfig& config,
                  const SucTable& table, RngStream rng);

// DP-training fitness: subset -> validation accuracy of a DP-trained model.
using SubsetFitness = std::function<double(const FeatureSet&)>;

struct PafsConfig {
  std::size_t pop_k = 600;
  std::size_t gens_l = 10;
  double alpha = 0.2;
  double p_co = 0.6;
  double p_mu = 0.2;
  double eps_per_training = 0.1;
  double delta_prime = 1e-6;
};

struct PafsResult {
  FeatureSet features;
  double fitness = 0.0;
  double total_epsilon = 0.0;
  std::size_t unique_trainings = 0;
};

// Genetic loop with the DP model accuracy as fitness; fitness calls are
// memoized by canonical subset, and the budget composes only over unique
// trainings.
PafsResult pafs(const FeatureSet& candidates, const PafsConfig& config,
                const SubsetFitness& fitness, RngStream rng);

FeatureSet random_subset(const FeatureSet& candidates, std::size_t size,
                         RngStream& rng);

}  // namespace dps
