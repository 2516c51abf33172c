#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpsearch/accountant.hpp"
#include "dpsearch/model.hpp"
#include "dpsearch/rng.hpp"

namespace dps {

// One architectural choice and its finite value list.
struct Choice {
  std::string name;
  std::vector<std::string> values;
};

struct SearchSpace {
  std::vector<Choice> choices;

  void validate() const;
  std::size_t size() const { return choices.size(); }
  // Total number of distinct gene assignments.
  double cardinality() const;
  long find(const std::string& name) const;  // -1 when absent

  // Text format: one "name: v1 v2 v3" line per choice; '#' comments.
  static SearchSpace load(const std::string& path);
  static SearchSpace parse(const std::string& text);
};

// Gene assignment: one value index per choice.
using Genes = std::vector<std::size_t>;

struct Individual {
  Genes genes;
  std::string key;  // canonical, uniquely determined by genes

  static Individual from_genes(Genes g);
};

Individual sample_architecture(const SearchSpace& space, RngStream& rng);

// Per-gene uniform crossover.
Individual crossover(const SearchSpace& space, const Individual& a,
                     const Individual& b, RngStream& rng);

// Re-samples one uniformly chosen gene (possibly to the same value).
Individual mutate(const SearchSpace& space, Individual a, RngStream& rng);

// Generation step: parents are the top-alpha plus a random beta-proportion of
// the remainder and survive unmodified; crossover children of uniform parent
// pairs fill the remaining slots and are mutated with probability p_mu.
// `ranked` must be sorted by descending fitness. With fewer than two parents
// the step degrades to cloning plus mutation.
std::vector<Individual> evolve(const SearchSpace& space,
                               const std::vector<Individual>& ranked,
                               double alpha, double beta, double p_mu,
                               RngStream& rng);

// Realizes an FCN architecture from genes. Recognized choice names:
// num_layers, units<i>, act<i>, trainable<i> (optional), dropout (optional).
// Anything else (convolutional block/filter/kernel choices included) is a
// configuration error.
Architecture realize_fcn(const SearchSpace& space, const Genes& genes,
                         std::size_t input_dim, std::size_t num_classes,
                         double default_dropout = 0.0);

// Trains a candidate and returns its raw validation accuracy. The stream is
// derived from the individual's canonical key, so concurrent evaluation order
// cannot change any result.
using TrainAndScore = std::function<double(const Individual&, RngStream)>;

struct FitnessOracle {
  TrainAndScore train_and_score;
  std::size_t validation_size = 0;
  double eps_prime = 0.0;  // +inf disables the fitness noise
  double eps_train = 0.0;  // per-training budget, for workflow accounting
  double delta_train = 1e-5;
};

// accuracy + Lap(1/(n eps')); not clamped, ranking uses raw noised values.
double noised_fitness(const FitnessOracle& oracle, double raw_accuracy,
                      RngStream& rng);

struct SearchResult {
  Individual best;
  double best_fitness = 0.0;
  std::vector<double> fitness_trace;  // best noised fitness per generation
  std::size_t unique_trainings = 0;
  CompositionLedger ledger;
  double total_epsilon = 0.0;
};

struct PaasConfig {
  std::size_t pop_k = 10;
  std::size_t gens_l = 6;
  double alpha = 0.4;
  double beta = 0.1;
  double p_mu = 0.2;
  double delta_prime = 1e-6;  // for the advanced-composition workflow budget
};

SearchResult paas(const SearchSpace& space, const PaasConfig& config,
                  const FitnessOracle& oracle, RngStream rng);

struct RsConfig {
  std::size_t k = 400;
  // Eq-7 parameters used when eps_prime should be derived rather than given:
  // acceptable loss proportion x and failure probability delta_fail.
  double x = 0.0;  // <= 0 keeps the oracle's eps_prime
  double delta_fail = 1e-4;
};

SearchResult rs_search(const SearchSpace& space, const RsConfig& config,
                       const FitnessOracle& oracle, RngStream rng);

struct MgrsConfig {
  std::vector<std::size_t> gen_sizes{40, 20, 10};
  double p_mutate = 0.7;
  double x = 0.0;  // as in RsConfig
  double delta_fail = 1e-4;
};

SearchResult mgrs(const SearchSpace& space, const MgrsConfig& config,
                  const FitnessOracle& oracle, RngStream rng);

}  // namespace dps
