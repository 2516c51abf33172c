#include "dpsearch/asearch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dpsearch/parallel.hpp"

namespace dps {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool parse_size(const std::string& s, std::size_t& out) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) return false;
    out = static_cast<std::size_t>(v);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

void SearchSpace::validate() const {
  if (choices.empty()) throw std::invalid_argument("SearchSpace: no choices");
  for (const auto& c : choices) {
    if (c.values.empty()) {
      throw std::invalid_argument("SearchSpace: choice '" + c.name +
                                  "' has no values");
    }
  }
  for (std::size_t i = 0; i < choices.size(); ++i) {
    for (std::size_t j = i + 1; j < choices.size(); ++j) {
      if (choices[i].name == choices[j].name) {
        throw std::invalid_argument("SearchSpace: duplicate choice '" +
                                    choices[i].name + "'");
      }
    }
  }
}

double SearchSpace::cardinality() const {
  double n = 1.0;
  for (const auto& c : choices) n *= static_cast<double>(c.values.size());
  return n;
}

long SearchSpace::find(const std::string& name) const {
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (choices[i].name == name) return static_cast<long>(i);
  }
  return -1;
}

SearchSpace SearchSpace::parse(const std::string& text) {
  SearchSpace space;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto colon = line.find(':');
    if (colon == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) continue;
      throw std::invalid_argument("SearchSpace: bad line '" + line + "'");
    }
    Choice choice;
    {
      std::istringstream name_in(line.substr(0, colon));
      name_in >> choice.name;
    }
    std::istringstream values_in(line.substr(colon + 1));
    std::string v;
    while (values_in >> v) choice.values.push_back(v);
    space.choices.push_back(std::move(choice));
  }
  space.validate();
  return space;
}

SearchSpace SearchSpace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("SearchSpace: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

Individual Individual::from_genes(Genes g) {
  std::string key;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) key.push_back('.');
    key += std::to_string(g[i]);
  }
  return {std::move(g), std::move(key)};
}

Individual sample_architecture(const SearchSpace& space, RngStream& rng) {
  Genes g(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    g[i] = rng.next_below(space.choices[i].values.size());
  }
  return Individual::from_genes(std::move(g));
}

Individual crossover(const SearchSpace& space, const Individual& a,
                     const Individual& b, RngStream& rng) {
  if (a.genes.size() != space.size() || b.genes.size() != space.size()) {
    throw std::invalid_argument("crossover: search space mismatch");
  }
  Genes g(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    g[i] = rng.next_double() < 0.5 ? a.genes[i] : b.genes[i];
  }
  return Individual::from_genes(std::move(g));
}

Individual mutate(const SearchSpace& space, Individual a, RngStream& rng) {
  if (a.genes.size() != space.size()) {
    throw std::invalid_argument("mutate: search space mismatch");
  }
  std::size_t choice = rng.next_below(space.size());
  a.genes[choice] = rng.next_below(space.choices[choice].values.size());
  return Individual::from_genes(std::move(a.genes));
}

std::vector<Individual> evolve(const SearchSpace& space,
                               const std::vector<Individual>& ranked,
                               double alpha, double beta, double p_mu,
                               RngStream& rng) {
  if (ranked.empty()) throw std::invalid_argument("evolve: empty population");
  if (alpha < 0 || beta < 0 || alpha + beta > 1.0 + 1e-12) {
    throw std::invalid_argument("evolve: alpha/beta outside [0,1] with alpha+beta<=1");
  }
  const std::size_t n = ranked.size();
  auto n_top = static_cast<std::size_t>(alpha * n + 0.5);
  auto n_rand = static_cast<std::size_t>(beta * n + 0.5);
  if (n_top > n) n_top = n;

  std::vector<Individual> parents(ranked.begin(), ranked.begin() + n_top);
  // beta-proportion sampled uniformly from the non-top remainder
  std::vector<std::size_t> rest(n - n_top);
  std::iota(rest.begin(), rest.end(), n_top);
  for (std::size_t i = 0; i < n_rand && !rest.empty(); ++i) {
    std::size_t j = rng.next_below(rest.size());
    parents.push_back(ranked[rest[j]]);
    rest.erase(rest.begin() + j);
  }

  // Parents survive unmodified; crossover children fill the remaining slots.
  std::vector<Individual> next = parents;
  next.resize(std::min(next.size(), n));
  std::size_t first_child = next.size();
  if (parents.size() < 2) {
    const Individual& base = parents.empty() ? ranked.front() : parents.front();
    while (next.size() < n) next.push_back(base);
  } else {
    while (next.size() < n) {
      const Individual& a1 = parents[rng.next_below(parents.size())];
      const Individual& a2 = parents[rng.next_below(parents.size())];
      next.push_back(crossover(space, a1, a2, rng));
    }
  }
  for (std::size_t i = first_child; i < next.size(); ++i) {
    if (rng.next_double() < p_mu) next[i] = mutate(space, std::move(next[i]), rng);
  }
  return next;
}

Architecture realize_fcn(const SearchSpace& space, const Genes& genes,
                         std::size_t input_dim, std::size_t num_classes,
                         double default_dropout) {
  if (genes.size() != space.size()) {
    throw std::invalid_argument("realize_fcn: gene count mismatch");
  }
  auto value_of = [&](long idx) -> const std::string& {
    return space.choices[idx].values[genes[idx]];
  };

  for (const auto& choice : space.choices) {
    const std::string n = lower(choice.name);
    bool known = n == "num_layers" || n == "dropout";
    for (const char* prefix : {"units", "act", "trainable"}) {
      if (n.rfind(prefix, 0) == 0) {
        std::size_t layer_no;
        if (parse_size(n.substr(std::string(prefix).size()), layer_no) &&
            layer_no >= 1) {
          known = true;
        }
      }
    }
    if (!known) {
      for (const char* cnn : {"block", "filter", "kernel", "conv", "pool"}) {
        if (n.find(cnn) != std::string::npos) {
          throw std::invalid_argument(
              "realize_fcn: choice '" + choice.name +
              "' describes a convolutional search space, which is unsupported");
        }
      }
      throw std::invalid_argument("realize_fcn: unsupported architectural choice '" +
                                  choice.name + "'");
    }
  }

  long nl_idx = space.find("num_layers");
  if (nl_idx < 0) throw std::invalid_argument("realize_fcn: missing 'num_layers'");
  std::size_t num_layers;
  if (!parse_size(value_of(nl_idx), num_layers) || num_layers == 0) {
    throw std::invalid_argument("realize_fcn: bad num_layers value");
  }

  double dropout = default_dropout;
  if (long d_idx = space.find("dropout"); d_idx >= 0) {
    dropout = std::stod(value_of(d_idx));
  }

  Architecture arch;
  arch.input_dim = input_dim;
  arch.task = Task::Classification;
  for (std::size_t layer = 1; layer <= num_layers; ++layer) {
    long u_idx = space.find("units" + std::to_string(layer));
    long a_idx = space.find("act" + std::to_string(layer));
    if (u_idx < 0 || a_idx < 0) {
      throw std::invalid_argument("realize_fcn: missing units/act for layer " +
                                  std::to_string(layer));
    }
    LayerSpec spec;
    if (!parse_size(value_of(u_idx), spec.units) || spec.units == 0) {
      throw std::invalid_argument("realize_fcn: bad units value");
    }
    spec.activation = activation_from_name(lower(value_of(a_idx)));
    spec.dropout_after = dropout;
    if (long t_idx = space.find("trainable" + std::to_string(layer)); t_idx >= 0) {
      const std::string v = lower(value_of(t_idx));
      spec.trainable = v == "true" || v == "1" || v == "yes";
    }
    arch.layers.push_back(spec);
  }
  LayerSpec out;
  out.units = num_classes;
  out.activation = Activation::Softmax;
  arch.layers.push_back(out);
  arch.validate();
  return arch;
}

double noised_fitness(const FitnessOracle& oracle, double raw_accuracy,
                      RngStream& rng) {
  if (oracle.validation_size == 0) {
    throw std::invalid_argument("noised_fitness: empty validation set");
  }
  if (std::isinf(oracle.eps_prime)) return raw_accuracy;
  if (!(oracle.eps_prime > 0.0)) {
    throw std::invalid_argument("noised_fitness: eps' must be positive");
  }
  double scale =
      1.0 / (static_cast<double>(oracle.validation_size) * oracle.eps_prime);
  return raw_accuracy + sample_laplace(rng, scale);
}

namespace {

// Shared memoized evaluation: one training and one fitness-noise draw per
// canonical key per run, both on key-derived streams.
class MemoizedFitness {
 public:
  MemoizedFitness(const FitnessOracle& oracle, RngStream root)
      : oracle_(oracle), root_(root) {}

  void set_eps_prime(double eps_prime) { eps_prime_ = eps_prime; }

  // Evaluates any unseen keys in `pop` (in parallel) and returns the newly
  // trained keys in sorted order.
  std::vector<std::string> ensure_evaluated(const std::vector<Individual>& pop) {
    std::vector<const Individual*> unseen;
    for (const auto& ind : pop) {
      if (memo_.count(ind.key)) continue;
      bool queued = false;
      for (const auto* u : unseen) queued |= u->key == ind.key;
      if (!queued) unseen.push_back(&ind);
    }
    std::vector<double> scores(unseen.size());
    par::parallel_for(unseen.size(), [&](std::size_t i) {
      const Individual& ind = *unseen[i];
      std::uint64_t h = fnv1a64(ind.key);
      double raw = oracle_.train_and_score(ind, root_.child(h, 0xA));
      FitnessOracle noise_view = oracle_;
      noise_view.eps_prime = eps_prime_;
      RngStream noise_rng = root_.child(h, 0xB);
      scores[i] = noised_fitness(noise_view, raw, noise_rng);
    });
    std::vector<std::string> fresh;
    for (std::size_t i = 0; i < unseen.size(); ++i) {
      memo_.emplace(unseen[i]->key, scores[i]);
      fresh.push_back(unseen[i]->key);
    }
    std::sort(fresh.begin(), fresh.end());
    return fresh;
  }

  double fitness(const Individual& ind) const { return memo_.at(ind.key); }
  std::size_t unique_trainings() const { return memo_.size(); }

 private:
  const FitnessOracle& oracle_;
  RngStream root_;
  double eps_prime_ = 0.0;
  std::map<std::string, double> memo_;
};

void rank_by_fitness(std::vector<Individual>& pop, const MemoizedFitness& memo) {
  std::sort(pop.begin(), pop.end(), [&](const Individual& a, const Individual& b) {
    double fa = memo.fitness(a);
    double fb = memo.fitness(b);
    if (fa != fb) return fa > fb;
    return a.key < b.key;  // earlier canonical key wins ties
  });
}

void record_trainings(CompositionLedger& ledger,
                      const std::vector<std::string>& keys,
                      const FitnessOracle& oracle) {
  for (const auto& key : keys) {
    ledger.append({"train:" + key, oracle.eps_train, oracle.delta_train, true});
  }
}

}  // namespace

SearchResult paas(const SearchSpace& space, const PaasConfig& config,
                  const FitnessOracle& oracle, RngStream rng) {
  space.validate();
  if (config.pop_k < 1) throw std::invalid_argument("paas: pop_k < 1");
  if (config.gens_l < 1) throw std::invalid_argument("paas: gens_l < 1");

  MemoizedFitness memo(oracle, rng);
  memo.set_eps_prime(oracle.eps_prime);
  SearchResult result;

  RngStream sample_rng = rng.child(0, 0x5);
  std::vector<Individual> pop;
  for (std::size_t i = 0; i < config.pop_k; ++i) {
    pop.push_back(sample_architecture(space, sample_rng));
  }

  for (std::size_t gen = 0; gen < config.gens_l; ++gen) {
    auto fresh = memo.ensure_evaluated(pop);
    record_trainings(result.ledger, fresh, oracle);
    rank_by_fitness(pop, memo);
    result.fitness_trace.push_back(memo.fitness(pop.front()));
    if (gen + 1 < config.gens_l) {
      RngStream evolve_rng = rng.child(gen + 1, 0x6);
      pop = evolve(space, pop, config.alpha, config.beta, config.p_mu,
                   evolve_rng);
    }
  }
  result.best = pop.front();
  result.best_fitness = memo.fitness(pop.front());
  result.unique_trainings = memo.unique_trainings();
  result.total_epsilon =
      oracle.eps_train > 0.0
          ? advanced_composition(oracle.eps_train, result.unique_trainings,
                                 config.delta_prime)
          : 0.0;
  return result;
}

namespace {

SearchResult randomized_core(const SearchSpace& space,
                             const std::vector<std::size_t>& gen_sizes,
                             double p_mutate, double x, double delta_fail,
                             const FitnessOracle& oracle, RngStream rng) {
  space.validate();
  if (gen_sizes.empty()) throw std::invalid_argument("search: no generations");
  for (std::size_t k : gen_sizes) {
    if (k == 0) throw std::invalid_argument("search: generation size 0");
  }
  if (p_mutate < 0.0 || p_mutate > 1.0) {
    throw std::invalid_argument("search: p_mutate outside [0,1]");
  }

  MemoizedFitness memo(oracle, rng);
  SearchResult result;
  std::vector<double> generation_budgets;

  const Individual* best = nullptr;
  for (std::size_t gen = 0; gen < gen_sizes.size(); ++gen) {
    double eps_prime = oracle.eps_prime;
    if (x > 0.0) {
      eps_prime =
          rs_epsilon_prime(x, oracle.validation_size, gen_sizes[gen], delta_fail);
    }
    memo.set_eps_prime(eps_prime);

    RngStream gen_rng = rng.child(gen, 0x7);
    std::vector<Individual> pop;
    for (std::size_t i = 0; i < gen_sizes[gen]; ++i) {
      if (gen == 0 || best == nullptr) {
        pop.push_back(sample_architecture(space, gen_rng));
      } else if (gen_rng.next_double() < p_mutate) {
        pop.push_back(mutate(space, *best, gen_rng));
      } else {
        pop.push_back(sample_architecture(space, gen_rng));
      }
    }

    auto fresh = memo.ensure_evaluated(pop);
    record_trainings(result.ledger, fresh, oracle);
    rank_by_fitness(pop, memo);
    result.fitness_trace.push_back(memo.fitness(pop.front()));
    if (best == nullptr || memo.fitness(pop.front()) > result.best_fitness ||
        (memo.fitness(pop.front()) == result.best_fitness &&
         pop.front().key < result.best.key)) {
      result.best = pop.front();
      result.best_fitness = memo.fitness(pop.front());
      best = &result.best;
    }
    if (oracle.eps_train > 0.0) {
      generation_budgets.push_back(rs_total_budget(
          oracle.eps_train, std::isinf(eps_prime) ? 0.0 : eps_prime));
    }
  }

  result.unique_trainings = memo.unique_trainings();
  // Non-private fitness (eps_train == 0) has no DP budget to account.
  result.total_epsilon =
      generation_budgets.empty() ? 0.0 : mgrs_total_budget(generation_budgets);
  return result;
}

}  // namespace

SearchResult rs_search(const SearchSpace& space, const RsConfig& config,
                       const FitnessOracle& oracle, RngStream rng) {
  if (config.k < 1) throw std::invalid_argument("rs_search: k < 1");
  return randomized_core(space, {config.k}, 0.0, config.x, config.delta_fail,
                         oracle, rng);
}

SearchResult mgrs(const SearchSpace& space, const MgrsConfig& config,
                  const FitnessOracle& oracle, RngStream rng) {
  return randomized_core(space, config.gen_sizes, config.p_mutate, config.x,
                         config.delta_fail, oracle, rng);
}

}  // namespace dps
