#include "dpsearch/fselect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "dpsearch/accountant.hpp"
#include "dpsearch/parallel.hpp"

namespace dps {

namespace {

int max_code(const std::vector<int>& codes) {
  int m = 0;
  for (int c : codes) m = std::max(m, c);
  return m;
}

double entropy_of_codes(const std::vector<int>& codes) {
  std::vector<std::uint64_t> counts(max_code(codes) + 1, 0);
  for (int c : codes) ++counts[c];
  return entropy_bits(counts);
}

double joint_entropy(const std::vector<int>& x, const std::vector<int>& y) {
  int ny = max_code(y) + 1;
  std::vector<std::uint64_t> counts(
      static_cast<std::size_t>(max_code(x) + 1) * ny, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    ++counts[static_cast<std::size_t>(x[i]) * ny + y[i]];
  }
  return entropy_bits(counts);
}

double suc_from_entropies(double hx, double hy, double hxy) {
  double denom = hx + hy;
  if (denom <= 0.0) return 0.0;  // both columns constant: no information
  double v = 2.0 * (1.0 - hxy / denom);
  return std::clamp(v, 0.0, 1.0);
}

// add/remove-one bound on plug-in entropy, per released entropy value
double entropy_sensitivity(std::size_t n) {
  if (n < 2) return 0.0;
  double nn = static_cast<double>(n);
  return 2.0 / nn * std::log2(nn);
}

}  // namespace

FeatureSet canonical_feature_set(FeatureSet s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

std::vector<int> discretize(const Vector& values, std::size_t bins) {
  if (bins < 1) throw std::invalid_argument("discretize: bins < 1");
  Vector sorted = values;
  std::sort(sorted.begin(), sorted.end());
  // bin edges at the equal-frequency quantiles
  std::vector<double> edges;
  for (std::size_t b = 1; b < bins; ++b) {
    std::size_t idx = b * sorted.size() / bins;
    if (idx >= sorted.size()) idx = sorted.size() - 1;
    edges.push_back(sorted[idx]);
  }
  std::vector<int> codes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    codes[i] = static_cast<int>(
        std::upper_bound(edges.begin(), edges.end(), values[i]) - edges.begin());
  }
  return codes;
}

std::vector<int> column_codes(const Dataset& ds, std::size_t column,
                              std::size_t bins) {
  if (column >= ds.cols()) throw std::invalid_argument("column_codes: out of range");
  Vector col(ds.rows());
  for (std::size_t r = 0; r < ds.rows(); ++r) col[r] = ds.x.at(r, column);
  if (ds.columns[column].kind == ColumnKind::Categorical) {
    std::vector<int> codes(ds.rows());
    for (std::size_t r = 0; r < ds.rows(); ++r) codes[r] = static_cast<int>(col[r]);
    return codes;
  }
  return discretize(col, bins);
}

std::vector<int> label_codes(const Dataset& ds, std::size_t bins) {
  if (ds.classification()) {
    std::vector<int> codes(ds.rows());
    for (std::size_t r = 0; r < ds.rows(); ++r) codes[r] = static_cast<int>(ds.y[r]);
    return codes;
  }
  return discretize(ds.y, bins);
}

double suc(const std::vector<int>& x, const std::vector<int>& y) {
  if (x.empty() || x.size() != y.size()) {
    throw std::invalid_argument("suc: columns empty or length mismatch");
  }
  return suc_from_entropies(entropy_of_codes(x), entropy_of_codes(y),
                            joint_entropy(x, y));
}

double suc_dp(const std::vector<int>& x, const std::vector<int>& y,
              double eps_h, RngStream& rng) {
  if (x.empty() || x.size() != y.size()) {
    throw std::invalid_argument("suc_dp: columns empty or length mismatch");
  }
  if (!(eps_h > 0.0)) throw std::invalid_argument("suc_dp: eps_h <= 0");
  double sens = entropy_sensitivity(x.size());
  double hx = entropy_of_codes(x);
  double hy = entropy_of_codes(y);
  double hxy = joint_entropy(x, y);
  if (sens > 0.0 && std::isfinite(eps_h)) {
    double scale = sens / eps_h;
    hx += sample_laplace(rng, scale);
    hy += sample_laplace(rng, scale);
    hxy += sample_laplace(rng, scale);
  }
  return suc_from_entropies(hx, hy, hxy);
}

SucTable build_suc_table(const Dataset& ds, std::optional<double> eps_h,
                         RngStream rng, std::size_t bins) {
  std::size_t m = ds.cols();
  if (m == 0) throw std::invalid_argument("build_suc_table: no features");
  SucTable table;
  table.dp_noised = eps_h.has_value();
  table.eps_h = eps_h.value_or(0.0);
  table.corr_y.assign(m, 0.0);
  table.corr = Matrix(m, m);

  std::vector<std::vector<int>> codes(m);
  for (std::size_t j = 0; j < m; ++j) codes[j] = column_codes(ds, j, bins);
  std::vector<int> label = label_codes(ds, bins);

  par::parallel_for(m, [&](std::size_t j) {
    if (eps_h) {
      RngStream pair_rng = rng.child(j, m);  // label pairs keyed by (j, m)
      table.corr_y[j] = suc_dp(codes[j], label, *eps_h, pair_rng);
    } else {
      table.corr_y[j] = suc(codes[j], label);
    }
  });

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
  }
  par::parallel_for(pairs.size(), [&](std::size_t p) {
    auto [i, j] = pairs[p];
    double v;
    if (eps_h) {
      RngStream pair_rng = rng.child(i, j);
      v = suc_dp(codes[i], codes[j], *eps_h, pair_rng);
    } else {
      v = suc(codes[i], codes[j]);
    }
    table.corr.at(i, j) = v;
    table.corr.at(j, i) = v;
  });
  for (std::size_t i = 0; i < m; ++i) table.corr.at(i, i) = 1.0;
  table.entropy_queries = eps_h ? 3 * (m + pairs.size()) : 0;
  return table;
}

double merit(const FeatureSet& s, const SucTable& table) {
  if (s.empty()) throw std::invalid_argument("merit: empty feature set");
  double k = static_cast<double>(s.size());
  double corr_y = 0.0;
  for (std::size_t f : s) {
    if (f >= table.corr_y.size()) {
      throw std::invalid_argument("merit: feature index out of range");
    }
    corr_y += table.corr_y[f];
  }
  corr_y /= k;
  if (s.size() == 1) return corr_y;
  double pair_sum = 0.0;
  for (std::size_t a = 0; a < s.size(); ++a) {
    for (std::size_t b = a + 1; b < s.size(); ++b) {
      pair_sum += table.corr.at(s[a], s[b]);
    }
  }
  double pair_mean = pair_sum / (k * (k - 1.0) / 2.0);
  return k * corr_y / std::sqrt(k + k * (k - 1.0) * pair_mean);
}

FeatureSet cfs_greedy(const FeatureSet& candidates, std::size_t k,
                      const SucTable& table) {
  FeatureSet pool = canonical_feature_set(candidates);
  if (k > pool.size()) throw std::invalid_argument("cfs_greedy: k > |candidates|");
  FeatureSet selected;
  std::vector<bool> used(pool.size(), false);
  while (selected.size() < k) {
    double best_merit = -1.0;
    std::size_t best_pos = pool.size();
    for (std::size_t p = 0; p < pool.size(); ++p) {
      if (used[p]) continue;
      FeatureSet trial = selected;
      trial.insert(std::lower_bound(trial.begin(), trial.end(), pool[p]),
                   pool[p]);
      double v = merit(trial, table);
      if (v > best_merit) {  // ties keep the earlier (lower) feature index
        best_merit = v;
        best_pos = p;
      }
    }
    used[best_pos] = true;
    selected.insert(
        std::lower_bound(selected.begin(), selected.end(), pool[best_pos]),
        pool[best_pos]);
  }
  return selected;
}

namespace {

using Genome = std::vector<char>;  // one bit per candidate position

FeatureSet decode(const Genome& g, const FeatureSet& pool) {
  FeatureSet s;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i]) s.push_back(pool[i]);
  }
  return s;
}

bool genome_empty(const Genome& g) {
  return std::none_of(g.begin(), g.end(), [](char b) { return b != 0; });
}

void ensure_nonempty(Genome& g, RngStream& rng) {
  if (genome_empty(g)) g[rng.next_below(g.size())] = 1;
}

Genome random_genome(std::size_t m, RngStream& rng) {
  Genome g(m, 0);
  for (auto& b : g) b = rng.next_double() < 0.5 ? 1 : 0;
  ensure_nonempty(g, rng);
  return g;
}

Genome cut_point_crossover(const Genome& a, const Genome& b, RngStream& rng) {
  Genome child = a;
  if (a.size() > 1) {
    std::size_t cut = 1 + rng.next_below(a.size() - 1);
    for (std::size_t i = cut; i < a.size(); ++i) child[i] = b[i];
  }
  return child;
}

void flip_one_bit(Genome& g, RngStream& rng) {
  std::size_t i = rng.next_below(g.size());
  g[i] = g[i] ? 0 : 1;
}

// Shared rank-select-reproduce generation step (Alg-4 shape). `fitness` maps a
// genome index to its score; ranking ties break toward the lexicographically
// smaller genome for determinism.
std::vector<std::size_t> rank_desc(const std::vector<Genome>& pop,
                                   const std::vector<double>& fit) {
  std::vector<std::size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (fit[a] != fit[b]) return fit[a] > fit[b];
    return pop[a] < pop[b];
  });
  return order;
}

}  // namespace

FeatureSet cfs_ga(const FeatureSet& candidates, const CfsGaConfig& config,
                  const SucTable& table, RngStream rng) {
  FeatureSet pool = canonical_feature_set(candidates);
  if (pool.empty()) throw std::invalid_argument("cfs_ga: no candidates");
  if (config.pop_k < 1) throw std::invalid_argument("cfs_ga: pop_k < 1");
  if (config.p_co < 0 || config.p_mu < 0 || config.p_co + config.p_mu > 1.0) {
    throw std::invalid_argument("cfs_ga: invalid crossover/mutation probabilities");
  }
  if (!(config.alpha > 0.0) || config.alpha > 1.0) {
    throw std::invalid_argument("cfs_ga: alpha outside (0,1]");
  }

  std::vector<Genome> pop;
  RngStream init = rng.child(0);
  for (std::size_t i = 0; i < config.pop_k; ++i) {
    pop.push_back(random_genome(pool.size(), init));
  }

  auto fitness_of = [&](const Genome& g) {
    FeatureSet s = decode(g, pool);
    return s.empty() ? -1.0 : merit(s, table);
  };

  for (std::size_t gen = 0; gen < config.gens_l; ++gen) {
    std::vector<double> fit(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = fitness_of(pop[i]);
    auto order = rank_desc(pop, fit);

    std::size_t n_parents = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.alpha * config.pop_k + 0.5));
    std::vector<Genome> parents;
    for (std::size_t i = 0; i < n_parents && i < order.size(); ++i) {
      parents.push_back(pop[order[i]]);
    }

    RngStream breed = rng.child(gen + 1);
    std::vector<Genome> next;
    next.push_back(pop[order[0]]);  // elitism: best survives unmodified
    while (next.size() < config.pop_k) {
      std::size_t i1 = breed.next_below(parents.size());
      std::size_t i2 = i1;
      if (parents.size() > 1) {
        while (i2 == i1) i2 = breed.next_below(parents.size());
      }
      double u = breed.next_double();
      Genome child;
      if (u < config.p_co) {
        child = cut_point_crossover(parents[i1], parents[i2], breed);
      } else if (u < config.p_co + config.p_mu) {
        child = parents[i1];
        flip_one_bit(child, breed);
      } else {
        child = parents[i1];
      }
      ensure_nonempty(child, breed);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }

  std::vector<double> fit(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = fitness_of(pop[i]);
  auto order = rank_desc(pop, fit);
  return decode(pop[order[0]], pool);
}

PafsResult pafs(const FeatureSet& candidates, const PafsConfig& config,
                const SubsetFitness& fitness, RngStream rng) {
  FeatureSet pool = canonical_feature_set(candidates);
  if (pool.empty()) throw std::invalid_argument("pafs: no candidates");
  if (config.pop_k < 1) throw std::invalid_argument("pafs: pop_k < 1");

  std::map<FeatureSet, double> memo;
  auto eval_population = [&](const std::vector<Genome>& pop,
                             std::vector<double>& fit) {
    // Dedupe first so each canonical subset trains exactly once; unseen
    // subsets train in parallel.
    std::vector<FeatureSet> subsets(pop.size());
    std::vector<FeatureSet> unseen;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      subsets[i] = decode(pop[i], pool);
      if (!subsets[i].empty() && !memo.count(subsets[i])) {
        if (std::find(unseen.begin(), unseen.end(), subsets[i]) == unseen.end()) {
          unseen.push_back(subsets[i]);
        }
      }
    }
    std::vector<double> scores(unseen.size());
    par::parallel_for(unseen.size(), [&](std::size_t i) {
      scores[i] = fitness(unseen[i]);
    });
    for (std::size_t i = 0; i < unseen.size(); ++i) {
      memo.emplace(unseen[i], scores[i]);
    }
    fit.resize(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      fit[i] = subsets[i].empty() ? -1.0 : memo.at(subsets[i]);
    }
  };

  std::vector<Genome> pop;
  RngStream init = rng.child(0);
  for (std::size_t i = 0; i < config.pop_k; ++i) {
    pop.push_back(random_genome(pool.size(), init));
  }

  std::vector<double> fit;
  for (std::size_t gen = 0; gen < config.gens_l; ++gen) {
    eval_population(pop, fit);
    if (gen + 1 == config.gens_l) break;
    auto order = rank_desc(pop, fit);
    std::size_t n_parents = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.alpha * config.pop_k + 0.5));
    std::vector<Genome> parents;
    for (std::size_t i = 0; i < n_parents && i < order.size(); ++i) {
      parents.push_back(pop[order[i]]);
    }
    RngStream breed = rng.child(gen + 1);
    std::vector<Genome> next;
    next.push_back(pop[order[0]]);
    while (next.size() < config.pop_k) {
      std::size_t i1 = breed.next_below(parents.size());
      std::size_t i2 = i1;
      if (parents.size() > 1) {
        while (i2 == i1) i2 = breed.next_below(parents.size());
      }
      double u = breed.next_double();
      Genome child;
      if (u < config.p_co) {
        child = cut_point_crossover(parents[i1], parents[i2], breed);
      } else if (u < config.p_co + config.p_mu) {
        child = parents[i1];
        flip_one_bit(child, breed);
      } else {
        child = parents[i1];
      }
      ensure_nonempty(child, breed);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }

  auto order = rank_desc(pop, fit);
  PafsResult result;
  result.features = decode(pop[order[0]], pool);
  result.fitness = fit[order[0]];
  result.unique_trainings = memo.size();
  result.total_epsilon = pafs_total_budget(
      config.eps_per_training, memo.size(), config.delta_prime);
  return result;
}

FeatureSet random_subset(const FeatureSet& candidates, std::size_t size,
                         RngStream& rng) {
  FeatureSet pool = canonical_feature_set(candidates);
  if (size > pool.size()) {
    throw std::invalid_argument("random_subset: size > |candidates|");
  }
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t j = i + rng.next_below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(size);
  return canonical_feature_set(std::move(pool));
}

}  // namespace dps
