#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpsearch/linalg.hpp"
#include "dpsearch/rng.hpp"

namespace dps {

enum class ColumnKind { Numeric, Categorical };

struct ColumnMeta {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  // Observed categories, lexicographic; cells of categorical columns store
  // indices into this list.
  std::vector<std::string> categories;
};

enum class Split : std::uint8_t { None, Train, Validation, Test };

struct Dataset {
  Matrix x;                                // n x m
  Vector y;                                // class index or real value
  std::vector<ColumnMeta> columns;         // m entries
  std::vector<std::string> label_classes;  // empty for regression tasks
  std::string label_name = "label";
  std::vector<Split> split;                // n entries

  std::size_t rows() const { return x.rows; }
  std::size_t cols() const { return x.cols; }
  bool classification() const { return !label_classes.empty(); }

  std::size_t num_classes() const { return label_classes.size(); }
  std::vector<std::size_t> rows_with(Split tag) const;
  // Materialized copies.
  Dataset subset(Split tag) const;
  Dataset subset(const std::vector<std::size_t>& row_idx) const;
  Dataset select_features(const std::vector<std::size_t>& feature_idx) const;
};

// CSV with a header row, comma separators, '.' decimal, UTF-8. Missing values
// are rejected. `kinds` covers every column including the label.
Dataset load_csv(const std::string& path, const std::vector<ColumnKind>& kinds,
                 std::size_t label_column);
void save_csv(const Dataset& ds, const std::string& path);

// Replaces each listed categorical column with one indicator column per
// observed category (lexicographic order); other columns pass through.
Dataset one_hot(const Dataset& ds, const std::vector<std::size_t>& columns);

struct SplitFractions {
  double train = 0.0;
  double validation = 0.0;
  double test = 0.0;
};

// Tags disjoint row subsets of floor(n * fraction) rows each; the remainder
// stays untagged.
Dataset split_dataset(const Dataset& ds, const SplitFractions& fractions,
                      RngStream& rng);

// Labeled regression/classification task from the summation construction:
// base features are U[0,1], every base value is split into `expansion`
// nonnegative parts that sum back to it, and the binary label tells whether
// the base sum exceeds base_dim / 2.
Dataset synthetic_sum_dataset(std::size_t n, std::size_t base_dim,
                              std::size_t expansion, RngStream& rng);

struct PcaModel {
  Vector mean;                  // m
  Matrix components;            // m x k, orthonormal columns
  Vector explained_variances;   // k, nonincreasing
};

PcaModel pca_fit(const Dataset& ds, std::size_t k);
Dataset pca_transform(const PcaModel& model, const Dataset& ds);

// Per-column min-max to [0,1]; constant columns map to 0.
Dataset normalize(const Dataset& ds);

}  // namespace dps
