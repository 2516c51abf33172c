#include "dpsearch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dps {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_numeric(const std::string& cell, std::size_t row,
                     std::size_t col) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &consumed);
  } catch (const std::exception&) {
    consumed = 0;
  }
  if (consumed != cell.size() || cell.empty()) {
    throw std::runtime_error("load_csv: row " + std::to_string(row) +
                             ", column " + std::to_string(col) +
                             ": not a number: '" + cell + "'");
  }
  return value;
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> Dataset::rows_with(Split tag) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows(); ++i) {
    if (split[i] == tag) idx.push_back(i);
  }
  return idx;
}

Dataset Dataset::subset(Split tag) const { return subset(rows_with(tag)); }

Dataset Dataset::subset(const std::vector<std::size_t>& row_idx) const {
  Dataset out;
  out.columns = columns;
  out.label_classes = label_classes;
  out.label_name = label_name;
  out.x = Matrix(row_idx.size(), cols());
  out.y.resize(row_idx.size());
  out.split.assign(row_idx.size(), Split::None);
  for (std::size_t i = 0; i < row_idx.size(); ++i) {
    std::copy(x.row(row_idx[i]), x.row(row_idx[i]) + cols(), out.x.row(i));
    out.y[i] = y[row_idx[i]];
  }
  return out;
}

Dataset Dataset::select_features(
    const std::vector<std::size_t>& feature_idx) const {
  Dataset out;
  out.label_classes = label_classes;
  out.label_name = label_name;
  out.y = y;
  out.split = split;
  out.x = Matrix(rows(), feature_idx.size());
  for (std::size_t f : feature_idx) {
    if (f >= cols()) {
      throw std::invalid_argument("select_features: index out of range");
    }
    out.columns.push_back(columns[f]);
  }
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t j = 0; j < feature_idx.size(); ++j) {
      out.x.at(r, j) = x.at(r, feature_idx[j]);
    }
  }
  return out;
}

Dataset load_csv(const std::string& path, const std::vector<ColumnKind>& kinds,
                 std::size_t label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_csv: missing header row in " + path);
  }
  auto header = split_line(line);
  if (header.size() != kinds.size()) {
    throw std::runtime_error("load_csv: header has " +
                             std::to_string(header.size()) +
                             " columns, schema has " +
                             std::to_string(kinds.size()));
  }
  if (label_column >= kinds.size()) {
    throw std::runtime_error("load_csv: label column out of range");
  }

  std::vector<std::vector<std::string>> raw;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != kinds.size()) {
      throw std::runtime_error("load_csv: row " + std::to_string(row_no) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " +
                               std::to_string(kinds.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        throw std::runtime_error("load_csv: row " + std::to_string(row_no) +
                                 ", column " + std::to_string(c) +
                                 ": missing value");
      }
    }
    raw.push_back(std::move(cells));
  }

  Dataset ds;
  std::size_t m = kinds.size() - 1;
  ds.x = Matrix(raw.size(), m);
  ds.y.resize(raw.size());
  ds.split.assign(raw.size(), Split::None);
  ds.label_name = header[label_column];

  // Feature columns keep their file order with the label removed.
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < kinds.size(); ++c) {
    if (c != label_column) feature_cols.push_back(c);
  }

  // Collect observed categories (lexicographic) per categorical column.
  std::vector<std::map<std::string, std::size_t>> cat_codes(kinds.size());
  for (std::size_t c = 0; c < kinds.size(); ++c) {
    if (kinds[c] != ColumnKind::Categorical) continue;
    for (const auto& row : raw) cat_codes[c].emplace(row[c], 0);
    std::size_t code = 0;
    for (auto& [_, v] : cat_codes[c]) v = code++;
  }

  for (std::size_t j = 0; j < feature_cols.size(); ++j) {
    std::size_t c = feature_cols[j];
    ColumnMeta meta;
    meta.name = header[c];
    meta.kind = kinds[c];
    if (kinds[c] == ColumnKind::Categorical) {
      meta.categories.resize(cat_codes[c].size());
      for (const auto& [name, code] : cat_codes[c]) {
        meta.categories[code] = name;
      }
    }
    ds.columns.push_back(std::move(meta));
  }

  if (kinds[label_column] == ColumnKind::Categorical) {
    ds.label_classes.resize(cat_codes[label_column].size());
    for (const auto& [name, code] : cat_codes[label_column]) {
      ds.label_classes[code] = name;
    }
  }

  for (std::size_t r = 0; r < raw.size(); ++r) {
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      std::size_t c = feature_cols[j];
      if (kinds[c] == ColumnKind::Categorical) {
        ds.x.at(r, j) = static_cast<double>(cat_codes[c].at(raw[r][c]));
      } else {
        ds.x.at(r, j) = parse_numeric(raw[r][c], r + 2, c);
      }
    }
    if (kinds[label_column] == ColumnKind::Categorical) {
      ds.y[r] = static_cast<double>(cat_codes[label_column].at(raw[r][label_column]));
    } else {
      ds.y[r] = parse_numeric(raw[r][label_column], r + 2, label_column);
    }
  }
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  for (const auto& col : ds.columns) out << col.name << ',';
  out << ds.label_name << '\n';
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      const auto& col = ds.columns[j];
      if (col.kind == ColumnKind::Categorical) {
        out << col.categories[static_cast<std::size_t>(ds.x.at(r, j))];
      } else {
        out << format_value(ds.x.at(r, j));
      }
      out << ',';
    }
    if (ds.classification()) {
      out << ds.label_classes[static_cast<std::size_t>(ds.y[r])];
    } else {
      out << format_value(ds.y[r]);
    }
    out << '\n';
  }
}

Dataset one_hot(const Dataset& ds, const std::vector<std::size_t>& columns) {
  std::vector<bool> encode(ds.cols(), false);
  for (std::size_t c : columns) {
    if (c >= ds.cols()) throw std::invalid_argument("one_hot: column out of range");
    if (ds.columns[c].kind != ColumnKind::Categorical) {
      throw std::invalid_argument("one_hot: column " + std::to_string(c) +
                                  " is not categorical");
    }
    encode[c] = true;
  }

  Dataset out;
  out.label_classes = ds.label_classes;
  out.label_name = ds.label_name;
  out.y = ds.y;
  out.split = ds.split;

  std::size_t m_out = 0;
  for (std::size_t c = 0; c < ds.cols(); ++c) {
    m_out += encode[c] ? ds.columns[c].categories.size() : 1;
  }
  out.x = Matrix(ds.rows(), m_out);

  std::size_t j_out = 0;
  std::vector<std::size_t> col_start(ds.cols());
  for (std::size_t c = 0; c < ds.cols(); ++c) {
    col_start[c] = j_out;
    if (encode[c]) {
      for (const auto& cat : ds.columns[c].categories) {
        ColumnMeta meta;
        meta.name = ds.columns[c].name + "=" + cat;
        meta.kind = ColumnKind::Numeric;
        out.columns.push_back(std::move(meta));
      }
      j_out += ds.columns[c].categories.size();
    } else {
      out.columns.push_back(ds.columns[c]);
      ++j_out;
    }
  }

  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.cols(); ++c) {
      if (encode[c]) {
        auto code = static_cast<std::size_t>(ds.x.at(r, c));
        out.x.at(r, col_start[c] + code) = 1.0;
      } else {
        out.x.at(r, col_start[c]) = ds.x.at(r, c);
      }
    }
  }
  return out;
}

Dataset split_dataset(const Dataset& ds, const SplitFractions& fractions,
                      RngStream& rng) {
  double total = fractions.train + fractions.validation + fractions.test;
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 ||
      total > 1.0 + 1e-12) {
    throw std::invalid_argument("split_dataset: fractions must be >= 0 and sum <= 1");
  }
  std::size_t n = ds.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = rng.next_below(i);
    std::swap(order[i - 1], order[j]);
  }
  auto n_train = static_cast<std::size_t>(fractions.train * n);
  auto n_val = static_cast<std::size_t>(fractions.validation * n);
  auto n_test = static_cast<std::size_t>(fractions.test * n);

  Dataset out = ds;
  out.split.assign(n, Split::None);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n_train; ++i) out.split[order[pos++]] = Split::Train;
  for (std::size_t i = 0; i < n_val; ++i) out.split[order[pos++]] = Split::Validation;
  for (std::size_t i = 0; i < n_test; ++i) out.split[order[pos++]] = Split::Test;
  return out;
}

Dataset synthetic_sum_dataset(std::size_t n, std::size_t base_dim,
                              std::size_t expansion, RngStream& rng) {
  if (expansion == 0) {
    throw std::invalid_argument("synthetic_sum_dataset: expansion must be >= 1");
  }
  std::size_t m = base_dim * expansion;
  Dataset ds;
  ds.x = Matrix(n, m);
  ds.y.resize(n);
  ds.split.assign(n, Split::None);
  ds.label_classes = {"0", "1"};
  for (std::size_t j = 0; j < m; ++j) {
    ColumnMeta meta;
    meta.name = "f" + std::to_string(j);
    ds.columns.push_back(std::move(meta));
  }

  // One substream per (row, base feature): the base values are identical for
  // every expansion factor, so datasets of different input sizes describe the
  // same underlying rows.
  std::vector<double> parts(expansion);
  for (std::size_t r = 0; r < n; ++r) {
    double base_sum = 0.0;
    for (std::size_t b = 0; b < base_dim; ++b) {
      RngStream cell = rng.child(r, b);
      double v = cell.next_double();
      base_sum += v;
      if (expansion == 1) {
        ds.x.at(r, b) = v;
        continue;
      }
      // Dirichlet(1,...,1) proportions; equal parts would make the expanded
      // columns exactly collinear and the optimum non-unique.
      double s = 0.0;
      for (std::size_t t = 0; t < expansion; ++t) {
        parts[t] = -std::log(cell.next_double_open());
        s += parts[t];
      }
      for (std::size_t t = 0; t < expansion; ++t) {
        ds.x.at(r, b * expansion + t) = v * parts[t] / s;
      }
    }
    ds.y[r] = base_sum > static_cast<double>(base_dim) / 2.0 ? 1.0 : 0.0;
  }
  return ds;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Plenty for the
// small m this toolkit works at.
void jacobi_eigen(Matrix a, Vector& eigenvalues, Matrix& eigenvectors) {
  std::size_t m = a.rows;
  eigenvectors = Matrix(m, m);
  for (std::size_t i = 0; i < m; ++i) eigenvectors.at(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) off += a.at(p, q) * a.at(p, q);
    }
    if (off < 1e-22) break;
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        double apq = a.at(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        double app = a.at(p, p);
        double aqq = a.at(q, q);
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0 ? 1.0 : -1.0) /
                   (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        for (std::size_t i = 0; i < m; ++i) {
          double aip = a.at(i, p);
          double aiq = a.at(i, q);
          a.at(i, p) = c * aip - s * aiq;
          a.at(i, q) = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < m; ++i) {
          double api = a.at(p, i);
          double aqi = a.at(q, i);
          a.at(p, i) = c * api - s * aqi;
          a.at(q, i) = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < m; ++i) {
          double vip = eigenvectors.at(i, p);
          double viq = eigenvectors.at(i, q);
          eigenvectors.at(i, p) = c * vip - s * viq;
          eigenvectors.at(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  eigenvalues.resize(m);
  for (std::size_t i = 0; i < m; ++i) eigenvalues[i] = a.at(i, i);
}

}  // namespace

PcaModel pca_fit(const Dataset& ds, std::size_t k) {
  std::size_t n = ds.rows();
  std::size_t m = ds.cols();
  if (k > m) throw std::invalid_argument("pca_fit: k > number of features");
  if (n < 2) throw std::invalid_argument("pca_fit: need at least 2 rows");
  for (const auto& col : ds.columns) {
    if (col.kind != ColumnKind::Numeric) {
      throw std::invalid_argument("pca_fit: requires numeric features");
    }
  }

  PcaModel model;
  model.mean.assign(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) model.mean[j] += ds.x.at(r, j);
  }
  for (double& v : model.mean) v /= static_cast<double>(n);

  Matrix cov(m, m);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      double xi = ds.x.at(r, i) - model.mean[i];
      for (std::size_t j = i; j < m; ++j) {
        cov.at(i, j) += xi * (ds.x.at(r, j) - model.mean[j]);
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      cov.at(i, j) /= static_cast<double>(n - 1);
      cov.at(j, i) = cov.at(i, j);
    }
  }

  Vector eigenvalues;
  Matrix eigenvectors;
  jacobi_eigen(cov, eigenvalues, eigenvectors);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return eigenvalues[a] > eigenvalues[b];
  });

  model.components = Matrix(m, k);
  model.explained_variances.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t src = order[c];
    model.explained_variances[c] = eigenvalues[src];
    // Deterministic sign: the largest-magnitude coordinate is positive.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < m; ++i) {
      if (std::fabs(eigenvectors.at(i, src)) >
          std::fabs(eigenvectors.at(arg, src))) {
        arg = i;
      }
    }
    double sign = eigenvectors.at(arg, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      model.components.at(i, c) = sign * eigenvectors.at(i, src);
    }
  }
  return model;
}

Dataset pca_transform(const PcaModel& model, const Dataset& ds) {
  if (ds.cols() != model.mean.size()) {
    throw std::invalid_argument("pca_transform: feature count mismatch");
  }
  std::size_t k = model.components.cols;
  Dataset out;
  out.label_classes = ds.label_classes;
  out.label_name = ds.label_name;
  out.y = ds.y;
  out.split = ds.split;
  out.x = Matrix(ds.rows(), k);
  for (std::size_t c = 0; c < k; ++c) {
    ColumnMeta meta;
    meta.name = "pc" + std::to_string(c);
    out.columns.push_back(std::move(meta));
  }
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < ds.cols(); ++j) {
        s += (ds.x.at(r, j) - model.mean[j]) * model.components.at(j, c);
      }
      out.x.at(r, c) = s;
    }
  }
  return out;
}

Dataset normalize(const Dataset& ds) {
  Dataset out = ds;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    if (ds.columns[j].kind != ColumnKind::Numeric) continue;
    double lo = ds.x.at(0, j);
    double hi = lo;
    for (std::size_t r = 1; r < ds.rows(); ++r) {
      lo = std::min(lo, ds.x.at(r, j));
      hi = std::max(hi, ds.x.at(r, j));
    }
    double range = hi - lo;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      out.x.at(r, j) = range == 0.0 ? 0.0 : (ds.x.at(r, j) - lo) / range;
    }
  }
  return out;
}

}  // namespace dps
