#include "dpsearch/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "dpsearch/parallel.hpp"

namespace dps {

double dot(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm2_squared(const Vector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double norm2(const Vector& v) { return std::sqrt(norm2_squared(v)); }

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols != x.size()) throw std::invalid_argument("matvec: shape mismatch");
  Vector y(a.rows, 0.0);
  // Row-parallel; each row's dot product is evaluated serially, so the
  // result is identical to the serial path for any thread count.
  par::parallel_for(a.rows, [&](std::size_t r) {
    const double* row = a.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  });
  return y;
}

Vector matvec_transposed(const Matrix& a, const Vector& x) {
  if (a.rows != x.size()) {
    throw std::invalid_argument("matvec_transposed: shape mismatch");
  }
  Vector y(a.cols, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* row = a.row(r);
    const double xr = x[r];
    for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
  }
  return y;
}

double cosine_distance(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine_distance: size mismatch");
  }
  double nu = norm2(u);
  double nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) {
    throw std::invalid_argument("cosine_distance: zero vector");
  }
  return 1.0 - dot(u, v) / (nu * nv);
}

double entropy_bits(const std::vector<std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (std::uint64_t c : counts) total += c;
  if (total == 0) {
    throw std::invalid_argument("entropy_bits: all-zero histogram");
  }
  double h = 0.0;
  const double n = static_cast<double>(total);
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

bool all_finite(const Vector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void require_finite(const Vector& v, const char* what) {
  if (!all_finite(v)) {
    throw std::runtime_error(std::string(what) + ": non-finite value");
  }
}

}  // namespace dps
