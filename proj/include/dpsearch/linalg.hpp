#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dps {

using Vector = std::vector<double>;

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }
};

double dot(const Vector& u, const Vector& v);
double norm2(const Vector& v);
double norm2_squared(const Vector& v);

// y = A x
Vector matvec(const Matrix& a, const Vector& x);
// y = A^T x
Vector matvec_transposed(const Matrix& a, const Vector& x);

// 1 - u.v / (|u| |v|), in [0, 2]. Throws on zero vectors.
double cosine_distance(const Vector& u, const Vector& v);

// Shannon entropy (bits) of a histogram of nonnegative counts, with the
// 0 log 0 := 0 convention. Throws if every count is zero.
double entropy_bits(const std::vector<std::uint64_t>& counts);

// Checked mode: throws if any element is NaN or Inf.
void require_finite(const Vector& v, const char* what);
bool all_finite(const Vector& v);

}  // namespace dps
