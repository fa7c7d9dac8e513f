#include "hardbatch/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hardbatch {

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                          std::uint64_t index) {
  constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t h = mix64(base + kGolden);
  h = mix64(h ^ (tag * kGolden));
  return mix64(h ^ (index + 0x632be59bd9b4e019ULL));
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix64(state_);
}

double Rng::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t Rng::next_int(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("Rng::next_int: n must be >= 1");
  }
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Largest multiple of `bound` representable; draws above it are rejected.
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      (std::numeric_limits<std::uint64_t>::max() % bound + 1) % bound;
  std::uint64_t x = next_u64();
  while (x > limit) {
    x = next_u64();
  }
  return static_cast<std::size_t>(x % bound);
}

double Rng::next_normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - next_uniform();
  const double u2 = next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: data length " +
                                std::to_string(data_.size()) + " != " +
                                std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("dot: length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine_similarity: length mismatch (" +
                                std::to_string(u.size()) + " vs " +
                                std::to_string(v.size()) + ")");
  }
  if (u.empty()) {
    throw std::invalid_argument("cosine_similarity: empty vectors");
  }
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero-norm input");
  }
  return dot(u, v) / (nu * nv);
}

Matrix pairwise_sq_euclidean(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("pairwise_sq_euclidean: inner dimension mismatch (" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.cols()) + ")");
  }
  std::vector<double> na(a.rows()), nb(b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) na[i] = dot(a.row(i), a.row(i));
  for (std::size_t j = 0; j < b.rows(); ++j) nb[j] = dot(b.row(j), b.row(j));
  Matrix d(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      d(i, j) = std::max(0.0, na[i] + nb[j] - 2.0 * dot(a.row(i), b.row(j)));
    }
  }
  return d;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_transposed: inner dimension mismatch");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= m.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(indices[r]) +
                              " >= " + std::to_string(m.rows()));
    }
    std::copy_n(m.row(indices[r]).begin(), m.cols(), out.row(r).begin());
  }
  return out;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace hardbatch
