#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hardbatch {

/// Portable SplitMix64 stream. The output sequence depends only on the seed,
/// so identical seeds give identical draws on every platform.
///
/// Sub-tasks never share a generator; each one builds its own from
/// derive_seed(base, tag, index).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double next_uniform();

  /// Uniform integer in [0, n). Unbiased (rejection on the top of the range).
  std::size_t next_int(std::size_t n);

  /// Standard normal via Box-Muller; one fresh pair of uniforms per call.
  double next_normal();

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = next_int(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for an independent sub-stream: mix64 chained over (base, tag, index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                          std::uint64_t index = 0);

/// Tags for derive_seed so that streams used by different modules never alias.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSampler = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kSplit = 4;
inline constexpr std::uint64_t kSynthCenters = 5;
inline constexpr std::uint64_t kSynthPairs = 6;
inline constexpr std::uint64_t kSynthScenes = 7;
inline constexpr std::uint64_t kSynthNoise = 8;
inline constexpr std::uint64_t kProbe = 9;
}  // namespace stream

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> u);

/// dot(u,v) / (|u| |v|). Throws std::invalid_argument on zero norm or
/// mismatched lengths rather than returning NaN.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Entry (i,j) = |A_i - B_j|^2 via |a|^2 + |b|^2 - 2 a.b, clamped at 0.
Matrix pairwise_sq_euclidean(const Matrix& a, const Matrix& b);

/// A * B^T. Shapes (n x k) and (m x k) give (n x m).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// Rows of `m` selected by `indices`, in order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

bool all_finite(std::span<const double> values);

}  // namespace hardbatch
