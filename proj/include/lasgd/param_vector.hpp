#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lasgd {

/// Raised when an operation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when arithmetic partners disagree on dimension.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/**
 * Flat vector of 64-bit model parameters (also used for gradients and the
 * center model). The dimension is fixed at construction.
 *
 * Reductions over a vector always run in ascending index order so repeated
 * runs are bit-identical.
 */
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0);
  explicit ParamVector(std::vector<double> values);
  ParamVector(std::initializer_list<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  bool all_finite() const noexcept;
  /// Throws NumericError naming `what` if any entry is NaN or Inf.
  void require_finite(std::string_view what) const;

  /// this += scale * other, in place.
  ParamVector& add_scaled(double scale, const ParamVector& other);
  ParamVector& scale(double factor);

  double sum() const noexcept;
  double max_abs() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

void require_same_dim(const ParamVector& a, const ParamVector& b, std::string_view what);

/// Elementwise a*u + b*v. Inputs are not modified.
ParamVector blend(double a, const ParamVector& u, double b, const ParamVector& v);

double dot(const ParamVector& a, const ParamVector& b);

/// Elementwise mean, summed in list order, divided once by the count.
ParamVector mean_of(std::span<const ParamVector> vectors);

/// Half-open index range [begin, end).
struct ChunkRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const ChunkRange&, const ChunkRange&) = default;
};

/**
 * Balanced partition of [0, dim) into contiguous chunks. The first
 * dim % num_chunks chunks hold one extra element. When num_chunks > dim the
 * trailing chunks are empty, but the ranges still cover [0, dim).
 */
class ChunkSpec {
 public:
  ChunkSpec() = default;
  explicit ChunkSpec(std::vector<ChunkRange> bounds, std::size_t dim);

  std::size_t num_chunks() const noexcept { return bounds_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const ChunkRange& operator[](std::size_t i) const { return bounds_[i]; }
  const std::vector<ChunkRange>& bounds() const noexcept { return bounds_; }
  std::size_t max_chunk_size() const noexcept;

 private:
  std::vector<ChunkRange> bounds_;
  std::size_t dim_ = 0;
};

ChunkSpec partition_chunks(std::size_t dim, std::size_t num_chunks);

}  // namespace lasgd
