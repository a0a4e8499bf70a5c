#include "lasgd/param_vector.hpp"

#include <algorithm>
#include <cmath>

namespace lasgd {

ParamVector::ParamVector(std::size_t dim, double fill) : values_(dim, fill) {}

ParamVector::ParamVector(std::vector<double> values) : values_(std::move(values)) {}

ParamVector::ParamVector(std::initializer_list<double> values) : values_(values) {}

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ParamVector::require_finite(std::string_view what) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw NumericError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

ParamVector& ParamVector::add_scaled(double scale, const ParamVector& other) {
  require_same_dim(*this, other, "add_scaled");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    values_[i] += scale * other.values_[i];
  }
  require_finite("add_scaled");
  return *this;
}

ParamVector& ParamVector::scale(double factor) {
  for (double& v : values_) v *= factor;
  require_finite("scale");
  return *this;
}

double ParamVector::sum() const noexcept {
  double acc = 0.0;
  for (double v : values_) acc += v;
  return acc;
}

double ParamVector::max_abs() const noexcept {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

void require_same_dim(const ParamVector& a, const ParamVector& b, std::string_view what) {
  if (a.dim() != b.dim()) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.dim()) +
                         " vs " + std::to_string(b.dim()) + ")");
  }
}

ParamVector blend(double a, const ParamVector& u, double b, const ParamVector& v) {
  require_same_dim(u, v, "blend");
  ParamVector out(u.dim());
  for (std::size_t i = 0; i < u.dim(); ++i) {
    out[i] = a * u[i] + b * v[i];
  }
  out.require_finite("blend");
  return out;
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

ParamVector mean_of(std::span<const ParamVector> vectors) {
  if (vectors.empty()) throw std::invalid_argument("mean_of: empty list");
  ParamVector acc = vectors.front();
  for (std::size_t k = 1; k < vectors.size(); ++k) {
    require_same_dim(acc, vectors[k], "mean_of");
    for (std::size_t i = 0; i < acc.dim(); ++i) acc[i] += vectors[k][i];
  }
  const double count = static_cast<double>(vectors.size());
  for (std::size_t i = 0; i < acc.dim(); ++i) acc[i] /= count;
  acc.require_finite("mean_of");
  return acc;
}

ChunkSpec::ChunkSpec(std::vector<ChunkRange> bounds, std::size_t dim)
    : bounds_(std::move(bounds)), dim_(dim) {}

std::size_t ChunkSpec::max_chunk_size() const noexcept {
  std::size_t m = 0;
  for (const auto& r : bounds_) m = std::max(m, r.size());
  return m;
}

ChunkSpec partition_chunks(std::size_t dim, std::size_t num_chunks) {
  if (dim == 0) throw std::invalid_argument("partition_chunks: dim must be >= 1");
  if (num_chunks == 0) throw std::invalid_argument("partition_chunks: num_chunks must be >= 1");
  const std::size_t base = dim / num_chunks;
  const std::size_t extra = dim % num_chunks;
  std::vector<ChunkRange> bounds;
  bounds.reserve(num_chunks);
  std::size_t start = 0;
  for (std::size_t c = 0; c < num_chunks; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    bounds.push_back({start, start + len});
    start += len;
  }
  return ChunkSpec(std::move(bounds), dim);
}

}  // namespace lasgd
