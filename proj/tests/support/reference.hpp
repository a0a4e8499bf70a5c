#pragma once

// Independent reference computations for tests. Nothing here calls into the
// collective or optimizer code; only plain loops over std::vector.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace lasgd::ref {

using Vec = std::vector<double>;

/// Straight rank-order sum, then one division.
inline Vec naive_mean(const std::vector<Vec>& xs) {
  Vec out(xs.front().size(), 0.0);
  for (const auto& x : xs) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += x[j];
  }
  for (double& v : out) v /= static_cast<double>(xs.size());
  return out;
}

/// Chunk that owns coordinate j when d coordinates are split over P ranks,
/// first (d mod P) chunks one larger.
inline std::size_t owner_chunk(std::size_t j, std::size_t d, std::size_t P) {
  const std::size_t base = d / P, rem = d % P;
  const std::size_t big = rem * (base + 1);
  if (j < big) return j / (base + 1);
  return rem + (j - big) / base;
}

inline std::size_t chunk_size(std::size_t c, std::size_t d, std::size_t P) { return d / P + (c < d % P ? 1 : 0); }

/// Mean with each coordinate summed in ring order: start at rank c+1, wrap,
/// finish at rank c, where c is the coordinate's chunk. Division last.
inline Vec ring_order_mean(const std::vector<Vec>& xs) {
  const std::size_t P = xs.size(), d = xs.front().size();
  Vec out(d);
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t c = owner_chunk(j, d, P);
    double acc = xs[(c + 1) % P][j];
    for (std::size_t k = 2; k <= P; ++k) acc = xs[(c + k) % P][j] + acc;
    out[j] = P == 1 ? xs[0][j] : acc / static_cast<double>(P);
  }
  return out;
}

/// Bytes rank r sends in one ring all-reduce: every chunk but its own during
/// reduce-scatter, every chunk but its successor's during all-gather.
inline std::uint64_t ring_bytes(std::size_t r, std::size_t d, std::size_t P, std::size_t bpe) {
  if (P < 2) return 0;
  return (2 * d - chunk_size(r, d, P) - chunk_size((r + 1) % P, d, P)) * bpe;
}

/// max_j |a_j - b_j| / max_j |b_j|. Elementwise ratios are meaningless where a
/// mean of mixed-sign data cancels to near zero.
inline double max_rel_err(const Vec& a, const Vec& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    diff = std::max(diff, std::abs(a[j] - b[j]));
    scale = std::max(scale, std::abs(b[j]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace lasgd::ref
