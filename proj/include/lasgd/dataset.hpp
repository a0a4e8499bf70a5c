#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lasgd/param_vector.hpp"

namespace lasgd {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }

  static Matrix identity(std::size_t n);
};

enum class TaskKind { Regression, Classification };

/// Immutable sample table. Classification targets are 0 or 1.
struct Dataset {
  TaskKind kind = TaskKind::Regression;
  Matrix features;
  std::vector<double> targets;
  ParamVector ground_truth;  // generating parameters, empty for imported data

  std::size_t size() const noexcept { return features.rows; }
  std::size_t num_features() const noexcept { return features.cols; }

  /// Contiguous block of sample indices owned by `rank` out of `num_nodes`.
  std::vector<std::size_t> shard_of(std::size_t rank, std::size_t num_nodes) const;
  std::vector<std::size_t> all_indices() const;
};

/**
 * Seeded synthetic data. Features are standard normal; ground truth is drawn
 * from N(0, 1). Regression targets are A w + noise * N(0,1); classification
 * labels are 1[A w + noise * N(0,1) > 0].
 */
Dataset make_synthetic(std::uint64_t seed, std::size_t n, std::size_t d, double noise, TaskKind kind);

/// One row per sample: features, then target. Full round-trip precision.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path, TaskKind kind);

}  // namespace lasgd
