#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "lasgd/dataset.hpp"
#include "lasgd/param_vector.hpp"

namespace lasgd {

struct Evaluation {
  double loss = 0.0;
  ParamVector grad;
};

/**
 * Stochastic gradient oracle f(x, batch). Implementations are pure and
 * immutable: the same (params, batch) always yields bit-identical output, and
 * evaluate() may be called from several threads at once.
 */
class GradOracle {
 public:
  virtual ~GradOracle() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t num_samples() const = 0;

  /// Mean loss and mean gradient over `batch`. Throws on an empty batch.
  virtual Evaluation evaluate(const ParamVector& params, std::span<const std::size_t> batch) const = 0;

  virtual double loss(const ParamVector& params, std::span<const std::size_t> batch) const {
    return evaluate(params, batch).loss;
  }

  /// Starting point shared by every node. Zeros unless the model needs symmetry breaking.
  virtual ParamVector initial_params(std::uint64_t /*seed*/) const { return ParamVector(dim()); }

  Evaluation evaluate_full(const ParamVector& params) const;
  double full_loss(const ParamVector& params) const;
};

using OraclePtr = std::shared_ptr<const GradOracle>;

/// loss = 1/(2|B|) sum (A_i x - b_i)^2, grad = 1/|B| sum A_i^T (A_i x - b_i).
OraclePtr least_squares_oracle(Matrix a, std::vector<double> b);

/// Mean sigmoid cross-entropy, no intercept. Targets must be 0 or 1.
OraclePtr logistic_oracle(std::shared_ptr<const Dataset> data);

/**
 * Fully connected tanh network. layer_dims = {in, h1, ..., out}; out must be 1.
 * Regression datasets use 1/2 squared error on the output, classification
 * datasets use sigmoid cross-entropy on the output logit.
 *
 * Parameter layout: for each layer l in order, the weight matrix
 * W_l[out_l x in_l] row-major, followed by the bias b_l[out_l] when
 * `with_bias` is set. The last layer is linear.
 */
struct MlpShape {
  std::vector<std::size_t> layer_dims;
  bool with_bias = true;

  std::size_t num_params() const;
};

class MlpOracle final : public GradOracle {
 public:
  MlpOracle(MlpShape shape, std::shared_ptr<const Dataset> data);

  std::size_t dim() const override { return shape_.num_params(); }
  std::size_t num_samples() const override { return data_->size(); }
  Evaluation evaluate(const ParamVector& params, std::span<const std::size_t> batch) const override;
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  ParamVector initial_params(std::uint64_t seed) const override;

  const MlpShape& shape() const noexcept { return shape_; }

 private:
  MlpShape shape_;
  std::shared_ptr<const Dataset> data_;
};

OraclePtr mlp_oracle(MlpShape shape, std::shared_ptr<const Dataset> data);

struct FiniteDiffOptions {
  double eps = 1e-5;
  /// Above this dimension, random unit probe directions replace per-coordinate checks.
  std::size_t max_coordinates = 512;
  std::size_t num_probes = 16;
  std::uint64_t probe_seed = 0;
};

/**
 * Central-difference gradient check. Returns
 *   max_j |fd_j - g_j| / max(|g|_inf, |fd|_inf, 1e-12)
 * i.e. the largest coordinate deviation relative to the gradient's scale.
 * In probe mode the directional derivative along each unit probe u is
 * compared with g.u, relative to max(|g|_2, 1e-12).
 */
double finite_diff_check(const GradOracle& oracle, const ParamVector& x, std::span<const std::size_t> batch,
                         const FiniteDiffOptions& options = {});

}  // namespace lasgd
