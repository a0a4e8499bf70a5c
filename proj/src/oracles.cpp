#include "lasgd/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lasgd/random.hpp"

namespace lasgd {
namespace {

void require_batch(std::span<const std::size_t> batch, std::size_t n) {
  if (batch.empty()) throw std::invalid_argument("oracle: empty batch");
  for (std::size_t i : batch) {
    if (i >= n) throw std::out_of_range("oracle: sample index " + std::to_string(i) + " out of range");
  }
}

void require_params(const ParamVector& params, std::size_t dim) {
  if (params.dim() != dim) {
    throw DimensionError("oracle: expected " + std::to_string(dim) + " parameters, got " +
                         std::to_string(params.dim()));
  }
}

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void finish(Evaluation& ev, double loss_acc, double loss_scale, std::size_t m) {
  const double count = static_cast<double>(m);
  ev.loss = loss_scale * loss_acc / count;
  for (double& g : ev.grad.values()) g /= count;
  if (!std::isfinite(ev.loss)) throw NumericError("oracle: non-finite loss");
  ev.grad.require_finite("oracle gradient");
}

class LeastSquaresOracle final : public GradOracle {
 public:
  LeastSquaresOracle(Matrix a, std::vector<double> b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows != b_.size()) throw DimensionError("least_squares_oracle: rows of A != length of b");
    if (a_.cols == 0 || a_.rows == 0) throw DimensionError("least_squares_oracle: empty system");
  }

  std::size_t dim() const override { return a_.cols; }
  std::size_t num_samples() const override { return a_.rows; }

  Evaluation evaluate(const ParamVector& x, std::span<const std::size_t> batch) const override {
    require_params(x, dim());
    require_batch(batch, a_.rows);
    Evaluation ev{0.0, ParamVector(dim())};
    double acc = 0.0;
    for (std::size_t i : batch) {
      const auto row = a_.row(i);
      double pred = 0.0;
      for (std::size_t j = 0; j < a_.cols; ++j) pred += row[j] * x[j];
      const double r = pred - b_[i];
      acc += r * r;
      for (std::size_t j = 0; j < a_.cols; ++j) ev.grad[j] += r * row[j];
    }
    finish(ev, acc, 0.5, batch.size());
    return ev;
  }

 private:
  Matrix a_;
  std::vector<double> b_;
};

class LogisticOracle final : public GradOracle {
 public:
  explicit LogisticOracle(std::shared_ptr<const Dataset> data) : data_(std::move(data)) {
    if (!data_) throw std::invalid_argument("logistic_oracle: null dataset");
    for (double y : data_->targets) {
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("logistic_oracle: targets must be 0 or 1");
    }
  }

  std::size_t dim() const override { return data_->num_features(); }
  std::size_t num_samples() const override { return data_->size(); }

  Evaluation evaluate(const ParamVector& x, std::span<const std::size_t> batch) const override {
    require_params(x, dim());
    require_batch(batch, data_->size());
    const std::size_t d = dim();
    Evaluation ev{0.0, ParamVector(d)};
    double acc = 0.0;
    for (std::size_t i : batch) {
      const auto row = data_->features.row(i);
      const double y = data_->targets[i];
      double z = 0.0;
      for (std::size_t j = 0; j < d; ++j) z += row[j] * x[j];
      acc += softplus(z) - y * z;
      const double r = sigmoid(z) - y;
      for (std::size_t j = 0; j < d; ++j) ev.grad[j] += r * row[j];
    }
    finish(ev, acc, 1.0, batch.size());
    return ev;
  }

 private:
  std::shared_ptr<const Dataset> data_;
};

}  // namespace

Evaluation GradOracle::evaluate_full(const ParamVector& params) const {
  std::vector<std::size_t> all(num_samples());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return evaluate(params, all);
}

double GradOracle::full_loss(const ParamVector& params) const { return evaluate_full(params).loss; }

OraclePtr least_squares_oracle(Matrix a, std::vector<double> b) {
  return std::make_shared<LeastSquaresOracle>(std::move(a), std::move(b));
}

OraclePtr logistic_oracle(std::shared_ptr<const Dataset> data) {
  return std::make_shared<LogisticOracle>(std::move(data));
}

// ---------------------------------------------------------------------------
// MLP

std::size_t MlpShape::num_params() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    total += layer_dims[l] * layer_dims[l + 1] + (with_bias ? layer_dims[l + 1] : 0);
  }
  return total;
}

MlpOracle::MlpOracle(MlpShape shape, std::shared_ptr<const Dataset> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (!data_) throw std::invalid_argument("mlp_oracle: null dataset");
  const auto& dims = shape_.layer_dims;
  if (dims.size() < 2) throw DimensionError("mlp_oracle: need at least input and output dims");
  if (std::any_of(dims.begin(), dims.end(), [](std::size_t v) { return v == 0; })) {
    throw DimensionError("mlp_oracle: layer dims must be positive");
  }
  if (dims.front() != data_->num_features()) {
    throw DimensionError("mlp_oracle: input dim " + std::to_string(dims.front()) + " != feature dim " +
                         std::to_string(data_->num_features()));
  }
  if (dims.back() != 1) throw DimensionError("mlp_oracle: output dim must be 1");
  if (data_->kind == TaskKind::Classification) {
    for (double y : data_->targets) {
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("mlp_oracle: targets must be 0 or 1");
    }
  }
}

Evaluation MlpOracle::evaluate(const ParamVector& params, std::span<const std::size_t> batch) const {
  require_params(params, dim());
  require_batch(batch, data_->size());

  const auto& dims = shape_.layer_dims;
  const std::size_t num_layers = dims.size() - 1;

  // Offsets of each layer's weights and biases in the flat vector.
  std::vector<std::size_t> w_off(num_layers), b_off(num_layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < num_layers; ++l) {
    w_off[l] = off;
    off += dims[l] * dims[l + 1];
    b_off[l] = off;
    if (shape_.with_bias) off += dims[l + 1];
  }

  std::vector<std::vector<double>> act(num_layers + 1);
  for (std::size_t l = 0; l <= num_layers; ++l) act[l].resize(dims[l]);
  std::vector<double> delta, delta_prev;

  Evaluation ev{0.0, ParamVector(dim())};
  double acc = 0.0;
  const bool classify = data_->kind == TaskKind::Classification;

  for (std::size_t i : batch) {
    const auto row = data_->features.row(i);
    std::copy(row.begin(), row.end(), act[0].begin());

    for (std::size_t l = 0; l < num_layers; ++l) {
      const std::size_t in = dims[l], out = dims[l + 1];
      const bool last = l + 1 == num_layers;
      for (std::size_t o = 0; o < out; ++o) {
        double z = 0.0;
        const std::size_t wrow = w_off[l] + o * in;
        for (std::size_t k = 0; k < in; ++k) z += params[wrow + k] * act[l][k];
        if (shape_.with_bias) z += params[b_off[l] + o];
        act[l + 1][o] = last ? z : std::tanh(z);
        if (!std::isfinite(act[l + 1][o])) throw NumericError("mlp_oracle: non-finite activation");
      }
    }

    const double out = act[num_layers][0];
    const double y = data_->targets[i];
    double r;
    if (classify) {
      acc += softplus(out) - y * out;
      r = sigmoid(out) - y;
    } else {
      r = out - y;
      acc += r * r;
    }

    delta.assign(1, r);
    for (std::size_t l = num_layers; l-- > 0;) {
      const std::size_t in = dims[l], outn = dims[l + 1];
      for (std::size_t o = 0; o < outn; ++o) {
        const std::size_t wrow = w_off[l] + o * in;
        for (std::size_t k = 0; k < in; ++k) ev.grad[wrow + k] += delta[o] * act[l][k];
        if (shape_.with_bias) ev.grad[b_off[l] + o] += delta[o];
      }
      if (l == 0) break;
      delta_prev.assign(in, 0.0);
      for (std::size_t o = 0; o < outn; ++o) {
        const std::size_t wrow = w_off[l] + o * in;
        for (std::size_t k = 0; k < in; ++k) delta_prev[k] += params[wrow + k] * delta[o];
      }
      for (std::size_t k = 0; k < in; ++k) delta_prev[k] *= 1.0 - act[l][k] * act[l][k];
      delta.swap(delta_prev);
    }
  }
  finish(ev, acc, classify ? 1.0 : 0.5, batch.size());
  return ev;
}

ParamVector MlpOracle::initial_params(std::uint64_t seed) const {
  Rng rng(derive_seed(seed, 0, RngStream::Init));
  ParamVector p(dim());
  const auto& dims = shape_.layer_dims;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < dims[l] * dims[l + 1]; ++k) p[off++] = u(rng);
    if (shape_.with_bias) off += dims[l + 1];
  }
  return p;
}

OraclePtr mlp_oracle(MlpShape shape, std::shared_ptr<const Dataset> data) {
  return std::make_shared<MlpOracle>(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------

double finite_diff_check(const GradOracle& oracle, const ParamVector& x, std::span<const std::size_t> batch,
                         const FiniteDiffOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be > 0");
  const Evaluation ev = oracle.evaluate(x, batch);
  const std::size_t d = x.dim();
  const double eps = options.eps;

  auto central = [&](const ParamVector& dir) {
    ParamVector plus = x, minus = x;
    plus.add_scaled(eps, dir);
    minus.add_scaled(-eps, dir);
    return (oracle.loss(plus, batch) - oracle.loss(minus, batch)) / (2.0 * eps);
  };

  if (d <= options.max_coordinates) {
    ParamVector fd(d);
    ParamVector unit(d);
    for (std::size_t j = 0; j < d; ++j) {
      unit[j] = 1.0;
      fd[j] = central(unit);
      unit[j] = 0.0;
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(fd[j] - ev.grad[j]));
    const double scale = std::max({ev.grad.max_abs(), fd.max_abs(), 1e-12});
    return worst / scale;
  }

  Rng rng(derive_seed(options.probe_seed, 0, RngStream::Probe));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gnorm = std::sqrt(dot(ev.grad, ev.grad));
  double worst = 0.0;
  for (std::size_t p = 0; p < options.num_probes; ++p) {
    ParamVector dir(d);
    for (std::size_t j = 0; j < d; ++j) dir[j] = normal(rng);
    dir.scale(1.0 / std::sqrt(dot(dir, dir)));
    worst = std::max(worst, std::abs(central(dir) - dot(ev.grad, dir)));
  }
  return worst / std::max(gnorm, 1e-12);
}

}  // namespace lasgd
