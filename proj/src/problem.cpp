#include "lasgd/problem.hpp"

#include <stdexcept>

namespace lasgd {

const char* to_string(ProblemKind kind) noexcept {
  switch (kind) {
    case ProblemKind::LeastSquares: return "least_squares";
    case ProblemKind::Logistic: return "logistic";
    case ProblemKind::Mlp: return "mlp";
  }
  return "unknown";
}

std::optional<ProblemKind> parse_problem_kind(std::string_view name) noexcept {
  if (name == "least_squares") return ProblemKind::LeastSquares;
  if (name == "logistic") return ProblemKind::Logistic;
  if (name == "mlp") return ProblemKind::Mlp;
  return std::nullopt;
}

Problem build_problem(const ProblemSpec& spec) {
  if (spec.batch_size == 0) throw std::invalid_argument("build_problem: batch_size must be >= 1");
  Problem p;
  p.batch_size = spec.batch_size;
  switch (spec.kind) {
    case ProblemKind::LeastSquares: {
      auto data = std::make_shared<Dataset>(make_synthetic(spec.seed, spec.n, spec.d, spec.noise, TaskKind::Regression));
      p.oracle = least_squares_oracle(data->features, data->targets);
      p.data = std::move(data);
      break;
    }
    case ProblemKind::Logistic: {
      auto data =
          std::make_shared<Dataset>(make_synthetic(spec.seed, spec.n, spec.d, spec.noise, TaskKind::Classification));
      p.oracle = logistic_oracle(data);
      p.data = std::move(data);
      break;
    }
    case ProblemKind::Mlp: {
      auto data = std::make_shared<Dataset>(make_synthetic(spec.seed, spec.n, spec.d, spec.noise, spec.mlp_task));
      MlpShape shape;
      shape.layer_dims.push_back(spec.d);
      shape.layer_dims.insert(shape.layer_dims.end(), spec.hidden.begin(), spec.hidden.end());
      shape.layer_dims.push_back(1);
      p.oracle = mlp_oracle(std::move(shape), data);
      p.data = std::move(data);
      break;
    }
  }
  p.x0 = p.oracle->initial_params(spec.seed);
  return p;
}

}  // namespace lasgd
