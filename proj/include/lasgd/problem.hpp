#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "lasgd/dataset.hpp"
#include "lasgd/oracles.hpp"

namespace lasgd {

enum class ProblemKind { LeastSquares, Logistic, Mlp };

const char* to_string(ProblemKind kind) noexcept;
std::optional<ProblemKind> parse_problem_kind(std::string_view name) noexcept;

/// Desk-scale training problem: synthetic data plus the matching oracle.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::Logistic;
  std::size_t n = 1024;
  std::size_t d = 8;
  double noise = 0.0;
  std::uint64_t seed = 1;
  std::size_t batch_size = 32;
  std::vector<std::size_t> hidden;                // mlp only
  TaskKind mlp_task = TaskKind::Classification;  // mlp only
};

struct Problem {
  std::shared_ptr<const Dataset> data;
  OraclePtr oracle;
  std::size_t batch_size = 1;
  ParamVector x0;
};

Problem build_problem(const ProblemSpec& spec);

}  // namespace lasgd
