#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "lasgd/random.hpp"

namespace lasgd {

struct ConstantTime {
  double seconds = 0.1;
};

struct UniformTime {
  double lo = 0.1;
  double hi = 0.2;
};

/// exp(N(mu, sigma^2)) seconds. The median is exp(mu).
struct LogNormalTime {
  double mu = 0.0;
  double sigma = 0.0;

  /// Coefficient of variation cv = sqrt(exp(sigma^2) - 1).
  static LogNormalTime from_median_cv(double median, double cv);
  double median() const;
};

/// Per-mini-batch gradient time distribution.
using ComputeModel = std::variant<ConstantTime, UniformTime, LogNormalTime>;

double sample_compute_time(const ComputeModel& model, Rng& rng);
std::vector<std::string> validate(const ComputeModel& model);

struct Link {
  double bandwidth_bytes_per_s = 1.25e9;  // 10 Gbit/s
  double latency_s = 0.0;
};

enum class Backend { Simulated, Threaded };

const char* to_string(Backend backend) noexcept;

struct ClusterSpec {
  std::size_t num_nodes = 1;
  /// Either one model shared by every node, or exactly one per node.
  std::vector<ComputeModel> compute{ConstantTime{}};
  Link link;
  std::uint64_t seed = 0;
  Backend backend = Backend::Simulated;
  /// Compute time is multiplied by (1 + contention) while the node's all-reduce is in flight.
  double contention = 0.0;
  std::size_t bytes_per_element = sizeof(double);
  /// Threaded backend only: wall-clock seconds per modeled second.
  double time_scale = 1.0;

  const ComputeModel& compute_for(std::size_t rank) const;
  std::vector<std::string> validate() const;
};

/// latency + largest_chunk_bytes / bandwidth: one lockstep ring step.
double ring_step_duration(std::size_t num_nodes, std::size_t dim, std::size_t bytes_per_element, const Link& link);

/// 2(P-1) ring steps. Zero for a single node.
double ar_duration(std::size_t num_nodes, std::size_t dim, std::size_t bytes_per_element, const Link& link);

/// Full-model point-to-point transfer, one direction: latency + dim*bpe / bandwidth.
double model_transfer_duration(std::size_t dim, std::size_t bytes_per_element, const Link& link);

}  // namespace lasgd
