#include "lasgd/cluster.hpp"

#include <cmath>
#include <stdexcept>

#include "lasgd/param_vector.hpp"

namespace lasgd {

LogNormalTime LogNormalTime::from_median_cv(double median, double cv) {
  if (!(median > 0.0) || !(cv >= 0.0)) throw std::invalid_argument("LogNormalTime: need median > 0, cv >= 0");
  return {std::log(median), std::sqrt(std::log1p(cv * cv))};
}

double LogNormalTime::median() const { return std::exp(mu); }

double sample_compute_time(const ComputeModel& model, Rng& rng) {
  return std::visit(
      [&rng](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantTime>) {
          return m.seconds;
        } else if constexpr (std::is_same_v<T, UniformTime>) {
          return std::uniform_real_distribution<double>(m.lo, m.hi)(rng);
        } else {
          if (m.sigma == 0.0) return std::exp(m.mu);
          return std::lognormal_distribution<double>(m.mu, m.sigma)(rng);
        }
      },
      model);
}

std::vector<std::string> validate(const ComputeModel& model) {
  std::vector<std::string> errors;
  std::visit(
      [&errors](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantTime>) {
          if (!(m.seconds > 0.0)) errors.push_back("constant compute time must be > 0");
        } else if constexpr (std::is_same_v<T, UniformTime>) {
          if (!(m.lo > 0.0)) errors.push_back("uniform compute lower bound must be > 0");
          if (!(m.hi >= m.lo)) errors.push_back("uniform compute upper bound must be >= lower bound");
        } else {
          if (!std::isfinite(m.mu)) errors.push_back("lognormal mu must be finite");
          if (!(m.sigma >= 0.0)) errors.push_back("lognormal sigma must be >= 0");
        }
      },
      model);
  return errors;
}

const char* to_string(Backend backend) noexcept {
  return backend == Backend::Simulated ? "simulated" : "threaded";
}

const ComputeModel& ClusterSpec::compute_for(std::size_t rank) const {
  return compute.size() == 1 ? compute.front() : compute.at(rank);
}

std::vector<std::string> ClusterSpec::validate() const {
  std::vector<std::string> errors;
  if (num_nodes < 1) errors.push_back("nodes must be >= 1");
  if (compute.empty()) {
    errors.push_back("compute model missing");
  } else if (compute.size() != 1 && compute.size() != num_nodes) {
    errors.push_back("per-node compute models must list exactly one entry per node");
  }
  for (const auto& m : compute) {
    for (auto& e : lasgd::validate(m)) errors.push_back(e);
  }
  if (!(link.bandwidth_bytes_per_s > 0.0)) errors.push_back("link bandwidth must be > 0");
  if (!(link.latency_s >= 0.0)) errors.push_back("link latency must be >= 0");
  if (!(contention >= 0.0)) errors.push_back("contention must be >= 0");
  if (bytes_per_element < 1) errors.push_back("bytes_per_element must be >= 1");
  if (!(time_scale > 0.0)) errors.push_back("time_scale must be > 0");
  return errors;
}

double ring_step_duration(std::size_t num_nodes, std::size_t dim, std::size_t bytes_per_element, const Link& link) {
  if (num_nodes < 2) return 0.0;
  const double chunk_bytes =
      static_cast<double>(partition_chunks(dim, num_nodes).max_chunk_size() * bytes_per_element);
  return link.latency_s + chunk_bytes / link.bandwidth_bytes_per_s;
}

double ar_duration(std::size_t num_nodes, std::size_t dim, std::size_t bytes_per_element, const Link& link) {
  if (num_nodes < 2) return 0.0;
  return static_cast<double>(2 * (num_nodes - 1)) * ring_step_duration(num_nodes, dim, bytes_per_element, link);
}

double model_transfer_duration(std::size_t dim, std::size_t bytes_per_element, const Link& link) {
  return link.latency_s + static_cast<double>(dim * bytes_per_element) / link.bandwidth_bytes_per_s;
}

}  // namespace lasgd
