#include "lasgd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lasgd {

std::uint64_t eval_budget(std::size_t dataset_size, std::size_t batch_size, double epochs) {
  if (batch_size == 0) throw std::invalid_argument("eval_budget: batch_size must be > 0");
  if (!(epochs >= 0.0) || !std::isfinite(epochs)) throw std::invalid_argument("eval_budget: epochs must be >= 0");
  const double evals = std::ceil(epochs * static_cast<double>(dataset_size) / static_cast<double>(batch_size));
  return static_cast<std::uint64_t>(evals);
}

std::size_t derived_steps_per_epoch(std::size_t dataset_size, std::size_t num_nodes, std::size_t batch_size) {
  if (num_nodes == 0 || batch_size == 0) throw std::invalid_argument("derived_steps_per_epoch: zero nodes or batch");
  return std::max<std::size_t>(1, dataset_size / (batch_size * num_nodes));
}

RunTrace run_simulation(const ClusterSpec& cluster, Algorithm algo, const HyperParams& hyper, const Problem& problem,
                        double epochs, const RunOptions& options) {
  std::vector<std::string> errors = cluster.validate();
  for (auto& e : hyper.validate(algo)) errors.push_back(std::move(e));
  if (hyper.num_nodes != cluster.num_nodes) errors.push_back("hyper.num_nodes must match cluster.num_nodes");
  if (!problem.oracle || !problem.data) errors.push_back("problem is not built");
  if (problem.batch_size == 0) errors.push_back("batch_size must be > 0");
  if (problem.data && problem.data->size() < cluster.num_nodes) errors.push_back("fewer samples than nodes");
  if (!(epochs >= 0.0) || !std::isfinite(epochs)) errors.push_back("epochs must be >= 0");
  if (epochs == 0.0 && options.max_rounds == 0) errors.push_back("need epochs > 0 or max_rounds > 0");
  if (options.replay && (cluster.backend != Backend::Threaded || algo != Algorithm::Lasgd)) {
    errors.push_back("replay needs the threaded backend and lasgd");
  }
  if (options.replay && options.replay->size() != cluster.num_nodes) errors.push_back("replay needs one schedule per node");
  if (!errors.empty()) {
    std::string msg = "invalid run configuration:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }

  HyperParams resolved = hyper;
  resolved.schedule.steps_per_epoch =
      derived_steps_per_epoch(problem.data->size(), cluster.num_nodes, problem.batch_size);
  const std::uint64_t target = epochs > 0.0 ? eval_budget(problem.data->size(), problem.batch_size, epochs) : 0;

  if (cluster.backend == Backend::Threaded) {
    return detail::run_threaded(cluster, algo, resolved, problem, target, options);
  }
  return detail::run_simulated(cluster, algo, resolved, problem, target, options);
}

}  // namespace lasgd
