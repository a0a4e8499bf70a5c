#pragma once

// Pieces shared by the simulated and threaded backends.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "lasgd/cluster.hpp"
#include "lasgd/harness.hpp"

namespace lasgd::detail {

struct NodeRuntime {
  NodeState state;
  BatchSampler sampler;
  Rng time_rng;
};

std::vector<NodeRuntime> make_nodes(const ClusterSpec& cluster, const HyperParams& hyper, const Problem& problem);

/// Compute time for the next step: sampled, then inflated by the contention
/// factor if the node's all-reduce is still in flight.
double next_compute_time(const ClusterSpec& cluster, NodeRuntime& node);

/// Collects per-round facts as they arrive and emits RoundRecords in order
/// once a round's collective is done and every node has folded it in.
class RoundBook {
 public:
  RoundBook(RunTrace& trace, const GradOracle& oracle, std::size_t num_nodes, bool record_models);

  void collective_done(std::uint64_t round, double time, ParamVector center, std::vector<std::uint64_t> bytes,
                       double eta);
  /// Returns the number of records emitted by this call.
  std::size_t node_finalized(std::uint64_t round, std::size_t rank, std::size_t tau, const ParamVector* applied,
                             std::uint64_t grad_evals);

  std::size_t emitted() const noexcept { return trace_.rounds.size(); }

 private:
  struct Pending {
    bool done = false;
    double time = 0.0;
    ParamVector center;
    std::vector<std::uint64_t> bytes;
    double eta = 0.0;
    std::vector<std::optional<std::size_t>> tau;
    std::vector<ParamVector> applied;
    std::size_t finalized = 0;
  };

  Pending& slot(std::uint64_t round);
  std::size_t flush(std::uint64_t grad_evals);

  RunTrace& trace_;
  const GradOracle& oracle_;
  std::size_t num_nodes_;
  bool record_models_;
  std::uint64_t first_round_ = 0;
  std::uint64_t bytes_total_ = 0;
  std::deque<Pending> pending_;
};

/// Fills summary fields shared by every algorithm from the final node models.
void finish_trace(RunTrace& trace, const GradOracle& oracle, ParamVector final_model, double wall_time,
                  std::uint64_t grad_evals, std::vector<double> idle);

/// Mean of the node models through the same ring all-reduce the protocol uses.
ParamVector ring_mean(const std::vector<NodeRuntime>& nodes);

void init_trace(RunTrace& trace, Algorithm algo, const ClusterSpec& cluster, const Problem& problem);

}  // namespace lasgd::detail
