#pragma once

#include <cstddef>
#include <cstdint>
#include <queue>
#include <vector>

#include "lasgd/cluster.hpp"
#include "lasgd/optimizer.hpp"
#include "lasgd/problem.hpp"
#include "lasgd/trace.hpp"

namespace lasgd {

// ---------------------------------------------------------------------------
// Discrete-event core

/// At equal timestamps and rank a collective completion sorts before a
/// gradient completion, so an all-reduce that finishes exactly on a step
/// boundary is visible there. Per-chunk arrivals are computed in closed form
/// by the simulator and need no events of their own.
enum class EventKind : int { CollectiveDone = 0, GradDone = 1 };

struct SimEvent {
  double time = 0.0;
  std::size_t rank = 0;
  EventKind kind = EventKind::GradDone;
  std::uint64_t seq = 0;  // insertion order, last tie-breaker
  std::uint64_t tag = 0;  // round id for collective events
};

/// Min-queue ordered by (time, rank, kind, seq). The clock never runs backwards.
class EventQueue {
 public:
  void push(double time, std::size_t rank, EventKind kind, std::uint64_t tag = 0);
  SimEvent pop();
  const SimEvent& top() const { return heap_.top(); }
  bool empty() const noexcept { return heap_.empty(); }
  double now() const noexcept { return now_; }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const noexcept;
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  double now_ = 0.0;
  std::uint64_t next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Runs

struct RunOptions {
  /// Keep the center model and per-node applied step sums on every round record.
  bool record_models = false;
  /// Stop once this many rounds are recorded. Zero leaves it to the epoch budget.
  std::size_t max_rounds = 0;
  /// Threaded LASGD only: follow these per-node schedules instead of polling.
  const std::vector<NodeSchedule>* replay = nullptr;
};

/// Non-finite loss during a run. Carries everything recorded before the failure.
class SimulationAborted : public NumericError {
 public:
  SimulationAborted(const std::string& what, RunTrace partial) : NumericError(what), partial_(std::move(partial)) {}
  const RunTrace& partial() const noexcept { return partial_; }

 private:
  RunTrace partial_;
};

/// Gradient evaluations summed over nodes that make up `epochs` passes over the data.
std::uint64_t eval_budget(std::size_t dataset_size, std::size_t batch_size, double epochs);

/**
 * Trains `problem` on the cluster with the chosen algorithm until the epoch
 * budget (or options.max_rounds) is reached.
 *
 * The learning-rate schedule's steps_per_epoch is derived here from the shard
 * size and batch size, and scale_nodes is taken from the hyperparameters as
 * given. The final model is the all-reduce mean of the node models (the
 * center for EASGD).
 *
 * Throws std::invalid_argument on inconsistent configuration and
 * SimulationAborted on a non-finite loss.
 */
RunTrace run_simulation(const ClusterSpec& cluster, Algorithm algo, const HyperParams& hyper, const Problem& problem,
                        double epochs, const RunOptions& options = {});

/// Shard batches per epoch for rank 0; the value run_simulation uses for the schedule.
std::size_t derived_steps_per_epoch(std::size_t dataset_size, std::size_t num_nodes, std::size_t batch_size);

namespace detail {
RunTrace run_simulated(const ClusterSpec& cluster, Algorithm algo, const HyperParams& hyper, const Problem& problem,
                       std::uint64_t target_evals, const RunOptions& options);
RunTrace run_threaded(const ClusterSpec& cluster, Algorithm algo, const HyperParams& hyper, const Problem& problem,
                      std::uint64_t target_evals, const RunOptions& options);
}  // namespace detail

}  // namespace lasgd
