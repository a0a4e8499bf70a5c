#include "run_support.hpp"

#include <cmath>
#include <stdexcept>

namespace lasgd::detail {

std::vector<NodeRuntime> make_nodes(const ClusterSpec& cluster, const HyperParams& hyper, const Problem& problem) {
  std::vector<NodeRuntime> nodes;
  nodes.reserve(cluster.num_nodes);
  for (std::size_t r = 0; r < cluster.num_nodes; ++r) {
    nodes.push_back(NodeRuntime{
        NodeState::fresh(r, hyper.tau_max, problem.x0),
        BatchSampler(problem.data->shard_of(r, cluster.num_nodes), problem.batch_size,
                     derive_seed(cluster.seed, r, RngStream::Batches)),
        Rng(derive_seed(cluster.seed, r, RngStream::ComputeTime)),
    });
  }
  return nodes;
}

double next_compute_time(const ClusterSpec& cluster, NodeRuntime& node) {
  double t = sample_compute_time(cluster.compute_for(node.state.rank), node.time_rng);
  if (cluster.contention > 0.0 && node.state.pending &&
      node.state.pending->status() == CollectiveStatus::InFlight) {
    t *= 1.0 + cluster.contention;
  }
  return t;
}

RoundBook::RoundBook(RunTrace& trace, const GradOracle& oracle, std::size_t num_nodes, bool record_models)
    : trace_(trace), oracle_(oracle), num_nodes_(num_nodes), record_models_(record_models) {
  trace_.summary.bytes_per_node.assign(num_nodes, 0);
}

RoundBook::Pending& RoundBook::slot(std::uint64_t round) {
  if (round < first_round_) throw std::logic_error("RoundBook: round already emitted");
  while (pending_.size() <= round - first_round_) {
    Pending p;
    p.tau.assign(num_nodes_, std::nullopt);
    if (record_models_) p.applied.resize(num_nodes_);
    pending_.push_back(std::move(p));
  }
  return pending_[round - first_round_];
}

void RoundBook::collective_done(std::uint64_t round, double time, ParamVector center,
                                std::vector<std::uint64_t> bytes, double eta) {
  Pending& p = slot(round);
  p.done = true;
  p.time = time;
  p.center = std::move(center);
  p.bytes = std::move(bytes);
  p.eta = eta;
}

std::size_t RoundBook::node_finalized(std::uint64_t round, std::size_t rank, std::size_t tau,
                                      const ParamVector* applied, std::uint64_t grad_evals) {
  Pending& p = slot(round);
  if (p.tau.at(rank)) throw std::logic_error("RoundBook: node finalized a round twice");
  p.tau[rank] = tau;
  if (record_models_ && applied) p.applied[rank] = *applied;
  ++p.finalized;
  return flush(grad_evals);
}

std::size_t RoundBook::flush(std::uint64_t grad_evals) {
  std::size_t emitted = 0;
  while (!pending_.empty() && pending_.front().done && pending_.front().finalized == num_nodes_) {
    Pending p = std::move(pending_.front());
    pending_.pop_front();
    RoundRecord rec;
    rec.round = first_round_++;
    rec.time_s = p.time;
    for (auto& t : p.tau) rec.node_tau.push_back(*t);
    rec.loss = oracle_.full_loss(p.center);
    rec.eta = p.eta;
    rec.grad_evals = grad_evals;
    for (std::size_t r = 0; r < num_nodes_; ++r) {
      trace_.summary.bytes_per_node[r] += p.bytes.at(r);
      bytes_total_ += p.bytes.at(r);
    }
    rec.bytes_sent = bytes_total_;
    if (record_models_) {
      rec.center = std::move(p.center);
      rec.applied = std::move(p.applied);
    }
    trace_.rounds.push_back(std::move(rec));
    ++emitted;
  }
  trace_.summary.total_bytes = bytes_total_;
  trace_.summary.rounds = trace_.rounds.size();
  return emitted;
}

void finish_trace(RunTrace& trace, const GradOracle& oracle, ParamVector final_model, double wall_time,
                  std::uint64_t grad_evals, std::vector<double> idle) {
  trace.summary.final_loss = oracle.full_loss(final_model);
  trace.summary.wall_time_s = wall_time;
  trace.summary.grad_evals = grad_evals;
  trace.summary.rounds = trace.rounds.size();
  trace.summary.idle_time_s = std::move(idle);
  trace.final_model = std::move(final_model);
  if (!std::isfinite(trace.summary.final_loss)) throw NumericError("non-finite final loss");
}

ParamVector ring_mean(const std::vector<NodeRuntime>& nodes) {
  std::vector<ParamVector> models;
  models.reserve(nodes.size());
  for (const auto& n : nodes) models.push_back(n.state.x_local);
  CountingTransport scratch(nodes.size());
  const CollectiveHandle h = all_reduce_average(models, scratch);
  if (h.status() != CollectiveStatus::Complete) throw NumericError("final averaging failed: " + h.failure_reason());
  return h.result(0);
}

void init_trace(RunTrace& trace, Algorithm algo, const ClusterSpec& cluster, const Problem& problem) {
  trace.algo = algo;
  trace.num_nodes = cluster.num_nodes;
  trace.dim = problem.x0.dim();
  trace.batch_size = problem.batch_size;
  trace.dataset_size = problem.data->size();
  trace.schedules.assign(cluster.num_nodes, NodeSchedule{});
}

}  // namespace lasgd::detail
