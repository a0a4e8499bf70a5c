#include <cmath>
#include <map>
#include <stdexcept>

#include "lasgd/harness.hpp"
#include "run_support.hpp"

namespace lasgd {

// ---------------------------------------------------------------------------
// EventQueue

bool EventQueue::Later::operator()(const SimEvent& a, const SimEvent& b) const noexcept {
  if (a.time != b.time) return a.time > b.time;
  if (a.rank != b.rank) return a.rank > b.rank;
  if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
  return a.seq > b.seq;
}

void EventQueue::push(double time, std::size_t rank, EventKind kind, std::uint64_t tag) {
  if (time < now_) throw std::logic_error("EventQueue: event scheduled in the past");
  heap_.push(SimEvent{time, rank, kind, next_seq_++, tag});
}

SimEvent EventQueue::pop() {
  SimEvent ev = heap_.top();
  heap_.pop();
  now_ = ev.time;
  return ev;
}

namespace detail {
namespace {

/**
 * Ring all-reduces in simulated time, pipelined: rank q forwards its step-k
 * chunk once it has contributed and has received its step-(k-1) chunk, and
 * every transfer takes one ring_step_duration. Each rank's handle completes
 * when its own last chunk arrives, so an early contributor is not held back
 * by the full 2(P-1) steps after the last one. With simultaneous
 * contributions every rank completes exactly ar_duration later.
 *
 * Arrival times depend only on contribution times, all known once the last
 * rank contributes, so the reduction runs then and only the per-rank
 * completions are queued.
 */
class SimCollectives final : public CollectiveEndpoint {
 public:
  SimCollectives(EventQueue& queue, const ClusterSpec& cluster, std::size_t dim)
      : queue_(queue),
        num_nodes_(cluster.num_nodes),
        dim_(dim),
        bpe_(cluster.bytes_per_element),
        step_time_(ring_step_duration(cluster.num_nodes, dim, cluster.bytes_per_element, cluster.link)),
        transport_(cluster.num_nodes, cluster.bytes_per_element) {}

  CollectiveHandle submit(std::size_t rank, std::uint64_t round, ParamVector contribution) override {
    auto [it, fresh] = rounds_.try_emplace(round, round, num_nodes_, dim_, bpe_);
    Round& rd = it->second;
    if (fresh) {
      for (std::size_t r = 0; r < num_nodes_; ++r) rd.per_rank.emplace_back(round, num_nodes_);
      rd.contributed_at.assign(num_nodes_, 0.0);
    }
    rd.contributed_at[rank] = queue_.now();
    rd.ring.contribute(rank, std::move(contribution));
    if (rd.ring.ready()) launch(round, rd);
    return rd.per_rank[rank];
  }

  struct Delivery {
    bool last = false;         // every rank of the round now holds its result
    ParamVector center;        // set when last
    std::vector<std::uint64_t> bytes;
  };

  /// Completes `rank`'s handle for `round`.
  Delivery deliver(std::uint64_t round, std::size_t rank) {
    auto it = rounds_.find(round);
    if (it == rounds_.end()) throw std::logic_error("simulator: event for unknown collective");
    Round& rd = it->second;
    const CollectiveHandle& h = rd.ring.handle();
    std::vector<ParamVector> own(num_nodes_);
    own[rank] = h.result(rank);
    std::vector<std::uint64_t> bytes(num_nodes_);
    for (std::size_t r = 0; r < num_nodes_; ++r) bytes[r] = h.bytes_sent(r);
    rd.per_rank[rank].complete(std::move(own), bytes);

    Delivery d;
    if (++rd.delivered == num_nodes_) {
      d.last = true;
      d.center = h.result(0);
      d.bytes = std::move(bytes);
      rounds_.erase(it);
    }
    return d;
  }

 private:
  struct Round {
    Round(std::uint64_t round, std::size_t p, std::size_t d, std::size_t bpe) : ring(round, p, d, bpe) {}
    RingAllReduce ring;
    std::vector<CollectiveHandle> per_rank;
    std::vector<double> contributed_at;
    std::size_t delivered = 0;
  };

  void launch(std::uint64_t round, Round& rd) {
    rd.ring.run_to_completion(transport_);
    if (rd.ring.handle().status() == CollectiveStatus::Failed) {
      throw NumericError("all-reduce round " + std::to_string(round) + " failed: " +
                         rd.ring.handle().failure_reason());
    }
    const std::size_t p = num_nodes_;
    const std::size_t steps = rd.ring.num_steps();
    // arrival[q]: when rank q received its chunk for the latest step.
    // A rank's outgoing link carries one chunk at a time.
    std::vector<double> arrival(p, 0.0), next(p), link_free(rd.contributed_at);
    for (std::size_t k = 0; k < steps; ++k) {
      for (std::size_t q = 0; q < p; ++q) {
        const double send = k == 0 ? link_free[q] : std::max(link_free[q], arrival[q]);
        link_free[q] = send + step_time_;
        next[(q + 1) % p] = send + step_time_;
      }
      arrival.swap(next);
    }
    for (std::size_t q = 0; q < p; ++q) {
      const double done = steps == 0 ? queue_.now() : arrival[q];
      queue_.push(done, q, EventKind::CollectiveDone, round);
    }
  }

  EventQueue& queue_;
  std::size_t num_nodes_;
  std::size_t dim_;
  std::size_t bpe_;
  double step_time_;
  CountingTransport transport_;
  std::map<std::uint64_t, Round> rounds_;
};

// Common stop rule: once the eval budget is hit at time T, the remaining
// gradient completions stamped T still land, then the run ends.
struct StopState {
  bool stopping = false;
  double stop_time = 0.0;
  bool rounds_reached = false;
};

// ---------------------------------------------------------------------------

class LasgdSim {
 public:
  LasgdSim(const ClusterSpec& cluster, const HyperParams& hyper, const Problem& problem, std::uint64_t target,
           const RunOptions& options, RunTrace& trace)
      : cluster_(cluster),
        hyper_(hyper),
        problem_(problem),
        target_(target),
        options_(options),
        trace_(trace),
        nodes_(make_nodes(cluster, hyper, problem)),
        comms_(queue_, cluster, problem.x0.dim()),
        book_(trace, *problem.oracle, cluster.num_nodes, options.record_models),
        extra_(cluster.num_nodes) {
    for (auto& e : extra_) e.applied = ParamVector(problem.x0.dim());
  }

  void run() {
    for (auto& n : nodes_) queue_.push(next_compute_time(cluster_, n), n.state.rank, EventKind::GradDone);
    while (!queue_.empty() && !stop_.rounds_reached) {
      if (stop_.stopping && queue_.top().time > stop_.stop_time) break;
      const SimEvent ev = queue_.pop();
      if (stop_.stopping && ev.kind != EventKind::GradDone) continue;
      if (ev.kind == EventKind::GradDone) {
        on_grad_done(ev.rank);
      } else {
        on_delivery(ev.tag, ev.rank);
      }
    }
    std::vector<double> idle;
    for (std::size_t r = 0; r < nodes_.size(); ++r) {
      if (extra_[r].waiting) extra_[r].idle += queue_.now() - extra_[r].wait_since;
      idle.push_back(extra_[r].idle);
      trace_.schedules[r].trailing_steps = extra_[r].steps_since_finalize;
    }
    finish_trace(trace_, *problem_.oracle, ring_mean(nodes_), queue_.now(), evals_, std::move(idle));
  }

 private:
  struct Extra {
    bool initialized = false;
    bool waiting = false;
    double wait_since = 0.0;
    double idle = 0.0;
    std::size_t steps_since_finalize = 0;
    ParamVector applied;
  };

  void on_grad_done(std::size_t rank) {
    NodeRuntime& node = nodes_[rank];
    Extra& ex = extra_[rank];
    if (!ex.initialized) {
      lasgd_initialize(node.state, *problem_.oracle, node.sampler, hyper_.schedule, comms_, hyper_.modifier);
      ex.initialized = true;
    } else {
      const AppliedStep step =
          lasgd_compute_step(node.state, *problem_.oracle, node.sampler, hyper_.schedule, hyper_.modifier);
      ++ex.steps_since_finalize;
      if (options_.record_models) ex.applied.add_scaled(step.eta, step.direction);
    }
    ++evals_;
    if (target_ > 0 && evals_ >= target_ && !stop_.stopping) {
      stop_.stopping = true;
      stop_.stop_time = queue_.now();
    }
    if (stop_.stopping) return;
    boundary(rank);
  }

  void on_delivery(std::uint64_t round, std::size_t rank) {
    auto d = comms_.deliver(round, rank);
    if (d.last) {
      book_.collective_done(round, queue_.now(), std::move(d.center), std::move(d.bytes),
                            lr_at(hyper_.schedule, nodes_[0].state.local_clock));
    }
    Extra& ex = extra_[rank];
    if (!ex.waiting) return;
    ex.waiting = false;
    ex.idle += queue_.now() - ex.wait_since;
    boundary(rank);
  }

  void boundary(std::size_t rank) {
    NodeRuntime& node = nodes_[rank];
    Extra& ex = extra_[rank];
    for (;;) {
      switch (lasgd_next_action(node.state)) {
        case NodeAction::Finalized: {
          const std::uint64_t round = node.state.global_clock;
          const std::size_t tau = node.state.tau;
          lasgd_finalize_round(node.state, comms_);
          trace_.schedules[rank].round_taus.push_back(tau);
          ex.steps_since_finalize = 0;
          book_.node_finalized(round, rank, tau, options_.record_models ? &ex.applied : nullptr, evals_);
          if (options_.record_models) ex.applied = ParamVector(ex.applied.dim());
          if (options_.max_rounds > 0 && book_.emitted() >= options_.max_rounds) {
            stop_.rounds_reached = true;
            return;
          }
          break;
        }
        case NodeAction::ComputedStep:
          queue_.push(queue_.now() + next_compute_time(cluster_, node), rank, EventKind::GradDone);
          return;
        case NodeAction::WaitingOnCollective:
          ex.waiting = true;
          ex.wait_since = queue_.now();
          return;
      }
    }
  }

  const ClusterSpec& cluster_;
  const HyperParams& hyper_;
  const Problem& problem_;
  std::uint64_t target_;
  const RunOptions& options_;
  RunTrace& trace_;
  EventQueue queue_;
  std::vector<NodeRuntime> nodes_;
  SimCollectives comms_;
  RoundBook book_;
  std::vector<Extra> extra_;
  std::uint64_t evals_ = 0;
  StopState stop_;
};

// ---------------------------------------------------------------------------

class SgdArSim {
 public:
  SgdArSim(const ClusterSpec& cluster, const HyperParams& hyper, const Problem& problem, std::uint64_t target,
           const RunOptions& options, RunTrace& trace)
      : cluster_(cluster),
        hyper_(hyper),
        problem_(problem),
        target_(target),
        options_(options),
        trace_(trace),
        nodes_(make_nodes(cluster, hyper, problem)),
        comms_(queue_, cluster, problem.x0.dim()),
        book_(trace, *problem.oracle, cluster.num_nodes, options.record_models),
        grad_done_at_(cluster.num_nodes, 0.0),
        idle_(cluster.num_nodes, 0.0) {}

  void run() {
    for (auto& n : nodes_) schedule_gradient(n);
    while (!queue_.empty() && !done_) {
      const SimEvent ev = queue_.pop();
      if (ev.kind == EventKind::GradDone) {
        on_grad_done(ev.rank);
      } else {
        on_delivery(ev.tag, ev.rank);
      }
    }
    finish_trace(trace_, *problem_.oracle, ring_mean(nodes_), queue_.now(), evals_, idle_);
  }

 private:
  void schedule_gradient(NodeRuntime& node) {
    queue_.push(queue_.now() + next_compute_time(cluster_, node), node.state.rank, EventKind::GradDone);
  }

  /// Every round costs exactly P evaluations, so whether `round` is the last
  /// one is known before it starts.
  bool is_last_round(std::uint64_t round) const {
    const std::uint64_t evals_after = (round + 1) * nodes_.size();
    return (target_ > 0 && evals_after >= target_) || (options_.max_rounds > 0 && round + 1 >= options_.max_rounds);
  }

  void on_grad_done(std::size_t rank) {
    NodeRuntime& node = nodes_[rank];
    ParamVector g = problem_.oracle->evaluate(node.state.x_local, node.sampler.next()).grad;
    ++node.state.local_clock;
    ++evals_;
    grad_done_at_[rank] = queue_.now();
    node.state.pending = comms_.submit(rank, node.state.global_clock, std::move(g));
  }

  void on_delivery(std::uint64_t round, std::size_t rank) {
    auto d = comms_.deliver(round, rank);
    NodeRuntime& node = nodes_[rank];
    const double eta = lr_at(hyper_.schedule, round);
    const ParamVector& mean = node.state.pending->result(rank);
    ParamVector applied;
    if (options_.record_models) {
      applied = mean;
      applied.scale(eta);
    }
    apply_mean_gradient(node.state, mean, eta);
    node.state.pending.reset();
    idle_[rank] += queue_.now() - grad_done_at_[rank];
    trace_.schedules[rank].round_taus.push_back(1);

    if (d.last) {
      for (std::size_t r = 1; r < nodes_.size(); ++r) {
        if (nodes_[r].state.x_local != nodes_[0].state.x_local) {
          throw std::runtime_error("sgd-ar: node models diverged in round " + std::to_string(round));
        }
      }
      book_.collective_done(round, queue_.now(), nodes_[0].state.x_local, std::move(d.bytes), eta);
    }
    book_.node_finalized(round, rank, 1, options_.record_models ? &applied : nullptr, evals_);
    if (is_last_round(round)) {
      done_ = d.last;
      return;
    }
    schedule_gradient(node);
  }

  const ClusterSpec& cluster_;
  const HyperParams& hyper_;
  const Problem& problem_;
  std::uint64_t target_;
  const RunOptions& options_;
  RunTrace& trace_;
  EventQueue queue_;
  std::vector<NodeRuntime> nodes_;
  SimCollectives comms_;
  RoundBook book_;
  std::vector<double> grad_done_at_;
  std::vector<double> idle_;
  std::uint64_t evals_ = 0;
  bool done_ = false;
};

// ---------------------------------------------------------------------------

/// Centralized elastic averaging: every node takes tau_max local steps, then
/// queues for a symmetric exchange with the center. The center serves one
/// exchange at a time (a full model each way).
class EasgdSim {
 public:
  EasgdSim(const ClusterSpec& cluster, const HyperParams& hyper, const Problem& problem, std::uint64_t target,
           const RunOptions& options, RunTrace& trace)
      : cluster_(cluster),
        hyper_(hyper),
        problem_(problem),
        target_(target),
        options_(options),
        trace_(trace),
        nodes_(make_nodes(cluster, hyper, problem)),
        center_(problem.x0),
        exchange_time_(2.0 * model_transfer_duration(problem.x0.dim(), cluster.bytes_per_element, cluster.link)),
        model_bytes_(problem.x0.dim() * cluster.bytes_per_element),
        requested_at_(cluster.num_nodes, 0.0),
        idle_(cluster.num_nodes, 0.0),
        steps_since_record_(cluster.num_nodes, 0) {
    trace_.summary.bytes_per_node.assign(cluster.num_nodes, 0);
  }

  void run() {
    for (auto& n : nodes_) queue_.push(next_compute_time(cluster_, n), n.state.rank, EventKind::GradDone);
    while (!queue_.empty() && !stop_.rounds_reached) {
      if (stop_.stopping && queue_.top().time > stop_.stop_time) break;
      const SimEvent ev = queue_.pop();
      if (stop_.stopping && ev.kind != EventKind::GradDone) continue;
      if (ev.kind == EventKind::GradDone) {
        on_grad_done(ev.rank);
      } else {
        on_exchange_done(ev.rank);
      }
    }
    for (std::size_t r = 0; r < nodes_.size(); ++r) {
      trace_.schedules[r].trailing_steps = nodes_[r].state.tau;
    }
    finish_trace(trace_, *problem_.oracle, center_, queue_.now(), evals_, idle_);
  }

 private:
  void on_grad_done(std::size_t rank) {
    NodeRuntime& node = nodes_[rank];
    lasgd_compute_step(node.state, *problem_.oracle, node.sampler, hyper_.schedule, hyper_.modifier);
    ++evals_;
    ++steps_since_record_[rank];
    if (target_ > 0 && evals_ >= target_ && !stop_.stopping) {
      stop_.stopping = true;
      stop_.stop_time = queue_.now();
    }
    if (stop_.stopping) return;
    if (node.state.tau < node.state.tau_max) {
      queue_.push(queue_.now() + next_compute_time(cluster_, node), rank, EventKind::GradDone);
      return;
    }
    requested_at_[rank] = queue_.now();
    if (!server_busy_) {
      start_exchange(rank);
    } else {
      waiting_.push_back(rank);
    }
  }

  void start_exchange(std::size_t rank) {
    server_busy_ = true;
    queue_.push(queue_.now() + exchange_time_, rank, EventKind::CollectiveDone);
  }

  void on_exchange_done(std::size_t rank) {
    NodeRuntime& node = nodes_[rank];
    auto [x, z] = easgd_round_robin_exchange(node.state.x_local, center_, hyper_.alpha);
    node.state.x_local = std::move(x);
    node.state.x_snapshot = node.state.x_local;
    center_ = std::move(z);
    trace_.schedules[rank].round_taus.push_back(node.state.tau);
    node.state.tau = 0;
    ++node.state.global_clock;
    idle_[rank] += queue_.now() - requested_at_[rank];
    trace_.summary.bytes_per_node[rank] += model_bytes_;
    total_bytes_ += 2 * model_bytes_;  // node -> center and center -> node
    trace_.summary.total_bytes = total_bytes_;

    if (++exchanges_ % nodes_.size() == 0) record_round();
    if (options_.max_rounds > 0 && trace_.rounds.size() >= options_.max_rounds) {
      stop_.rounds_reached = true;
      return;
    }

    server_busy_ = false;
    if (!waiting_.empty()) {
      const std::size_t next = waiting_.front();
      waiting_.erase(waiting_.begin());
      start_exchange(next);
    }
    queue_.push(queue_.now() + next_compute_time(cluster_, node), rank, EventKind::GradDone);
  }

  void record_round() {
    RoundRecord rec;
    rec.round = trace_.rounds.size();
    rec.time_s = queue_.now();
    rec.node_tau = steps_since_record_;
    std::fill(steps_since_record_.begin(), steps_since_record_.end(), 0);
    rec.loss = problem_.oracle->full_loss(center_);
    rec.eta = lr_at(hyper_.schedule, nodes_[0].state.local_clock);
    rec.grad_evals = evals_;
    rec.bytes_sent = total_bytes_;
    if (options_.record_models) rec.center = center_;
    trace_.rounds.push_back(std::move(rec));
    trace_.summary.rounds = trace_.rounds.size();
  }

  const ClusterSpec& cluster_;
  const HyperParams& hyper_;
  const Problem& problem_;
  std::uint64_t target_;
  const RunOptions& options_;
  RunTrace& trace_;
  EventQueue queue_;
  std::vector<NodeRuntime> nodes_;
  ParamVector center_;
  double exchange_time_;
  std::uint64_t model_bytes_;
  std::vector<double> requested_at_;
  std::vector<double> idle_;
  std::vector<std::size_t> steps_since_record_;
  std::vector<std::size_t> waiting_;
  bool server_busy_ = false;
  std::uint64_t exchanges_ = 0;
  std::uint64_t evals_ = 0;
  std::uint64_t total_bytes_ = 0;
  StopState stop_;
};

}  // namespace

RunTrace run_simulated(const ClusterSpec& cluster, Algorithm algo, const HyperParams& hyper, const Problem& problem,
                       std::uint64_t target_evals, const RunOptions& options) {
  RunTrace trace;
  init_trace(trace, algo, cluster, problem);
  try {
    switch (algo) {
      case Algorithm::Lasgd: LasgdSim(cluster, hyper, problem, target_evals, options, trace).run(); break;
      case Algorithm::SgdAllReduce: SgdArSim(cluster, hyper, problem, target_evals, options, trace).run(); break;
      case Algorithm::Easgd: EasgdSim(cluster, hyper, problem, target_evals, options, trace).run(); break;
    }
  } catch (const NumericError& e) {
    throw SimulationAborted(e.what(), std::move(trace));
  }
  return trace;
}

}  // namespace detail
}  // namespace lasgd
