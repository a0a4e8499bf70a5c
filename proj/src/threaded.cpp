// Threaded backend: one thread per node plus one transport thread that runs
// ring steps. Compute and link times are emulated with sleeps scaled by
// ClusterSpec::time_scale; reported times are in modeled seconds.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "lasgd/harness.hpp"
#include "run_support.hpp"

namespace lasgd::detail {
namespace {

using Clock = std::chrono::steady_clock;

class ModelClock {
 public:
  explicit ModelClock(double time_scale) : scale_(time_scale), start_(Clock::now()) {}

  double now() const {
    const double real = std::chrono::duration<double>(Clock::now() - start_).count();
    return scale_ > 0.0 ? real / scale_ : real;
  }

  void sleep(double model_seconds) const {
    if (scale_ > 0.0 && model_seconds > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(model_seconds * scale_));
    }
  }

 private:
  double scale_;
  Clock::time_point start_;
};

/// Shared stop flag and the condition nodes block on while waiting.
struct Coordination {
  std::mutex mu;
  std::condition_variable progress;
  bool stop = false;
  std::exception_ptr error;

  void request_stop() {
    {
      std::lock_guard lock(mu);
      stop = true;
    }
    progress.notify_all();
  }

  void fail(std::exception_ptr e) {
    {
      std::lock_guard lock(mu);
      if (!error) error = e;
      stop = true;
    }
    progress.notify_all();
  }

  bool stopped() {
    std::lock_guard lock(mu);
    return stop;
  }

  /// Blocks until the handle resolves or the run stops. Returns false on stop.
  bool wait_for(const CollectiveHandle& h) {
    std::unique_lock lock(mu);
    progress.wait(lock, [&] { return stop || h.status() != CollectiveStatus::InFlight; });
    return h.status() != CollectiveStatus::InFlight;
  }
};

using DoneCallback = std::function<void(std::uint64_t round, const CollectiveHandle& handle, double time)>;

class ThreadedCollectives final : public CollectiveEndpoint {
 public:
  ThreadedCollectives(const ClusterSpec& cluster, std::size_t dim, const ModelClock& clock, Coordination& coord,
                      DoneCallback on_done)
      : num_nodes_(cluster.num_nodes),
        dim_(dim),
        bpe_(cluster.bytes_per_element),
        step_time_(ring_step_duration(cluster.num_nodes, dim, cluster.bytes_per_element, cluster.link)),
        clock_(clock),
        coord_(coord),
        on_done_(std::move(on_done)),
        transport_(cluster.num_nodes, cluster.bytes_per_element),
        worker_([this] { loop(); }) {}

  ~ThreadedCollectives() override { shutdown(); }

  CollectiveHandle submit(std::size_t rank, std::uint64_t round, ParamVector contribution) override {
    std::lock_guard lock(mu_);
    auto it = rings_.try_emplace(round, round, num_nodes_, dim_, bpe_).first;
    it->second.contribute(rank, std::move(contribution));
    if (it->second.ready()) {
      ready_.push_back(round);
      cv_.notify_one();
    }
    return it->second.handle();
  }

  void shutdown() {
    {
      std::lock_guard lock(mu_);
      if (closing_) return;
      closing_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

 private:
  void loop() {
    for (;;) {
      RingAllReduce* ring = nullptr;
      std::uint64_t round = 0;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closing_ || !ready_.empty(); });
        if (closing_) return;
        round = ready_.front();
        ready_.pop_front();
        ring = &rings_.at(round);
      }
      try {
        const std::size_t steps = ring->num_steps();
        for (std::size_t k = 0; k < steps && !ring->finished(); ++k) {
          clock_.sleep(step_time_);
          ring->advance(transport_);
        }
        if (!ring->finished()) ring->advance(transport_);
        const CollectiveHandle h = ring->handle();
        if (h.status() == CollectiveStatus::Failed) {
          throw NumericError("all-reduce round " + std::to_string(round) + " failed: " + h.failure_reason());
        }
        on_done_(round, h, clock_.now());
      } catch (...) {
        coord_.fail(std::current_exception());
      }
      {
        std::lock_guard lock(mu_);
        rings_.erase(round);
      }
      // Take the coordination lock so a node between its predicate check and
      // its wait cannot miss this wakeup.
      { std::lock_guard lock(coord_.mu); }
      coord_.progress.notify_all();
    }
  }

  std::size_t num_nodes_;
  std::size_t dim_;
  std::size_t bpe_;
  double step_time_;
  const ModelClock& clock_;
  Coordination& coord_;
  DoneCallback on_done_;
  CountingTransport transport_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, RingAllReduce> rings_;
  std::deque<std::uint64_t> ready_;
  bool closing_ = false;
  std::thread worker_;
};

std::vector<std::uint64_t> bytes_of(const CollectiveHandle& h, std::size_t num_nodes) {
  std::vector<std::uint64_t> b(num_nodes);
  for (std::size_t r = 0; r < num_nodes; ++r) b[r] = h.bytes_sent(r);
  return b;
}

void run_node_threads(std::size_t num_nodes, Coordination& coord, const std::function<void(std::size_t)>& body) {
  std::vector<std::thread> threads;
  threads.reserve(num_nodes);
  for (std::size_t r = 0; r < num_nodes; ++r) {
    threads.emplace_back([&, r] {
      try {
        body(r);
      } catch (...) {
        coord.fail(std::current_exception());
      }
    });
  }
  for (auto& t : threads) t.join();
}

// ---------------------------------------------------------------------------

void run_lasgd(const ClusterSpec& cluster, const HyperParams& hyper, const Problem& problem, std::uint64_t target,
               const RunOptions& options, RunTrace& trace) {
  const std::size_t P = cluster.num_nodes;
  const ModelClock clock(cluster.time_scale);
  Coordination coord;
  std::vector<NodeRuntime> nodes = make_nodes(cluster, hyper, problem);
  std::mutex book_mu;
  RoundBook book(trace, *problem.oracle, P, options.record_models);
  std::vector<std::atomic<std::uint64_t>> clocks(P);
  std::atomic<std::uint64_t> evals{0};
  std::vector<double> idle(P, 0.0);

  ThreadedCollectives comms(cluster, problem.x0.dim(), clock, coord,
                            [&](std::uint64_t round, const CollectiveHandle& h, double time) {
                              std::lock_guard lock(book_mu);
                              book.collective_done(round, time, h.result(0), bytes_of(h, P),
                                                   lr_at(hyper.schedule, clocks[0].load()));
                            });

  auto count_eval = [&] {
    if (evals.fetch_add(1) + 1 >= target && target > 0) coord.request_stop();
  };

  auto finalize = [&](std::size_t r, ParamVector& applied) {
    NodeState& st = nodes[r].state;
    const std::uint64_t round = st.global_clock;
    const std::size_t tau = st.tau;
    lasgd_finalize_round(st, comms);
    std::lock_guard lock(book_mu);
    trace.schedules[r].round_taus.push_back(tau);
    book.node_finalized(round, r, tau, options.record_models ? &applied : nullptr, evals.load());
    if (options.record_models) applied = ParamVector(applied.dim());
    if (options.max_rounds > 0 && book.emitted() >= options.max_rounds) coord.request_stop();
  };

  auto step = [&](std::size_t r, ParamVector& applied) {
    NodeRuntime& node = nodes[r];
    clock.sleep(next_compute_time(cluster, node));
    const AppliedStep s = lasgd_compute_step(node.state, *problem.oracle, node.sampler, hyper.schedule, hyper.modifier);
    clocks[r].store(node.state.local_clock);
    if (options.record_models) applied.add_scaled(s.eta, s.direction);
  };

  auto wait = [&](std::size_t r) {
    const double since = clock.now();
    const bool resolved = coord.wait_for(*nodes[r].state.pending);
    idle[r] += clock.now() - since;
    return resolved;
  };

  run_node_threads(P, coord, [&](std::size_t r) {
    NodeRuntime& node = nodes[r];
    ParamVector applied(problem.x0.dim());
    clock.sleep(next_compute_time(cluster, node));
    lasgd_initialize(node.state, *problem.oracle, node.sampler, hyper.schedule, comms, hyper.modifier);
    clocks[r].store(node.state.local_clock);

    if (options.replay) {
      // Follow a recorded schedule exactly; the outcome no longer depends on timing.
      const NodeSchedule& plan = (*options.replay)[r];
      evals.fetch_add(1);
      for (const std::size_t tau : plan.round_taus) {
        for (std::size_t k = 0; k < tau; ++k) {
          step(r, applied);
          evals.fetch_add(1);
        }
        if (!wait(r)) return;
        finalize(r, applied);
      }
      for (std::size_t k = 0; k < plan.trailing_steps; ++k) {
        step(r, applied);
        evals.fetch_add(1);
      }
      return;
    }

    count_eval();
    std::size_t since_finalize = 0;
    while (!coord.stopped()) {
      switch (lasgd_next_action(node.state)) {
        case NodeAction::Finalized:
          finalize(r, applied);
          since_finalize = 0;
          break;
        case NodeAction::ComputedStep:
          step(r, applied);
          ++since_finalize;
          count_eval();
          break;
        case NodeAction::WaitingOnCollective:
          wait(r);
          break;
      }
    }
    std::lock_guard lock(book_mu);
    trace.schedules[r].trailing_steps = since_finalize;
  });
  if (options.replay) {
    for (std::size_t r = 0; r < P; ++r) trace.schedules[r].trailing_steps = (*options.replay)[r].trailing_steps;
  }
  const double wall = clock.now();
  comms.shutdown();
  if (coord.error) std::rethrow_exception(coord.error);
  finish_trace(trace, *problem.oracle, ring_mean(nodes), wall, evals.load(), idle);
}

// ---------------------------------------------------------------------------

void run_sgd_ar(const ClusterSpec& cluster, const HyperParams& hyper, const Problem& problem, std::uint64_t target,
                const RunOptions& options, RunTrace& trace) {
  const std::size_t P = cluster.num_nodes;
  const ModelClock clock(cluster.time_scale);
  Coordination coord;
  std::vector<NodeRuntime> nodes = make_nodes(cluster, hyper, problem);
  std::mutex book_mu;
  RoundBook book(trace, *problem.oracle, P, false);
  std::vector<double> idle(P, 0.0);
  // Mirror of the (identical) node models, advanced by the transport thread so
  // the round record is complete the moment the collective is.
  ParamVector mirror = problem.x0;

  ThreadedCollectives comms(cluster, problem.x0.dim(), clock, coord,
                            [&](std::uint64_t round, const CollectiveHandle& h, double time) {
                              const double eta = lr_at(hyper.schedule, round);
                              mirror.add_scaled(-eta, h.result(0));
                              std::lock_guard lock(book_mu);
                              book.collective_done(round, time, mirror, bytes_of(h, P), eta);
                            });

  run_node_threads(P, coord, [&](std::size_t r) {
    NodeRuntime& node = nodes[r];
    for (std::uint64_t round = 0;; ++round) {
      if (coord.stopped()) return;
      clock.sleep(next_compute_time(cluster, node));
      ParamVector g = problem.oracle->evaluate(node.state.x_local, node.sampler.next()).grad;
      ++node.state.local_clock;
      const CollectiveHandle h = comms.submit(r, round, std::move(g));
      const double since = clock.now();
      if (!coord.wait_for(h)) return;
      idle[r] += clock.now() - since;
      const double eta = lr_at(hyper.schedule, round);
      apply_mean_gradient(node.state, h.result(r), eta);
      {
        std::lock_guard lock(book_mu);
        trace.schedules[r].round_taus.push_back(1);
        book.node_finalized(round, r, 1, nullptr, (round + 1) * P);
      }
      const bool budget_hit = target > 0 && (round + 1) * P >= target;
      const bool rounds_hit = options.max_rounds > 0 && round + 1 >= options.max_rounds;
      if (budget_hit || rounds_hit) return;
    }
  });
  const double wall = clock.now();
  comms.shutdown();
  if (coord.error) std::rethrow_exception(coord.error);
  for (std::size_t r = 1; r < P; ++r) {
    if (nodes[r].state.x_local != nodes[0].state.x_local) throw std::runtime_error("sgd-ar: node models diverged");
  }
  std::uint64_t evals = 0;
  for (const auto& n : nodes) evals += n.state.local_clock;
  finish_trace(trace, *problem.oracle, ring_mean(nodes), wall, evals, idle);
}

// ---------------------------------------------------------------------------

void run_easgd(const ClusterSpec& cluster, const HyperParams& hyper, const Problem& problem, std::uint64_t target,
               const RunOptions& options, RunTrace& trace) {
  const std::size_t P = cluster.num_nodes;
  const ModelClock clock(cluster.time_scale);
  Coordination coord;
  std::vector<NodeRuntime> nodes = make_nodes(cluster, hyper, problem);
  const double exchange_time = 2.0 * model_transfer_duration(problem.x0.dim(), cluster.bytes_per_element, cluster.link);
  const std::uint64_t model_bytes = problem.x0.dim() * cluster.bytes_per_element;

  std::mutex server_mu;
  ParamVector center = problem.x0;
  std::uint64_t exchanges = 0;
  std::uint64_t total_bytes = 0;
  std::vector<std::size_t> steps_since_record(P, 0);
  std::vector<double> idle(P, 0.0);
  std::atomic<std::uint64_t> evals{0};
  trace.summary.bytes_per_node.assign(P, 0);

  run_node_threads(P, coord, [&](std::size_t r) {
    NodeRuntime& node = nodes[r];
    while (!coord.stopped()) {
      clock.sleep(next_compute_time(cluster, node));
      lasgd_compute_step(node.state, *problem.oracle, node.sampler, hyper.schedule, hyper.modifier);
      if (evals.fetch_add(1) + 1 >= target && target > 0) coord.request_stop();
      {
        std::lock_guard lock(server_mu);
        ++steps_since_record[r];
      }
      if (coord.stopped()) break;
      if (node.state.tau < node.state.tau_max) continue;

      const double since = clock.now();
      std::lock_guard lock(server_mu);
      clock.sleep(exchange_time);
      idle[r] += clock.now() - since;
      auto [x, z] = easgd_round_robin_exchange(node.state.x_local, center, hyper.alpha);
      node.state.x_local = std::move(x);
      node.state.x_snapshot = node.state.x_local;
      center = std::move(z);
      trace.schedules[r].round_taus.push_back(node.state.tau);
      node.state.tau = 0;
      ++node.state.global_clock;
      trace.summary.bytes_per_node[r] += model_bytes;
      total_bytes += 2 * model_bytes;
      if (++exchanges % P == 0) {
        RoundRecord rec;
        rec.round = trace.rounds.size();
        rec.time_s = clock.now();
        rec.node_tau = steps_since_record;
        std::fill(steps_since_record.begin(), steps_since_record.end(), 0);
        rec.loss = problem.oracle->full_loss(center);
        rec.eta = lr_at(hyper.schedule, node.state.local_clock);
        rec.grad_evals = evals.load();
        rec.bytes_sent = total_bytes;
        if (options.record_models) rec.center = center;
        trace.rounds.push_back(std::move(rec));
        if (options.max_rounds > 0 && trace.rounds.size() >= options.max_rounds) coord.request_stop();
      }
    }
  });
  const double wall = clock.now();
  if (coord.error) std::rethrow_exception(coord.error);
  trace.summary.total_bytes = total_bytes;
  for (std::size_t r = 0; r < P; ++r) trace.schedules[r].trailing_steps = nodes[r].state.tau;
  finish_trace(trace, *problem.oracle, center, wall, evals.load(), idle);
}

}  // namespace

RunTrace run_threaded(const ClusterSpec& cluster, Algorithm algo, const HyperParams& hyper, const Problem& problem,
                      std::uint64_t target_evals, const RunOptions& options) {
  RunTrace trace;
  init_trace(trace, algo, cluster, problem);
  try {
    switch (algo) {
      case Algorithm::Lasgd: run_lasgd(cluster, hyper, problem, target_evals, options, trace); break;
      case Algorithm::SgdAllReduce: run_sgd_ar(cluster, hyper, problem, target_evals, options, trace); break;
      case Algorithm::Easgd: run_easgd(cluster, hyper, problem, target_evals, options, trace); break;
    }
  } catch (const NumericError& e) {
    throw SimulationAborted(e.what(), std::move(trace));
  }
  return trace;
}

}  // namespace lasgd::detail
