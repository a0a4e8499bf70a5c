#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lasgd/param_vector.hpp"

namespace lasgd {

// ---------------------------------------------------------------------------
// Ring schedule

struct RingStep {
  std::size_t send_chunk = 0;
  std::size_t recv_chunk = 0;
  std::size_t send_to = 0;    // ring successor
  std::size_t recv_from = 0;  // ring predecessor
};

/**
 * Per-rank plan for a ring all-reduce over P ranks in 2(P-1) lockstep steps.
 *
 * Reduce-scatter (steps 0..P-2): at step s rank r sends chunk (r-s-1) mod P
 * and folds the incoming chunk (r-s-2) mod P into its own copy, so after the
 * phase rank r owns the fully reduced chunk r.
 * All-gather (steps P-1..2P-3): at step P-1+k rank r forwards chunk (r-k) mod P
 * and overwrites chunk (r-k-1) mod P with what it receives.
 *
 * Chunk c is therefore summed as a left fold starting at rank c+1:
 * ((x_{c+1} + x_{c+2}) + ...) + x_c, indices mod P.
 */
class RingSchedule {
 public:
  explicit RingSchedule(std::size_t num_ranks);

  std::size_t num_ranks() const noexcept { return num_ranks_; }
  std::size_t num_steps() const noexcept { return num_ranks_ < 2 ? 0 : 2 * (num_ranks_ - 1); }
  bool is_reduce_scatter(std::size_t step) const noexcept { return step + 1 < num_ranks_; }
  const RingStep& step(std::size_t rank, std::size_t s) const { return steps_[rank][s]; }

 private:
  std::size_t num_ranks_;
  std::vector<std::vector<RingStep>> steps_;
};

RingSchedule ring_schedule(std::size_t num_ranks);

// ---------------------------------------------------------------------------
// Transport

class TransportFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChunkMessage {
  std::uint64_t round = 0;
  std::size_t step = 0;
  std::size_t src = 0;
  std::size_t dst = 0;
  std::size_t chunk = 0;
  std::vector<double> payload;
};

/// Point-to-point carrier used by the ring. carry() throws TransportFault on failure.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void carry(const ChunkMessage& msg) = 0;
};

/**
 * In-process transport that only counts. Tracks bytes sent per rank and the
 * largest single-step payload per rank; can inject a fault after a given
 * number of messages.
 */
class CountingTransport final : public Transport {
 public:
  explicit CountingTransport(std::size_t num_ranks, std::size_t bytes_per_element = sizeof(double));

  void carry(const ChunkMessage& msg) override;

  void inject_fault_after(std::uint64_t messages, std::string reason);

  std::uint64_t bytes_sent(std::size_t rank) const { return bytes_sent_.at(rank); }
  std::uint64_t peak_payload_bytes(std::size_t rank) const { return peak_payload_.at(rank); }
  std::uint64_t messages() const noexcept { return messages_; }
  void reset_counters();

 private:
  std::size_t bytes_per_element_;
  std::vector<std::uint64_t> bytes_sent_;
  std::vector<std::uint64_t> peak_payload_;
  std::uint64_t messages_ = 0;
  std::optional<std::uint64_t> fault_after_;
  std::string fault_reason_;
};

// ---------------------------------------------------------------------------
// Handles

enum class CollectiveStatus { InFlight, Complete, Failed };

const char* to_string(CollectiveStatus status) noexcept;

/**
 * Shared view of one all-reduce. Status moves InFlight -> Complete or
 * InFlight -> Failed exactly once; results are published before the status
 * store, so a reader that observes Complete sees every rank's result.
 */
class CollectiveHandle {
 public:
  CollectiveHandle() = default;
  CollectiveHandle(std::uint64_t round, std::size_t num_ranks);

  bool valid() const noexcept { return static_cast<bool>(state_); }
  std::uint64_t round() const;
  CollectiveStatus status() const;

  /// Mean as seen by `rank`. Throws unless Complete.
  const ParamVector& result(std::size_t rank) const;
  std::uint64_t bytes_sent(std::size_t rank) const;
  std::string failure_reason() const;

  // Producer side.
  void complete(std::vector<ParamVector> per_rank, std::vector<std::uint64_t> bytes_sent);
  void fail(std::string reason);

 private:
  struct State {
    std::uint64_t round = 0;
    std::atomic<CollectiveStatus> status{CollectiveStatus::InFlight};
    std::vector<ParamVector> results;
    std::vector<std::uint64_t> bytes;
    mutable std::mutex mu;
    std::string reason;
  };
  std::shared_ptr<State> state_;
};

/// Non-destructive status read.
CollectiveStatus poll(const CollectiveHandle& handle);

// ---------------------------------------------------------------------------
// Ring engine

/**
 * One ring all-reduce computing the elementwise mean. Contributions arrive
 * independently; once all ranks have contributed, advance() runs one lockstep
 * ring step per call. Division by P happens once, after the all-gather, on
 * every rank, so all ranks hold bit-identical means.
 */
class RingAllReduce {
 public:
  RingAllReduce(std::uint64_t round, std::size_t num_ranks, std::size_t dim,
                std::size_t bytes_per_element = sizeof(double));

  const CollectiveHandle& handle() const noexcept { return handle_; }
  std::uint64_t round() const noexcept { return round_; }

  /// A dimension mismatch fails the collective instead of throwing.
  void contribute(std::size_t rank, ParamVector contribution);
  bool ready() const noexcept { return contributed_ == buffers_.size(); }
  bool has_contribution(std::size_t rank) const { return present_.at(rank); }

  std::size_t num_steps() const noexcept { return schedule_.num_steps(); }
  std::size_t steps_done() const noexcept { return steps_done_; }
  bool finished() const noexcept { return handle_.status() != CollectiveStatus::InFlight; }

  /// Runs the next ring step, or completes when no steps remain. A transport
  /// fault marks the handle Failed.
  void advance(Transport& transport);
  void run_to_completion(Transport& transport);
  void fail(std::string reason);

 private:
  void finish();

  std::uint64_t round_;
  std::size_t dim_;
  std::size_t bytes_per_element_;
  RingSchedule schedule_;
  ChunkSpec chunks_;
  std::vector<ParamVector> buffers_;
  std::vector<bool> present_;
  std::size_t contributed_ = 0;
  std::size_t steps_done_ = 0;
  std::vector<std::uint64_t> bytes_;
  CollectiveHandle handle_;
};

/// Runs a full ring all-reduce over `contributions` (one per rank) and
/// returns the resolved handle, Complete or Failed.
CollectiveHandle all_reduce_average(std::span<const ParamVector> contributions, Transport& transport,
                                    std::uint64_t round = 0);

/// Exact bytes `rank` transmits during one all-reduce, from the schedule.
std::uint64_t bytes_per_rank(std::size_t dim, std::size_t num_ranks, std::size_t bytes_per_element,
                             std::size_t rank);
/// Largest per-rank total; equals every rank's total when P divides dim.
std::uint64_t bytes_per_node(std::size_t dim, std::size_t num_ranks, std::size_t bytes_per_element);
/// Largest single message: the biggest chunk.
std::uint64_t per_step_payload_bytes(std::size_t dim, std::size_t num_ranks, std::size_t bytes_per_element);

/**
 * Entry point a node uses to hand its model to the next all-reduce. The
 * simulated and threaded backends each provide one.
 */
class CollectiveEndpoint {
 public:
  virtual ~CollectiveEndpoint() = default;
  virtual CollectiveHandle submit(std::size_t rank, std::uint64_t round, ParamVector contribution) = 0;
};

}  // namespace lasgd
