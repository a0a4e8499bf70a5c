#include "lasgd/collective.hpp"

#include <algorithm>

namespace lasgd {

// ---------------------------------------------------------------------------
// RingSchedule

RingSchedule::RingSchedule(std::size_t num_ranks) : num_ranks_(num_ranks) {
  if (num_ranks == 0) throw std::invalid_argument("ring_schedule: need at least one rank");
  const std::size_t p = num_ranks;
  const std::size_t steps = num_steps();
  auto mod = [p](std::size_t base, std::size_t minus) { return (base + p * 4 - minus % p) % p; };
  steps_.assign(p, std::vector<RingStep>(steps));
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t s = 0; s < steps; ++s) {
      RingStep& st = steps_[r][s];
      st.send_to = (r + 1) % p;
      st.recv_from = (r + p - 1) % p;
      if (is_reduce_scatter(s)) {
        st.send_chunk = mod(r, s + 1);
        st.recv_chunk = mod(r, s + 2);
      } else {
        const std::size_t k = s - (p - 1);
        st.send_chunk = mod(r, k);
        st.recv_chunk = mod(r, k + 1);
      }
    }
  }
}

RingSchedule ring_schedule(std::size_t num_ranks) { return RingSchedule(num_ranks); }

// ---------------------------------------------------------------------------
// CountingTransport

CountingTransport::CountingTransport(std::size_t num_ranks, std::size_t bytes_per_element)
    : bytes_per_element_(bytes_per_element), bytes_sent_(num_ranks, 0), peak_payload_(num_ranks, 0) {}

void CountingTransport::carry(const ChunkMessage& msg) {
  if (fault_after_ && messages_ >= *fault_after_) throw TransportFault(fault_reason_);
  ++messages_;
  const std::uint64_t bytes = msg.payload.size() * bytes_per_element_;
  bytes_sent_.at(msg.src) += bytes;
  peak_payload_.at(msg.src) = std::max(peak_payload_.at(msg.src), bytes);
}

void CountingTransport::inject_fault_after(std::uint64_t messages, std::string reason) {
  fault_after_ = messages;
  fault_reason_ = std::move(reason);
}

void CountingTransport::reset_counters() {
  std::fill(bytes_sent_.begin(), bytes_sent_.end(), 0);
  std::fill(peak_payload_.begin(), peak_payload_.end(), 0);
  messages_ = 0;
}

// ---------------------------------------------------------------------------
// CollectiveHandle

const char* to_string(CollectiveStatus status) noexcept {
  switch (status) {
    case CollectiveStatus::InFlight: return "in_flight";
    case CollectiveStatus::Complete: return "complete";
    case CollectiveStatus::Failed: return "failed";
  }
  return "unknown";
}

CollectiveHandle::CollectiveHandle(std::uint64_t round, std::size_t num_ranks) : state_(std::make_shared<State>()) {
  state_->round = round;
  state_->bytes.assign(num_ranks, 0);
}

std::uint64_t CollectiveHandle::round() const {
  if (!state_) throw std::logic_error("CollectiveHandle: empty handle");
  return state_->round;
}

CollectiveStatus CollectiveHandle::status() const {
  if (!state_) throw std::logic_error("CollectiveHandle: empty handle");
  return state_->status.load(std::memory_order_acquire);
}

const ParamVector& CollectiveHandle::result(std::size_t rank) const {
  const auto st = status();
  if (st != CollectiveStatus::Complete) {
    throw std::logic_error(std::string("CollectiveHandle: result requested while ") + to_string(st) +
                           (st == CollectiveStatus::Failed ? " (" + failure_reason() + ")" : ""));
  }
  return state_->results.at(rank);
}

std::uint64_t CollectiveHandle::bytes_sent(std::size_t rank) const {
  if (status() != CollectiveStatus::Complete) return 0;
  return state_->bytes.at(rank);
}

std::string CollectiveHandle::failure_reason() const {
  if (!state_) return {};
  std::lock_guard lock(state_->mu);
  return state_->reason;
}

void CollectiveHandle::complete(std::vector<ParamVector> per_rank, std::vector<std::uint64_t> bytes_sent) {
  if (status() != CollectiveStatus::InFlight) throw std::logic_error("CollectiveHandle: already resolved");
  state_->results = std::move(per_rank);
  state_->bytes = std::move(bytes_sent);
  state_->status.store(CollectiveStatus::Complete, std::memory_order_release);
}

void CollectiveHandle::fail(std::string reason) {
  if (status() != CollectiveStatus::InFlight) return;
  {
    std::lock_guard lock(state_->mu);
    state_->reason = std::move(reason);
  }
  state_->status.store(CollectiveStatus::Failed, std::memory_order_release);
}

CollectiveStatus poll(const CollectiveHandle& handle) { return handle.status(); }

// ---------------------------------------------------------------------------
// RingAllReduce

RingAllReduce::RingAllReduce(std::uint64_t round, std::size_t num_ranks, std::size_t dim,
                             std::size_t bytes_per_element)
    : round_(round),
      dim_(dim),
      bytes_per_element_(bytes_per_element),
      schedule_(num_ranks),
      chunks_(partition_chunks(dim, num_ranks)),
      buffers_(num_ranks),
      present_(num_ranks, false),
      bytes_(num_ranks, 0),
      handle_(round, num_ranks) {}

void RingAllReduce::contribute(std::size_t rank, ParamVector contribution) {
  if (rank >= buffers_.size()) throw std::out_of_range("RingAllReduce: rank out of range");
  if (present_[rank]) throw std::logic_error("RingAllReduce: rank contributed twice");
  present_[rank] = true;
  ++contributed_;
  if (contribution.dim() != dim_) {
    fail("dimension mismatch from rank " + std::to_string(rank) + ": " + std::to_string(contribution.dim()) +
         " vs " + std::to_string(dim_));
    return;
  }
  buffers_[rank] = std::move(contribution);
}

void RingAllReduce::advance(Transport& transport) {
  if (finished()) return;
  if (!ready()) throw std::logic_error("RingAllReduce: advance before all ranks contributed");
  if (steps_done_ == num_steps()) {
    finish();
    return;
  }
  const std::size_t s = steps_done_;
  const std::size_t p = buffers_.size();

  // Lockstep: every rank's outgoing chunk is captured before any is applied.
  std::vector<ChunkMessage> inbox(p);
  try {
    for (std::size_t r = 0; r < p; ++r) {
      const RingStep& st = schedule_.step(r, s);
      const ChunkRange range = chunks_[st.send_chunk];
      ChunkMessage msg{round_, s, r, st.send_to, st.send_chunk,
                       std::vector<double>(buffers_[r].values().begin() + range.begin,
                                           buffers_[r].values().begin() + range.end)};
      transport.carry(msg);
      bytes_[r] += msg.payload.size() * bytes_per_element_;
      inbox[st.send_to] = std::move(msg);
    }
  } catch (const TransportFault& fault) {
    fail(std::string("transport fault at step ") + std::to_string(s) + ": " + fault.what());
    return;
  }

  const bool reducing = schedule_.is_reduce_scatter(s);
  for (std::size_t r = 0; r < p; ++r) {
    const ChunkMessage& msg = inbox[r];
    const ChunkRange range = chunks_[msg.chunk];
    auto dst = buffers_[r].values().subspan(range.begin, range.size());
    for (std::size_t k = 0; k < dst.size(); ++k) {
      dst[k] = reducing ? msg.payload[k] + dst[k] : msg.payload[k];
    }
  }
  ++steps_done_;
  if (steps_done_ == num_steps()) finish();
}

void RingAllReduce::run_to_completion(Transport& transport) {
  while (!finished()) advance(transport);
}

void RingAllReduce::fail(std::string reason) { handle_.fail(std::move(reason)); }

void RingAllReduce::finish() {
  const double count = static_cast<double>(buffers_.size());
  for (auto& buf : buffers_) {
    for (double& v : buf.values()) v /= count;
    if (!buf.all_finite()) {
      fail("non-finite value in all-reduce result");
      return;
    }
  }
  handle_.complete(std::move(buffers_), bytes_);
  buffers_.clear();
}

CollectiveHandle all_reduce_average(std::span<const ParamVector> contributions, Transport& transport,
                                    std::uint64_t round) {
  if (contributions.empty()) throw std::invalid_argument("all_reduce_average: no contributions");
  RingAllReduce ring(round, contributions.size(), contributions.front().dim());
  for (std::size_t r = 0; r < contributions.size(); ++r) ring.contribute(r, contributions[r]);
  ring.run_to_completion(transport);
  return ring.handle();
}

std::uint64_t bytes_per_rank(std::size_t dim, std::size_t num_ranks, std::size_t bytes_per_element,
                             std::size_t rank) {
  if (rank >= num_ranks) throw std::out_of_range("bytes_per_rank: rank out of range");
  const RingSchedule schedule(num_ranks);
  const ChunkSpec chunks = partition_chunks(dim, num_ranks);
  std::uint64_t total = 0;
  for (std::size_t s = 0; s < schedule.num_steps(); ++s) {
    total += chunks[schedule.step(rank, s).send_chunk].size() * bytes_per_element;
  }
  return total;
}

std::uint64_t bytes_per_node(std::size_t dim, std::size_t num_ranks, std::size_t bytes_per_element) {
  std::uint64_t worst = 0;
  for (std::size_t r = 0; r < num_ranks; ++r) {
    worst = std::max(worst, bytes_per_rank(dim, num_ranks, bytes_per_element, r));
  }
  return worst;
}

std::uint64_t per_step_payload_bytes(std::size_t dim, std::size_t num_ranks, std::size_t bytes_per_element) {
  if (num_ranks < 2) return 0;
  return partition_chunks(dim, num_ranks).max_chunk_size() * bytes_per_element;
}

}  // namespace lasgd
