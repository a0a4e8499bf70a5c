#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lasgd/random.hpp"

namespace lasgd {

/**
 * Warmup-then-step learning rate. Over the first `warmup_epochs` the rate
 * ramps linearly from base_lr to base_lr * scale_nodes; afterwards it is
 * base_lr * scale_nodes divided by decay_factor once for every decay epoch
 * already reached.
 */
struct LrSchedule {
  double base_lr = 0.1;
  std::size_t scale_nodes = 1;
  double warmup_epochs = 0.0;
  std::vector<double> decay_epochs;
  double decay_factor = 10.0;
  std::size_t steps_per_epoch = 1;

  double peak_lr() const noexcept { return base_lr * static_cast<double>(scale_nodes); }
  /// Violations as human-readable strings; empty when valid.
  std::vector<std::string> validate() const;
};

double lr_at(const LrSchedule& schedule, std::uint64_t step);

/**
 * Mini-batches drawn without replacement from one node's shard. The shard is
 * reshuffled at the start of every epoch; a trailing partial batch is
 * dropped. A batch size at or above the shard size yields the whole shard.
 */
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> shard, std::size_t batch_size, std::uint64_t seed);

  std::span<const std::size_t> next();

  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t batches_per_epoch() const noexcept { return order_.size() / batch_size_; }
  std::uint64_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
  Rng rng_;
};

}  // namespace lasgd
