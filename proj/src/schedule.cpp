#include "lasgd/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lasgd {

std::vector<std::string> LrSchedule::validate() const {
  std::vector<std::string> errors;
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) errors.push_back("base_lr must be > 0");
  if (scale_nodes < 1) errors.push_back("scale_nodes must be >= 1");
  if (!(warmup_epochs >= 0.0)) errors.push_back("warmup_epochs must be >= 0");
  if (!(decay_factor > 0.0)) errors.push_back("decay_factor must be > 0");
  if (steps_per_epoch < 1) errors.push_back("steps_per_epoch must be >= 1");
  if (!std::is_sorted(decay_epochs.begin(), decay_epochs.end())) errors.push_back("decay_epochs must be ascending");
  return errors;
}

double lr_at(const LrSchedule& schedule, std::uint64_t step) {
  const double epoch = static_cast<double>(step) / static_cast<double>(schedule.steps_per_epoch);
  const double peak = schedule.peak_lr();
  if (schedule.warmup_epochs > 0.0 && epoch < schedule.warmup_epochs) {
    return schedule.base_lr + (peak - schedule.base_lr) * (epoch / schedule.warmup_epochs);
  }
  double lr = peak;
  for (double boundary : schedule.decay_epochs) {
    if (epoch >= boundary) lr /= schedule.decay_factor;
  }
  return lr;
}

BatchSampler::BatchSampler(std::vector<std::size_t> shard, std::size_t batch_size, std::uint64_t seed)
    : order_(std::move(shard)), batch_size_(batch_size), rng_(seed) {
  if (order_.empty()) throw std::invalid_argument("BatchSampler: empty shard");
  if (batch_size_ == 0) throw std::invalid_argument("BatchSampler: batch size must be >= 1");
  batch_size_ = std::min(batch_size_, order_.size());
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::span<const std::size_t> BatchSampler::next() {
  if (cursor_ + batch_size_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  std::span<const std::size_t> batch(order_.data() + cursor_, batch_size_);
  cursor_ += batch_size_;
  return batch;
}

}  // namespace lasgd
