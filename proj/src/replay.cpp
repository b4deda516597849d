#include "fdimon/replay.hpp"

#include <algorithm>
#include <unordered_set>

#include "fdimon/errors.hpp"

namespace fdimon {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw UsageError("ReplayBuffer: capacity must be positive");
  ring_.reserve(capacity_);
}

void ReplayBuffer::push(Transition t) {
  if (size_ < capacity_) {
    ring_.push_back(std::move(t));
    ++size_;
  } else {
    ring_[head_] = std::move(t);
  }
  head_ = (head_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (batch == 0 || batch > size_)
    throw UsageError("ReplayBuffer::sample: batch must be in [1, size]");
  std::unordered_set<std::size_t> chosen;
  chosen.reserve(batch);
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t j = size_ - batch; j < size_; ++j) {
    const std::size_t t = static_cast<std::size_t>(rng.next_u64() % (j + 1));
    const std::size_t pick = chosen.count(t) ? j : t;
    chosen.insert(pick);
    out.push_back(&ring_[pick]);
  }
  return out;
}

void ReplayBuffer::clear() {
  ring_.clear();
  size_ = 0;
  head_ = 0;
}

}  // namespace fdimon
