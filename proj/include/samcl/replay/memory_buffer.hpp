#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "samcl/core/errors.hpp"
#include "samcl/core/rng.hpp"

namespace samcl {

/// Reservoir-sampled store of past items (Algorithm R). After n insertions every
/// item seen so far is present with probability min(1, capacity / n).
template <class Item>
class MemoryBuffer {
 public:
  explicit MemoryBuffer(std::size_t capacity = 200, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {}

  void insert(Item item) {
    ++seen_;
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
      return;
    }
    const std::size_t slot = uniform_index(rng_, seen_);
    if (slot < capacity_) items_[slot] = std::move(item);
  }

  /// k items, uniformly with replacement when k exceeds the stored count, otherwise without.
  [[nodiscard]] std::vector<const Item*> sample(std::size_t k) {
    if (items_.empty()) throw EmptyBufferError();
    std::vector<const Item*> out;
    out.reserve(k);
    if (k > items_.size()) {
      for (std::size_t i = 0; i < k; ++i) out.push_back(&items_[uniform_index(rng_, items_.size())]);
      return out;
    }
    // Partial Fisher-Yates over slot indices.
    std::vector<std::size_t> slots(items_.size());
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_index(rng_, slots.size() - i);
      std::swap(slots[i], slots[j]);
      out.push_back(&items_[slots[i]]);
    }
    return out;
  }

  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t size() const noexcept { return items_.size(); }
  [[nodiscard]] bool empty() const noexcept { return items_.empty(); }
  [[nodiscard]] std::uint64_t seen() const noexcept { return seen_; }
  [[nodiscard]] const std::vector<Item>& items() const noexcept { return items_; }
  [[nodiscard]] const Rng& rng() const noexcept { return rng_; }

  /// Reassembles a buffer from checkpointed parts.
  static MemoryBuffer restore(std::size_t capacity, std::vector<Item> items, std::uint64_t seen, Rng rng) {
    MemoryBuffer buffer(capacity);
    buffer.items_ = std::move(items);
    buffer.seen_ = seen;
    buffer.rng_ = rng;
    return buffer;
  }

 private:
  std::size_t capacity_;
  std::vector<Item> items_;
  std::uint64_t seen_ = 0;
  Rng rng_;
};

}  // namespace samcl
