#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <vector>

#include "llb/data.hpp"
#include "llb/rng.hpp"
#include "llb/streams.hpp"

namespace llb {

/// Per-task sample buffers with a fixed per-task capacity m.
class EpisodicMemory {
 public:
  EpisodicMemory() = default;
  explicit EpisodicMemory(std::size_t per_task_capacity) : capacity_(per_task_capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t task_count() const { return buffers_.size(); }
  std::size_t total_size() const;
  bool empty() const { return buffers_.empty(); }
  bool contains(TaskId task) const { return buffers_.contains(task); }
  const Batch& buffer(TaskId task) const { return buffers_.at(task); }

  /// Stores min(m, n) training samples of `task` drawn uniformly without
  /// replacement. Throws StateError if the task is already stored.
  void update(const TaskDataset& task, Rng& rng);
  void update(const TaskDataset& task, std::uint64_t seed);

  /// min(size, total stored) samples drawn uniformly without replacement from
  /// the union of all buffers, grouped by originating task (ascending id).
  /// Empty result when the memory is empty.
  std::vector<Batch> sample_ref_batch(std::size_t size, Rng& rng) const;

  /// One full buffer per stored task, ascending task id.
  std::vector<const Batch*> per_task_batches() const;

  void clear() { buffers_.clear(); }

  friend bool operator==(const EpisodicMemory& a, const EpisodicMemory& b) {
    return a.capacity_ == b.capacity_ && a.buffers_.size() == b.buffers_.size() &&
           std::equal(a.buffers_.begin(), a.buffers_.end(), b.buffers_.begin(), [](auto& x, auto& y) {
             return x.first == y.first && x.second.ids == y.second.ids;
           });
  }

 private:
  std::size_t capacity_ = 0;
  std::map<TaskId, Batch> buffers_;
};

}  // namespace llb
