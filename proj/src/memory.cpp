#include "llb/memory.hpp"

#include <algorithm>
#include <iterator>
#include <numeric>

#include "llb/errors.hpp"

namespace llb {

std::size_t EpisodicMemory::total_size() const {
  std::size_t n = 0;
  for (const auto& [task, b] : buffers_) n += b.size();
  return n;
}

void EpisodicMemory::update(const TaskDataset& task, Rng& rng) {
  if (buffers_.contains(task.task))
    throw StateError("episodic memory already holds task " + std::to_string(task.task));
  std::vector<std::size_t> all(task.train.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> picked;
  const std::size_t n = std::min(capacity_, all.size());
  std::sample(all.begin(), all.end(), std::back_inserter(picked), n, rng);
  buffers_.emplace(task.task, task.train.gather(picked, task.task));
}

void EpisodicMemory::update(const TaskDataset& task, std::uint64_t seed) {
  Rng rng(seed);
  update(task, rng);
}

std::vector<Batch> EpisodicMemory::sample_ref_batch(std::size_t size, Rng& rng) const {
  std::vector<Batch> groups;
  const std::size_t total = total_size();
  if (total == 0 || size == 0) return groups;

  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> picked;
  std::sample(all.begin(), all.end(), std::back_inserter(picked), std::min(size, total), rng);

  // `picked` is ascending; walk buffers in task order consuming it.
  auto it = picked.begin();
  std::size_t base = 0;
  std::vector<std::size_t> local;
  for (const auto& [task, buf] : buffers_) {
    local.clear();
    while (it != picked.end() && *it < base + buf.size()) local.push_back(*it++ - base);
    base += buf.size();
    if (local.empty()) continue;
    Batch g;
    g.task = task;
    g.inputs = Matrix(local.size(), buf.inputs.cols);
    for (std::size_t r = 0; r < local.size(); ++r) {
      auto from = buf.inputs.row(local[r]);
      std::copy(from.begin(), from.end(), g.inputs.row(r).begin());
      g.labels.push_back(buf.labels[local[r]]);
      g.ids.push_back(buf.ids[local[r]]);
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<const Batch*> EpisodicMemory::per_task_batches() const {
  std::vector<const Batch*> out;
  out.reserve(buffers_.size());
  for (const auto& [task, buf] : buffers_) out.push_back(&buf);
  return out;
}

}  // namespace llb
