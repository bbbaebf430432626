#include "llb/data.hpp"

#include <algorithm>
#include <stdexcept>

namespace llb {

void SampleSet::push_back(std::span<const double> x, int label, SampleId id) {
  if (inputs.rows == 0 && inputs.cols == 0) inputs.cols = x.size();
  if (x.size() != inputs.cols) throw std::invalid_argument("SampleSet::push_back: dimension mismatch");
  inputs.data.insert(inputs.data.end(), x.begin(), x.end());
  ++inputs.rows;
  labels.push_back(label);
  ids.push_back(id);
}

Batch SampleSet::gather(std::span<const std::size_t> indices, TaskId task) const {
  Batch b;
  b.task = task;
  b.inputs = Matrix(indices.size(), inputs.cols);
  b.labels.reserve(indices.size());
  b.ids.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= size()) throw std::out_of_range("SampleSet::gather: index out of range");
    auto from = inputs.row(src);
    std::copy(from.begin(), from.end(), b.inputs.row(r).begin());
    b.labels.push_back(labels[src]);
    b.ids.push_back(ids[src]);
  }
  return b;
}

Batch SampleSet::as_batch(TaskId task) const {
  Batch b;
  b.task = task;
  b.inputs = inputs;
  b.labels = labels;
  b.ids = ids;
  return b;
}

SampleSet SampleSet::subset(std::span<const std::size_t> indices) const {
  Batch b = gather(indices, 0);
  SampleSet out;
  out.inputs = std::move(b.inputs);
  out.labels = std::move(b.labels);
  out.ids = std::move(b.ids);
  return out;
}

}  // namespace llb
