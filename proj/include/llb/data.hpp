#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace llb {

using TaskId = int;
using SampleId = std::uint64_t;

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Inputs and within-task labels for one task, plus the stable ids of the
/// samples they came from (used for single-pass and disjointness audits).
struct Batch {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<SampleId> ids;
  TaskId task = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

/// Column-oriented sample storage: one row of `inputs` per sample.
struct SampleSet {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<SampleId> ids;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t dim() const { return inputs.cols; }

  void push_back(std::span<const double> x, int label, SampleId id);

  /// Copies the selected rows into a batch tagged with `task`.
  Batch gather(std::span<const std::size_t> indices, TaskId task) const;
  Batch as_batch(TaskId task) const;
  SampleSet subset(std::span<const std::size_t> indices) const;
};

}  // namespace llb
