#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "llb/data.hpp"

// Dense ReLU feed-forward network over one flat parameter vector.
//
// theta layout: trunk layers in order (weight [out x in] row-major, then
// bias [out]), followed by either one head per task (weight [C_k x D], bias
// [C_k]) in ascending task id order, or the attribute table [A x D] in
// joint-embedding mode. D is the trunk output width.

namespace llb {

enum class Activation { relu };
enum class HeadMode { per_task, joint_embedding };

struct HeadSpec {
  TaskId task = 0;
  std::size_t classes = 0;
  std::vector<TaskId> aliases;  // further tasks routed to this same head (shared label space)
  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_layers;
  Activation activation = Activation::relu;
  HeadMode head_mode = HeadMode::per_task;
  std::vector<HeadSpec> heads;      // per-task mode
  std::size_t attribute_count = 0;  // joint-embedding mode

  /// Trunk output width (last hidden width, or input_dim with no hidden layer).
  std::size_t embedding_dim() const;
  /// Throws ConfigError on zero dimensions, duplicate head ids or overflow.
  void validate() const;
  std::size_t parameter_count() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct Slice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct DenseSlot {
  Slice weight;
  Slice bias;
  std::size_t in = 0;
  std::size_t out = 0;
};

struct GradientVector {
  std::vector<double> values;

  GradientVector() = default;
  explicit GradientVector(std::size_t n) : values(n, 0.0) {}
  explicit GradientVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  std::span<double> span() { return values; }
  std::span<const double> span() const { return values; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

class Model {
 public:
  Model() = default;
  /// Lays out theta for `arch` (all zeros). Throws ConfigError on invalid arch.
  explicit Model(Architecture arch);

  const Architecture& arch() const { return arch_; }
  std::size_t parameter_count() const { return theta_.size(); }

  std::vector<double>& theta() { return theta_; }
  const std::vector<double>& theta() const { return theta_; }

  const std::vector<DenseSlot>& trunk() const { return trunk_; }
  bool has_head(TaskId task) const { return heads_.contains(task); }
  /// Throws MissingHeadError for an unregistered task.
  const DenseSlot& head(TaskId task) const;
  /// Task id -> head; aliased tasks map to the slot of their owner.
  const std::map<TaskId, DenseSlot>& heads() const { return heads_; }
  /// Region of theta occupied by heads or the attribute table.
  Slice head_region() const { return head_region_; }

  const Slice& attribute_table() const { return table_; }

  /// Joint-embedding mode: task descriptors (C_k x A) used when routing by task id.
  void set_descriptor(TaskId task, Matrix descriptor);
  bool has_descriptor(TaskId task) const { return descriptors_.contains(task); }
  const Matrix& descriptor(TaskId task) const;

  std::span<const double> view(Slice s) const { return {theta_.data() + s.offset, s.size}; }
  std::span<double> view(Slice s) { return {theta_.data() + s.offset, s.size}; }

 private:
  Architecture arch_;
  std::vector<double> theta_;
  std::vector<DenseSlot> trunk_;
  std::map<TaskId, DenseSlot> heads_;
  Slice table_;
  Slice head_region_;
  std::map<TaskId, Matrix> descriptors_;
};

struct LossGrad {
  double loss = 0.0;
  GradientVector grad;
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
Model init_model(const Architecture& arch, std::uint64_t seed);

/// Logits [batch x C_task]. Routes by batch.task through the per-task head or
/// the registered descriptor in joint-embedding mode.
Matrix forward(const Model& model, const Batch& batch);

/// Mean softmax cross-entropy and its exact gradient w.r.t. all of theta.
LossGrad loss_and_grad(const Model& model, const Batch& batch);

/// Loss and gradient over several single-task groups, weighted by group size
/// (equal to the mean over the union of all samples).
LossGrad loss_and_grad(const Model& model, std::span<const Batch> groups);

/// theta -= lr * grad. Throws NumericError on non-finite gradient entries.
void apply_update(Model& model, const GradientVector& grad, double lr);

/// Mean softmax cross-entropy of precomputed logits.
double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Fraction of samples whose argmax logit equals the label.
double accuracy(const Model& model, const SampleSet& samples, TaskId task);
double accuracy(const Model& model, const Batch& batch);

}  // namespace llb
