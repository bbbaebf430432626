#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "llb/data.hpp"

namespace llb {

/// Integer task id, or a C_k x A matrix of class attributes.
using TaskDescriptor = std::variant<int, Matrix>;

struct TaskDataset {
  TaskId task = 0;
  SampleSet train;
  SampleSet test;
  TaskDescriptor descriptor;
  std::vector<int> label_set;  // global class id of each within-task label

  std::size_t classes() const { return label_set.size(); }
  bool has_attributes() const { return std::holds_alternative<Matrix>(descriptor); }
  const Matrix& attributes() const { return std::get<Matrix>(descriptor); }
};

using TaskPtr = std::shared_ptr<const TaskDataset>;

/// Ordered, immutable sequence of tasks. Copies share the task data.
class TaskStream {
 public:
  TaskStream() = default;
  explicit TaskStream(std::vector<TaskPtr> tasks) : tasks_(std::move(tasks)) {}

  std::size_t size() const { return tasks_.size(); }
  bool empty() const { return tasks_.empty(); }
  const TaskDataset& operator[](std::size_t i) const { return *tasks_[i]; }
  const TaskPtr& ptr(std::size_t i) const { return tasks_[i]; }
  auto begin() const { return tasks_.begin(); }
  auto end() const { return tasks_.end(); }

 private:
  std::vector<TaskPtr> tasks_;
};

struct Continuum {
  TaskStream tasks;
  std::size_t cv_split = 0;  // T^CV: the first cv_split tasks form the CV stream
  bool shared_label_space = false;  // every task uses the same classes (one output head)
};

/// Images and labels of a source dataset before any task construction.
struct BaseDataset {
  SampleSet train;
  SampleSet test;
};

/// Reads an IDX image/label pair (big-endian, magic 0x00000803 / 0x00000801).
/// Pixels are scaled to [0,1]. `limit` > 0 keeps only the first `limit` items.
SampleSet load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t limit = 0);

/// Looks for the four standard MNIST files in `dir`; nullopt if any is missing.
std::optional<BaseDataset> find_mnist(const std::filesystem::path& dir, std::size_t train_limit = 0,
                                      std::size_t test_limit = 0);

/// Offline stand-in for MNIST: 28x28 pseudo-digits in [0,1] built from
/// pen-trace prototypes redrawn with jittered control points, stroke width and shift.
BaseDataset make_synthetic_mnist(std::size_t n_train, std::size_t n_test, std::uint64_t seed);

struct PermutedStreamOptions {
  std::size_t tasks = 20;
  std::size_t cv_tasks = 3;
  std::size_t train_per_task = 0;  // 0 = whole base train split
  std::size_t test_per_task = 0;   // 0 = whole base test split
};

/// Task k applies pixel permutation pi_k to every image; pi of the first
/// task is the identity. Descriptors are Integer(k). All tasks share the
/// ten digit classes.
Continuum make_permuted_stream(const BaseDataset& base, const PermutedStreamOptions& opts, std::uint64_t seed);

/// Pixel permutation used for task `k` (0-based) of a permuted stream.
std::vector<std::size_t> task_permutation(std::size_t k, std::size_t dim, std::uint64_t seed);

struct SplitStreamOptions {
  std::size_t num_classes = 100;
  std::size_t classes_per_task = 5;
  std::size_t tasks = 20;
  std::size_t cv_tasks = 3;
  std::size_t attributes = 32;
  std::size_t input_dim = 64;
  bool with_replacement = false;
  std::size_t train_per_class = 60;  // per occurrence of the class in a task
  std::size_t test_per_class = 40;
  double noise = 1.0;

  friend bool operator==(const SplitStreamOptions&, const SplitStreamOptions&) = default;
};

/// Class-level generator behind the synthetic attribute-split stream.
/// Class c has binary attributes a_c and input mean  projection * a_c.
struct SplitGenerator {
  Matrix class_attributes;  // num_classes x A
  Matrix projection;        // input_dim x A
  Matrix class_means;       // num_classes x input_dim
  std::vector<std::vector<int>> task_classes;  // global class ids per task
};

SplitGenerator make_split_generator(const SplitStreamOptions& opts, std::uint64_t seed);

Continuum make_synthetic_split_stream(const SplitStreamOptions& opts, std::uint64_t seed);

/// (CV stream, EV stream).
std::pair<TaskStream, TaskStream> split_cv_ev(const Continuum& continuum);

/// Shuffled index batches over n samples, `epochs` passes, last short batch kept.
std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n, std::size_t batch_size, std::mt19937_64& rng,
                                                        std::size_t epochs = 1);

std::vector<Batch> minibatches(const TaskDataset& dataset, std::size_t batch_size, std::uint64_t seed,
                               std::size_t epochs = 1);

}  // namespace llb
