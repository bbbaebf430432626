#pragma once

// Small hand-made tasks and batches shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "llb/data.hpp"
#include "llb/nn.hpp"
#include "llb/rng.hpp"
#include "llb/streams.hpp"

namespace llb::test {

/// Sample id namespace of a toy task: train and test never collide.
inline SampleId toy_id(TaskId task, bool test, std::size_t i) {
  return (static_cast<SampleId>(task + 1) << 32) | (static_cast<SampleId>(test) << 31) | i;
}

/// Gaussian clusters: class c is centred on 2 * e_{(c + shift) mod dim}.
inline SampleSet toy_samples(std::size_t n, std::size_t dim, std::size_t classes, std::size_t shift, Rng& rng,
                             TaskId task, bool test) {
  std::normal_distribution<double> noise(0.0, 0.5);
  SampleSet set;
  set.inputs.cols = dim;
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % classes);
    for (auto& v : x) v = noise(rng);
    x[(static_cast<std::size_t>(label) + shift) % dim] += 2.0;
    set.push_back(x, label, toy_id(task, test, i));
  }
  return set;
}

inline TaskPtr toy_task(TaskId task, std::size_t n_train, std::size_t n_test, std::size_t dim, std::size_t classes,
                        std::uint64_t seed) {
  Rng rng = make_rng(seed, "toy-task", static_cast<std::uint64_t>(task));
  auto t = std::make_shared<TaskDataset>();
  t->task = task;
  const std::size_t shift = static_cast<std::size_t>(task) * classes;
  t->train = toy_samples(n_train, dim, classes, shift, rng, task, false);
  t->test = toy_samples(n_test, dim, classes, shift, rng, task, true);
  t->descriptor = static_cast<int>(task);
  for (std::size_t c = 0; c < classes; ++c) t->label_set.push_back(static_cast<int>(shift + c));
  return t;
}

inline TaskStream toy_stream(std::size_t tasks, std::size_t n_train = 40, std::size_t n_test = 30,
                             std::size_t dim = 12, std::size_t classes = 3, std::uint64_t seed = 11) {
  std::vector<TaskPtr> v;
  for (std::size_t k = 0; k < tasks; ++k) v.push_back(toy_task(static_cast<TaskId>(k), n_train, n_test, dim, classes, seed));
  return TaskStream(std::move(v));
}

/// Per-task heads for every task of the stream.
inline Architecture toy_arch(const TaskStream& stream, std::vector<std::size_t> hidden = {8}) {
  Architecture arch;
  arch.input_dim = stream[0].train.dim();
  arch.hidden_layers = std::move(hidden);
  for (const auto& t : stream) arch.heads.push_back({t->task, t->classes(), {}});
  return arch;
}

inline Batch random_batch(std::size_t n, std::size_t dim, std::size_t classes, TaskId task, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 1);
  Batch b;
  b.task = task;
  b.inputs = Matrix(n, dim);
  for (double& v : b.inputs.data) v = gauss(rng);
  for (std::size_t i = 0; i < n; ++i) {
    b.labels.push_back(label(rng));
    b.ids.push_back(i);
  }
  return b;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace llb::test
