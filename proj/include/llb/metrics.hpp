#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "llb/hparams.hpp"

// Accuracy log a(k, i, j): accuracy on the test split of task j after the
// i-th minibatch of task k. Task indices are 0-based positions in the
// evaluated stream; i = 0 is the evaluation before any minibatch of task k
// and i = B_k the end-of-task evaluation.

namespace llb {

class AccuracyTensor {
 public:
  using Key = std::tuple<std::size_t, std::size_t, std::size_t>;

  AccuracyTensor() = default;
  explicit AccuracyTensor(std::vector<std::size_t> batches_per_task) : batches_(std::move(batches_per_task)) {}

  std::size_t tasks() const { return batches_.size(); }
  std::size_t batches(std::size_t k) const { return batches_.at(k); }
  const std::vector<std::size_t>& batch_counts() const { return batches_; }

  /// Throws LogError on out-of-range indices, accuracy outside [0,1], or a
  /// second record of the same key with a different value.
  void record(std::size_t k, std::size_t i, std::size_t j, double acc);

  std::optional<double> get(std::size_t k, std::size_t i, std::size_t j) const;
  /// Throws LogError naming the missing (k, i, j).
  double at(std::size_t k, std::size_t i, std::size_t j) const;
  double end_of_task(std::size_t k, std::size_t j) const { return at(k, batches_.at(k), j); }

  const std::map<Key, double>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  friend bool operator==(const AccuracyTensor&, const AccuracyTensor&) = default;

 private:
  std::vector<std::size_t> batches_;
  std::map<Key, double> entries_;
};

/// Average accuracy after task k over tasks 0..k.
double avg_accuracy(const AccuracyTensor& t, std::size_t k);

enum class ForgettingScope {
  all_previous,   // max over every earlier boundary l < k
  since_learned,  // max over l in [j, k): entries before task j was learned do not exist (memory tensors)
};

struct Forgetting {
  double mean = 0.0;
  std::vector<double> per_task;  // f_j for j < k
};

/// f_j = max_l a(l, B_l, j) - a(k, B_k, j); throws std::domain_error for k = 0.
Forgetting forgetting(const AccuracyTensor& t, std::size_t k, ForgettingScope scope = ForgettingScope::all_previous);

double worst_case_forgetting(const AccuracyTensor& t, std::size_t k,
                             ForgettingScope scope = ForgettingScope::all_previous);

struct LearningCurve {
  std::vector<double> z;  // Z_b for b = 0..beta
  double lca = 0.0;
};

/// Z_b = mean over tasks of a(k, b, k); LCA = mean of Z_0..Z_beta.
LearningCurve lca(const AccuracyTensor& t, std::size_t beta);

/// (k, a(k, 0, k)) for every task that has a zero-shot entry, ascending k.
std::vector<std::pair<std::size_t, double>> zero_shot_series(const AccuracyTensor& t);

struct AuditReport {
  bool single_pass = true;
  bool isolation = true;
  bool reset = true;
  std::string detail;

  bool ok() const { return single_pass && isolation && reset; }
  friend bool operator==(const AuditReport&, const AuditReport&) = default;
};

struct MetricsReport {
  std::string learner;
  std::uint64_t seed = 0;
  HyperParams hparams;               // selected setting
  std::vector<double> cv_scores;     // A on the CV stream per grid candidate (NaN = failed)

  double avg_accuracy = 0.0;         // A_T
  std::optional<double> forgetting;  // F_T
  std::optional<double> worst_forgetting_test;
  std::optional<double> worst_forgetting_memory;
  std::optional<double> lca;         // LCA_beta
  std::size_t beta = 0;
  std::vector<double> z_curve;                    // Z_0..Z_beta
  std::vector<std::vector<double>> b_shot;        // a(k, b, k) per task, b = 0..beta
  std::vector<double> zero_shot;                  // a(k, 0, k) per task
  std::vector<double> final_accuracies;           // a(T, B_T, j)
  std::uint64_t violations = 0;
  std::vector<std::uint64_t> violations_at_boundary;  // cumulative, per task
  double mean_step_seconds = 0.0;
  std::vector<double> task_step_seconds;          // mean step time within each task
  std::size_t parameters = 0;
  AuditReport audit;

  friend bool operator==(const MetricsReport&, const MetricsReport&);
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single value)
  std::size_t n = 0;
};

/// Ignores NaN / missing values.
MeanStd mean_std(const std::vector<double>& values);

struct AggregateReport {
  std::string learner;
  MeanStd avg_accuracy;
  MeanStd forgetting;
  MeanStd lca;
  MeanStd worst_forgetting_test;
  MeanStd worst_forgetting_memory;
  MeanStd mean_step_seconds;
  MeanStd violations;
};

AggregateReport aggregate(const std::vector<MetricsReport>& reports);

}  // namespace llb
