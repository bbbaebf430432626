#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "llb/hparams.hpp"
#include "llb/learners.hpp"
#include "llb/metrics.hpp"
#include "llb/streams.hpp"

namespace llb {

enum class Phase { cross_validation, evaluation };

/// Everything a training pass writes besides the learner state.
struct RunLog {
  AccuracyTensor test;
  AccuracyTensor memory;  // accuracy on the stored memory of task j at boundary k
  std::vector<std::uint64_t> violations_at_boundary;  // cumulative
  std::vector<double> task_step_seconds;               // mean step time per task
  std::map<SampleId, std::uint32_t> visits;            // training visits per sample
  std::set<TaskId> tasks_read;                         // every task whose data was touched
};

/// Exact test accuracy of tasks 0..upto of the stream.
std::vector<double> eval_all(const Model& model, const TaskStream& stream, std::size_t upto);

/// Trains over the stream in order, one pass unless the learner's epochs say
/// otherwise (rejected on the evaluation phase without study mode). On a
/// numeric failure the exception propagates and `log` keeps what was recorded.
void run_single_pass(Learner& learner, const TaskStream& stream, std::uint64_t seed, RunLog& log,
                     Phase phase = Phase::evaluation);

/// Multi-task baseline: one shuffled pass over the union of all tasks'
/// training data, evaluated once at the end (row T-1 of the test tensor).
void run_multitask(Learner& learner, const TaskStream& stream, std::uint64_t seed, RunLog& log,
                   Phase phase = Phase::evaluation);

struct CvResult {
  std::size_t best = 0;            // first index attaining the maximum
  std::vector<double> scores;      // A on the CV stream, NaN for failed candidates
  std::set<TaskId> tasks_read;
  std::set<SampleId> samples_seen;
};

/// Trains every candidate from the learner's initial state (reset between
/// candidates) and leaves the learner reset with the winning setting.
/// Throws ProtocolError if every candidate fails numerically.
CvResult cross_validate(Learner& learner, const TaskStream& cv_stream, const std::vector<HyperParams>& grid,
                        std::uint64_t seed);

struct StreamConfig {
  std::string kind = "permuted-mnist";  // or "synthetic-split"
  std::size_t tasks = 20;
  std::size_t cv_tasks = 3;
  std::size_t train_per_task = 1000;  // permuted-mnist
  std::size_t test_per_task = 1000;
  std::string data_dir;               // IDX files; empty = $LLB_DATA_DIR, then synthetic
  SplitStreamOptions split;           // synthetic-split

  friend bool operator==(const StreamConfig&, const StreamConfig&) = default;
};

struct GridConfig {
  std::vector<double> lr{0.3, 0.1, 0.03, 0.01, 0.003, 0.001, 0.0003, 0.0001};
  std::vector<double> lambda{1, 10, 100, 1000, 10000};  // EWC only
  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct ExperimentConfig {
  StreamConfig stream;
  std::string learner = "agem";
  std::vector<std::size_t> hidden{256, 256};
  HyperParams hparams;  // defaults for everything the grid does not sweep
  GridConfig grid;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string out_dir = "results";
  std::size_t jobs = 1;

  /// Throws ConfigError with a field-level message.
  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Candidate settings in grid order: lr outermost, lambda (EWC only) inner.
std::vector<HyperParams> expand_grid(const ExperimentConfig& config, const LearnerSpec& spec);

/// Builds the task continuum for one seed.
Continuum build_continuum(const StreamConfig& stream, std::uint64_t seed);

/// Per-task heads for every task of the continuum (one shared head when the
/// tasks share a label space), or the joint-embedding head.
Architecture make_architecture(const Continuum& continuum, const std::vector<std::size_t>& hidden,
                               bool joint_embedding);

/// Initial model for a seed, with task descriptors registered in joint-embedding mode.
Model make_initial_model(const Continuum& continuum, const Architecture& arch, std::uint64_t seed);

using ProgressFn = std::function<void(const std::string&)>;

/// Summarizes an evaluation-phase log.
MetricsReport make_report(const Learner& learner, const RunLog& log, std::size_t beta);

/// Cross-validation, reset, evaluation pass and audits for one seed.
MetricsReport run_seed(const ExperimentConfig& config, std::uint64_t seed, const ProgressFn& progress = {});

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<MetricsReport> reports;  // one per seed, in config order
  AggregateReport aggregate;
  double wall_seconds = 0.0;
};

/// Seeds run in parallel up to config.jobs.
ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

}  // namespace llb
