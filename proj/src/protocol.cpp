#include "llb/protocol.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>

#include "llb/errors.hpp"
#include "llb/rng.hpp"

namespace llb {

namespace {

void check_epochs(const HyperParams& hp, Phase phase) {
  if (hp.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (phase == Phase::evaluation && hp.epochs != 1 && !hp.study_mode)
    throw ConfigError("the evaluation stream is single-pass: epochs must be 1 unless study_mode is set");
  if (hp.batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::size_t batch_count(std::size_t n, std::size_t batch_size, std::size_t epochs) {
  return epochs * ((n + batch_size - 1) / batch_size);
}

void emit(const ProgressFn& progress, const std::string& msg) {
  if (progress) progress(msg);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Real IDX data is loaded once per directory and shared between seeds.
std::shared_ptr<const BaseDataset> cached_mnist(const std::string& dir) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const BaseDataset>> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(dir); it != cache.end()) return it->second;
  std::shared_ptr<const BaseDataset> base;
  if (auto found = find_mnist(dir)) base = std::make_shared<const BaseDataset>(std::move(*found));
  cache.emplace(dir, base);
  return base;
}

}  // namespace

std::vector<double> eval_all(const Model& model, const TaskStream& stream, std::size_t upto) {
  std::vector<double> acc;
  for (std::size_t j = 0; j <= upto && j < stream.size(); ++j) acc.push_back(accuracy(model, stream[j].test, stream[j].task));
  return acc;
}

void run_single_pass(Learner& learner, const TaskStream& stream, std::uint64_t seed, RunLog& log, Phase phase) {
  if (learner.spec().kind == LearnerKind::multitask) {
    run_multitask(learner, stream, seed, log, phase);
    return;
  }
  const HyperParams hp = learner.hparams();
  check_epochs(hp, phase);
  const std::size_t T = stream.size();
  std::vector<std::size_t> counts(T);
  for (std::size_t k = 0; k < T; ++k) counts[k] = batch_count(stream[k].train.size(), hp.batch_size, hp.epochs);
  log = RunLog{};
  log.test = AccuracyTensor(counts);
  log.memory = AccuracyTensor(counts);

  for (std::size_t k = 0; k < T; ++k) {
    const TaskDataset& task = stream[k];
    log.tasks_read.insert(task.task);
    log.test.record(k, 0, k, accuracy(learner.model(), task.test, task.task));

    const auto batches = minibatches(task, hp.batch_size, derive_seed(seed, "shuffle", static_cast<std::uint64_t>(task.task)), hp.epochs);
    const double seconds_before = learner.state().step_seconds;
    const std::uint64_t steps_before = learner.state().steps;
    for (std::size_t b = 1; b <= batches.size(); ++b) {
      const Batch& batch = batches[b - 1];
      learner.step(batch);
      for (SampleId id : batch.ids) ++log.visits[id];
      if (b <= hp.beta) log.test.record(k, b, k, accuracy(learner.model(), task.test, task.task));
    }
    const std::uint64_t steps = learner.state().steps - steps_before;
    log.task_step_seconds.push_back(steps ? (learner.state().step_seconds - seconds_before) / static_cast<double>(steps)
                                          : 0.0);

    learner.end_task(task);

    const std::size_t end = counts[k];
    for (std::size_t j = 0; j < T; ++j) {
      log.tasks_read.insert(stream[j].task);
      log.test.record(k, end, j, accuracy(learner.model(), stream[j].test, stream[j].task));
    }
    if (learner.spec().uses_memory()) {
      const auto& memory = learner.state().memory;
      for (std::size_t j = 0; j <= k; ++j)
        if (memory.contains(stream[j].task))
          log.memory.record(k, end, j, accuracy(learner.model(), memory.buffer(stream[j].task)));
    }
    log.violations_at_boundary.push_back(learner.state().violation_count);
  }
}

void run_multitask(Learner& learner, const TaskStream& stream, std::uint64_t seed, RunLog& log, Phase phase) {
  const HyperParams hp = learner.hparams();
  check_epochs(hp, phase);
  const std::size_t T = stream.size();
  log = RunLog{};
  if (T == 0) return;

  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (task position, sample index)
  for (std::size_t k = 0; k < T; ++k) {
    log.tasks_read.insert(stream[k].task);
    for (std::size_t i = 0; i < stream[k].train.size(); ++i) pool.emplace_back(k, i);
  }
  const std::size_t steps = batch_count(pool.size(), hp.batch_size, hp.epochs);
  std::vector<std::size_t> counts(T, 0);
  counts.back() = steps;
  log.test = AccuracyTensor(counts);
  log.memory = AccuracyTensor(counts);

  Rng rng = make_rng(seed, "shuffle-multitask");
  const auto order = minibatch_indices(pool.size(), hp.batch_size, rng, hp.epochs);
  std::vector<std::vector<std::size_t>> per_task(T);
  for (const auto& chunk : order) {
    for (auto& v : per_task) v.clear();
    for (std::size_t p : chunk) per_task[pool[p].first].push_back(pool[p].second);
    std::vector<Batch> groups;
    for (std::size_t k = 0; k < T; ++k)
      if (!per_task[k].empty()) groups.push_back(stream[k].train.gather(per_task[k], stream[k].task));
    learner.step(groups);
    for (const auto& g : groups)
      for (SampleId id : g.ids) ++log.visits[id];
  }
  log.task_step_seconds.push_back(learner.state().steps ? learner.state().step_seconds /
                                                              static_cast<double>(learner.state().steps)
                                                        : 0.0);
  for (std::size_t j = 0; j < T; ++j)
    log.test.record(T - 1, steps, j, accuracy(learner.model(), stream[j].test, stream[j].task));
  log.violations_at_boundary.push_back(learner.state().violation_count);
}

CvResult cross_validate(Learner& learner, const TaskStream& cv_stream, const std::vector<HyperParams>& grid,
                        std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("hyper-parameter grid is empty");
  if (cv_stream.empty()) throw ConfigError("cross-validation stream is empty");
  CvResult result;
  for (const HyperParams& hp : grid) {
    learner.set_hparams(hp);
    learner.reset();
    RunLog log;
    double score = std::nan("");
    try {
      run_single_pass(learner, cv_stream, seed, log, Phase::cross_validation);
      score = avg_accuracy(log.test, cv_stream.size() - 1);
    } catch (const NumericError&) {
    }
    result.scores.push_back(score);
    result.tasks_read.insert(log.tasks_read.begin(), log.tasks_read.end());
    for (const auto& [id, n] : log.visits) result.samples_seen.insert(id);
  }
  bool any = false;
  for (std::size_t i = 0; i < result.scores.size(); ++i) {
    if (std::isnan(result.scores[i])) continue;
    if (!any || result.scores[i] > result.scores[result.best]) result.best = i;
    any = true;
  }
  if (!any) throw ProtocolError("every hyper-parameter candidate failed numerically during cross-validation");
  learner.set_hparams(grid[result.best]);
  learner.reset();
  return result;
}

void ExperimentConfig::validate() const {
  if (!parse_learner(learner)) {
    std::string names;
    for (const auto& n : learner_names()) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("learner: unknown name '" + learner + "' (valid: " + names + ")");
  }
  if (stream.kind != "permuted-mnist" && stream.kind != "synthetic-split")
    throw ConfigError("stream.kind: expected permuted-mnist or synthetic-split, got '" + stream.kind + "'");
  if (stream.tasks < 2 || stream.cv_tasks < 1 || stream.cv_tasks >= stream.tasks)
    throw ConfigError("stream: need tasks >= 2 and 1 <= cv_tasks < tasks");
  if (grid.lr.empty()) throw ConfigError("grid.lr: must be nonempty");
  for (double lr : grid.lr)
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("grid.lr: learning rates must be positive");
  if (parse_learner(learner)->kind == LearnerKind::ewc && grid.lambda.empty())
    throw ConfigError("grid.lambda: must be nonempty for ewc");
  for (double l : grid.lambda)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("grid.lambda: values must be nonnegative");
  if (seeds.empty()) throw ConfigError("seeds: must be nonempty");
  for (std::size_t w : hidden)
    if (w == 0) throw ConfigError("hidden: widths must be >= 1");
  if (hparams.batch_size < 1) throw ConfigError("hparams.batch_size: must be >= 1");
  if (hparams.epochs < 1) throw ConfigError("hparams.epochs: must be >= 1");
  if (hparams.epochs > 1 && !hparams.study_mode)
    throw ConfigError("hparams.epochs: > 1 requires hparams.study_mode");
  if (jobs < 1) throw ConfigError("jobs: must be >= 1");
}

std::vector<HyperParams> expand_grid(const ExperimentConfig& config, const LearnerSpec& spec) {
  std::vector<HyperParams> out;
  for (double lr : config.grid.lr) {
    HyperParams hp = config.hparams;
    hp.lr = lr;
    if (spec.kind == LearnerKind::ewc) {
      for (double lambda : config.grid.lambda) {
        hp.lambda = lambda;
        out.push_back(hp);
      }
    } else {
      out.push_back(hp);
    }
  }
  return out;
}

Continuum build_continuum(const StreamConfig& stream, std::uint64_t seed) {
  if (stream.kind == "synthetic-split") {
    SplitStreamOptions opts = stream.split;
    opts.tasks = stream.tasks;
    opts.cv_tasks = stream.cv_tasks;
    return make_synthetic_split_stream(opts, derive_seed(seed, "stream"));
  }
  if (stream.kind != "permuted-mnist") throw ConfigError("unknown stream kind '" + stream.kind + "'");

  std::string dir = stream.data_dir;
  if (dir.empty())
    if (const char* env = std::getenv("LLB_DATA_DIR")) dir = env;
  std::shared_ptr<const BaseDataset> base;
  if (!dir.empty()) base = cached_mnist(dir);
  if (!base) {
    const std::size_t n_train = stream.train_per_task ? 4 * stream.train_per_task : 10000;
    const std::size_t n_test = stream.test_per_task ? 2 * stream.test_per_task : 2000;
    base = std::make_shared<const BaseDataset>(make_synthetic_mnist(n_train, n_test, derive_seed(seed, "digits")));
  }
  PermutedStreamOptions opts;
  opts.tasks = stream.tasks;
  opts.cv_tasks = stream.cv_tasks;
  opts.train_per_task = stream.train_per_task;
  opts.test_per_task = stream.test_per_task;
  return make_permuted_stream(*base, opts, derive_seed(seed, "stream"));
}

Architecture make_architecture(const Continuum& continuum, const std::vector<std::size_t>& hidden,
                               bool joint_embedding) {
  if (continuum.tasks.empty()) throw ConfigError("empty continuum");
  Architecture arch;
  arch.input_dim = continuum.tasks[0].train.dim();
  arch.hidden_layers = hidden;
  if (joint_embedding) {
    arch.head_mode = HeadMode::joint_embedding;
    for (const auto& t : continuum.tasks)
      if (!t->has_attributes())
        throw ConfigError("joint-embedding learners need attribute descriptors; task " + std::to_string(t->task) +
                          " has an integer descriptor");
    arch.attribute_count = continuum.tasks[0].attributes().cols;
  } else if (continuum.shared_label_space) {
    HeadSpec head{continuum.tasks[0].task, continuum.tasks[0].classes(), {}};
    for (std::size_t k = 1; k < continuum.tasks.size(); ++k) head.aliases.push_back(continuum.tasks[k].task);
    arch.heads.push_back(std::move(head));
  } else {
    for (const auto& t : continuum.tasks) arch.heads.push_back({t->task, t->classes(), {}});
  }
  arch.validate();
  return arch;
}

Model make_initial_model(const Continuum& continuum, const Architecture& arch, std::uint64_t seed) {
  Model model = init_model(arch, derive_seed(seed, "init"));
  if (arch.head_mode == HeadMode::joint_embedding)
    for (const auto& t : continuum.tasks) model.set_descriptor(t->task, t->attributes());
  return model;
}

MetricsReport make_report(const Learner& learner, const RunLog& log, std::size_t beta) {
  MetricsReport r;
  r.learner = learner.spec().name();
  r.hparams = learner.hparams();
  r.beta = beta;
  r.parameters = learner.model().parameter_count();
  r.violations = learner.state().violation_count;
  r.violations_at_boundary = log.violations_at_boundary;
  r.task_step_seconds = log.task_step_seconds;
  r.mean_step_seconds = learner.state().steps
                            ? learner.state().step_seconds / static_cast<double>(learner.state().steps)
                            : 0.0;
  const std::size_t T = log.test.tasks();
  if (T == 0) return r;
  const std::size_t last = T - 1;
  r.avg_accuracy = avg_accuracy(log.test, last);
  for (std::size_t j = 0; j < T; ++j) r.final_accuracies.push_back(log.test.end_of_task(last, j));
  if (learner.spec().kind == LearnerKind::multitask) return r;

  if (T >= 2) {
    r.forgetting = forgetting(log.test, last).mean;
    r.worst_forgetting_test = worst_case_forgetting(log.test, last);
    if (learner.spec().uses_memory())
      r.worst_forgetting_memory = worst_case_forgetting(log.memory, last, ForgettingScope::since_learned);
  }
  bool complete = true;
  for (std::size_t k = 0; k < T; ++k) {
    std::vector<double> curve;
    for (std::size_t b = 0; b <= beta && b <= log.test.batches(k); ++b) curve.push_back(log.test.at(k, b, k));
    complete = complete && log.test.batches(k) >= beta;
    r.zero_shot.push_back(curve.front());
    r.b_shot.push_back(std::move(curve));
  }
  if (complete) {
    const auto c = lca(log.test, beta);
    r.z_curve = c.z;
    r.lca = c.lca;
  }
  return r;
}

MetricsReport run_seed(const ExperimentConfig& config, std::uint64_t seed, const ProgressFn& progress) {
  config.validate();
  const LearnerSpec spec = *parse_learner(config.learner);
  const Continuum continuum = build_continuum(config.stream, seed);
  const Architecture arch = make_architecture(continuum, config.hidden, spec.joint_embedding);
  const Model initial = make_initial_model(continuum, arch, seed);
  const auto [cv, ev] = split_cv_ev(continuum);
  const auto grid = expand_grid(config, spec);
  const std::string tag = spec.name() + " seed " + std::to_string(seed);

  Learner learner(spec, initial, grid.front(), seed);
  CvResult cv_result;
  if (grid.size() > 1) {
    cv_result = cross_validate(learner, cv, grid, seed);
    for (std::size_t i = 0; i < grid.size(); ++i)
      emit(progress, tag + ": cv lr=" + fmt(grid[i].lr) +
                         (spec.kind == LearnerKind::ewc ? " lambda=" + fmt(grid[i].lambda) : "") +
                         " A=" + fmt(cv_result.scores[i]));
  } else {
    learner.set_hparams(grid.front());
    learner.reset();
  }
  const HyperParams chosen = grid[cv_result.best];

  AuditReport audit;
  {
    const Learner fresh(spec, initial, chosen, seed);
    audit.reset = fresh.fingerprint() == learner.fingerprint();
    if (!audit.reset) audit.detail += "reset: state after cross-validation differs from a fresh learner; ";
  }

  RunLog log;
  run_single_pass(learner, ev, seed, log, Phase::evaluation);

  MetricsReport report = make_report(learner, log, chosen.beta);
  report.seed = seed;
  report.cv_scores = cv_result.scores;

  std::size_t expected = 0;
  for (const auto& t : ev) {
    for (SampleId id : t->train.ids) {
      auto it = log.visits.find(id);
      if (it == log.visits.end() || it->second != chosen.epochs) audit.single_pass = false;
    }
    expected += t->train.size();
  }
  if (log.visits.size() != expected) audit.single_pass = false;
  if (!audit.single_pass) audit.detail += "single-pass: evaluation visit counts are not uniform; ";

  std::set<TaskId> cv_ids, ev_ids;
  for (const auto& t : cv) cv_ids.insert(t->task);
  for (const auto& t : ev) ev_ids.insert(t->task);
  for (TaskId id : cv_result.tasks_read)
    if (!cv_ids.contains(id)) audit.isolation = false;
  for (TaskId id : log.tasks_read)
    if (!ev_ids.contains(id)) audit.isolation = false;
  for (const auto& [id, n] : log.visits)
    if (cv_result.samples_seen.contains(id)) audit.isolation = false;
  if (!audit.isolation) audit.detail += "isolation: a phase touched data of the other phase; ";
  report.audit = audit;

  emit(progress, tag + ": A_T=" + fmt(report.avg_accuracy) +
                     (report.forgetting ? " F_T=" + fmt(*report.forgetting) : "") +
                     " lr=" + fmt(chosen.lr) + (audit.ok() ? "" : " AUDIT FAILED"));
  return report;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.config = config;
  const std::size_t n = config.seeds.size();
  result.reports.resize(n);
  std::vector<std::exception_ptr> errors(n);
  const int jobs = static_cast<int>(std::min(config.jobs, n));
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      result.reports[i] = run_seed(config, config.seeds[i], progress);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  result.aggregate = aggregate(result.reports);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace llb
