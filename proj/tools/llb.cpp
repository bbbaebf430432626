// llb: run lifelong-learning experiments from a JSON config or flags.
//
//   llb run --config exp.json
//   llb run --learner agem --stream permuted-mnist --seeds 0,1,2 --out results/agem
//   llb compare --learners vanilla,ewc,agem,gem --out results/cmp
//   llb grid --learner ewc --out results/ewc-grid
//   llb selftest
//   llb run --print-config          (dump every default)

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "llb/errors.hpp"
#include "llb/report.hpp"
#include "suites.hpp"

namespace fs = std::filesystem;
using namespace llb;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitAudit = 3;

struct Overrides {
  std::string config;
  std::optional<std::string> learner;
  std::optional<std::string> stream;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;
  std::optional<std::size_t> study_epochs;
  std::vector<std::size_t> hidden;
  std::optional<std::size_t> tasks;
  std::optional<std::size_t> cv_tasks;
  std::optional<std::size_t> train_per_task;
  std::optional<std::size_t> test_per_task;
  std::vector<double> lr;
  std::vector<double> lambda;
  bool print_config = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Overrides& o, bool single_learner) {
  app->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  if (single_learner) app->add_option("--learner", o.learner, "learner name, e.g. agem, gem, ewc, agem-je");
  app->add_option("--stream", o.stream, "permuted-mnist or synthetic-split")
      ->check(CLI::IsMember({"permuted-mnist", "synthetic-split"}));
  app->add_option("--seeds", o.seeds, "comma-separated seed list")->delimiter(',');
  app->add_option("--jobs", o.jobs, "seeds run in parallel")->check(CLI::PositiveNumber);
  app->add_option("--out", o.out, "output directory");
  app->add_option("--study-epochs", o.study_epochs, "multiple passes over the evaluation stream (study mode)")
      ->check(CLI::PositiveNumber);
  app->add_option("--hidden", o.hidden, "hidden widths, e.g. 256,256")->delimiter(',');
  app->add_option("--tasks", o.tasks, "total tasks including the CV tasks");
  app->add_option("--cv-tasks", o.cv_tasks, "leading tasks used for cross-validation");
  app->add_option("--train-per-task", o.train_per_task, "permuted-mnist training examples per task");
  app->add_option("--test-per-task", o.test_per_task, "permuted-mnist test examples per task");
  app->add_option("--lr", o.lr, "learning-rate grid")->delimiter(',');
  app->add_option("--lambda", o.lambda, "regularization grid (ewc)")->delimiter(',');
  app->add_flag("--print-config", o.print_config, "print the effective config and exit");
  app->add_flag("--quiet", o.quiet, "no progress output");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.learner) c.learner = *o.learner;
  if (o.stream) c.stream.kind = *o.stream;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.out) c.out_dir = *o.out;
  if (o.study_epochs) {
    c.hparams.epochs = *o.study_epochs;
    c.hparams.study_mode = true;
  }
  if (!o.hidden.empty()) c.hidden = o.hidden;
  if (o.tasks) c.stream.tasks = *o.tasks;
  if (o.cv_tasks) c.stream.cv_tasks = *o.cv_tasks;
  if (o.train_per_task) c.stream.train_per_task = *o.train_per_task;
  if (o.test_per_task) c.stream.test_per_task = *o.test_per_task;
  if (!o.lr.empty()) c.grid.lr = o.lr;
  if (!o.lambda.empty()) c.grid.lambda = o.lambda;
  c.stream.split.tasks = c.stream.tasks;
  c.stream.split.cv_tasks = c.stream.cv_tasks;
  return c;
}

ProgressFn progress_printer(bool quiet) {
  if (quiet) return {};
  return [](const std::string& msg) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << msg << '\n';
  };
}

bool audits_ok(const ExperimentResult& r) {
  bool ok = true;
  for (const auto& rep : r.reports)
    if (!rep.audit.ok()) {
      std::cerr << "audit failed for " << rep.learner << " seed " << rep.seed << ": " << rep.audit.detail << '\n';
      ok = false;
    }
  return ok;
}

int cmd_run(const Overrides& o) {
  const ExperimentConfig c = resolve(o);
  if (o.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  c.validate();
  const ExperimentResult result = run_experiment(c, progress_printer(o.quiet));
  const WrittenFiles files = emit_report(result, c.out_dir);
  std::cout << compare_table({result.aggregate});
  std::cout << "report: " << files.report_json.string() << '\n';
  return audits_ok(result) ? 0 : kExitAudit;
}

int cmd_grid(const Overrides& o) {
  const ExperimentConfig c = resolve(o);
  if (o.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  c.validate();
  const LearnerSpec spec = *parse_learner(c.learner);
  const auto candidates = expand_grid(c, spec);
  std::string csv = "lr,lambda," + std::string(kSummaryCsvHeader) + "\n";
  bool ok = true;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ExperimentConfig one = c;
    one.grid.lr = {candidates[i].lr};
    one.grid.lambda = {candidates[i].lambda};
    one.out_dir = (fs::path(c.out_dir) / ("candidate_" + std::to_string(i))).string();
    const ExperimentResult result = run_experiment(one, progress_printer(o.quiet));
    emit_report(result, one.out_dir);
    ok = audits_ok(result) && ok;
    std::istringstream rows(summary_csv(result.reports, false));
    for (std::string line; std::getline(rows, line);)
      csv += std::to_string(candidates[i].lr) + "," + std::to_string(candidates[i].lambda) + "," + line + "\n";
    std::cout << "lr=" << candidates[i].lr << " lambda=" << candidates[i].lambda << '\n'
              << compare_table({result.aggregate});
  }
  write_text(fs::path(c.out_dir) / "grid.csv", csv);
  return ok ? 0 : kExitAudit;
}

int cmd_compare(const Overrides& o, const std::vector<std::string>& learners) {
  ExperimentConfig c = resolve(o);
  if (o.print_config) {
    std::cout << to_json(c).dump(2) << '\n';
    return 0;
  }
  std::vector<MetricsReport> all;
  std::vector<AggregateReport> rows;
  std::vector<ExperimentConfig> configs;
  for (const auto& name : learners) {
    ExperimentConfig one = c;
    one.learner = name;
    one.out_dir = (fs::path(c.out_dir) / name).string();
    one.validate();
    configs.push_back(one);
  }
  bool ok = true;
  for (const auto& one : configs) {
    const ExperimentResult result = run_experiment(one, progress_printer(o.quiet));
    emit_report(result, one.out_dir);
    ok = audits_ok(result) && ok;
    all.insert(all.end(), result.reports.begin(), result.reports.end());
    rows.push_back(result.aggregate);
  }
  write_text(fs::path(c.out_dir) / "summary.csv", summary_csv(all));
  write_text(fs::path(c.out_dir) / "curves.csv", curve_csv(all));
  write_text(fs::path(c.out_dir) / "zero_shot.csv", zero_shot_csv(all));
  std::cout << compare_table(rows);
  return ok ? 0 : kExitAudit;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& s : oracle::all_suites()) {
    std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << " (" << s.seconds << " s): " << s.detail << '\n';
    ok = ok && s.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifelong-learning experiment runner"};
  app.require_subcommand(1);

  Overrides run_o, grid_o, cmp_o;
  std::vector<std::string> learners{"vanilla", "ewc", "agem", "gem"};
  auto* run = app.add_subcommand("run", "cross-validate, then train and evaluate one learner");
  add_common(run, run_o, true);
  auto* grid = app.add_subcommand("grid", "evaluate every grid candidate on the evaluation stream");
  add_common(grid, grid_o, true);
  auto* cmp = app.add_subcommand("compare", "run several learners on the same stream");
  add_common(cmp, cmp_o, false);
  cmp->add_option("--learners", learners, "comma-separated learner names")->delimiter(',');
  auto* self = app.add_subcommand("selftest", "run the oracle property suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return cmd_run(run_o);
    if (*grid) return cmd_grid(grid_o);
    if (*cmp) return cmd_compare(cmp_o, learners);
    if (*self) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
