// Acceptance run: one PASS/FAIL line per criterion. Tolerances and stream
// sizes are fixed below; pass criterion numbers as arguments to run a subset.
//
//   llb_acceptance            all ten criteria
//   llb_acceptance 6 9        only the permuted trend and zero-shot checks

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "llb/embedding.hpp"
#include "llb/errors.hpp"
#include "llb/protocol.hpp"
#include "suites.hpp"

using namespace llb;

namespace {

// Property suites.
constexpr std::size_t kProjectionPairs = 10000;
constexpr double kProjectionSeconds = 10.0;
constexpr std::size_t kQpInstances = 1000;
constexpr double kQpSeconds = 30.0;
constexpr std::size_t kEquivalenceSteps = 100;
constexpr std::size_t kGradientModels = 20;
constexpr std::size_t kMetricTensors = 500;

// Desk-scale permuted stream: 3 CV tasks + 5 EV tasks of 1000 examples.
constexpr std::size_t kTrendTasks = 8;
constexpr std::size_t kCvTasks = 3;
constexpr std::size_t kPerTask = 1000;
constexpr double kTrendMinGap = 0.05;
constexpr double kTrendSeconds = 600.0;

// Efficiency and violation runs: 6 EV tasks, so the last task has 5 stored.
constexpr std::size_t kCostTasks = 9;
constexpr double kCostLr = 0.1;
constexpr double kMaxAgemOverGem = 0.5;
constexpr double kAgemCostDrift = 2.0;

// Zero-shot on the attribute-split stream.
constexpr std::size_t kZeroShotTail = 5;
constexpr double kZeroShotMargin = 0.10;

const std::vector<std::uint64_t> kSeeds{0, 1, 2};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Verdict from_suite(const oracle::SuiteResult& r, double max_seconds = 0.0) {
  Verdict v{r.passed, r.detail + ", " + fixed(r.seconds, 2) + " s"};
  if (max_seconds > 0.0 && r.seconds >= max_seconds) {
    v.pass = false;
    v.detail += " (limit " + fixed(max_seconds, 0) + " s)";
  }
  return v;
}

// Every end-to-end report is kept for the hygiene criterion.
std::vector<MetricsReport> g_all_reports;

// Per-seed results only; the per-candidate CV lines would drown the verdicts.
void progress(const std::string& msg) {
  if (msg.find(": cv ") == std::string::npos) std::fprintf(stderr, "  %s\n", msg.c_str());
}

ExperimentResult run(const ExperimentConfig& c) {
  ExperimentResult r = run_experiment(c, progress);
  g_all_reports.insert(g_all_reports.end(), r.reports.begin(), r.reports.end());
  return r;
}

ExperimentConfig permuted(const std::string& learner, std::size_t tasks) {
  ExperimentConfig c;
  c.learner = learner;
  c.stream.kind = "permuted-mnist";
  c.stream.tasks = tasks;
  c.stream.cv_tasks = kCvTasks;
  c.stream.train_per_task = kPerTask;
  c.stream.test_per_task = kPerTask;
  c.hidden = {256, 256};
  c.hparams.batch_size = 10;
  c.hparams.memory_per_task = 250;
  c.seeds = kSeeds;
  return c;
}

std::vector<double> field(const ExperimentResult& r, const std::function<double(const MetricsReport&)>& f) {
  std::vector<double> out;
  for (const auto& rep : r.reports) out.push_back(f(rep));
  return out;
}

Verdict permuted_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, ExperimentResult> res;
  for (const char* name : {"vanilla", "agem", "multitask"}) res[name] = run(permuted(name, kTrendTasks));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  auto acc = [](const MetricsReport& r) { return r.avg_accuracy; };
  auto fgt = [](const MetricsReport& r) { return r.forgetting.value_or(NAN); };
  const double a_van = mean(field(res["vanilla"], acc));
  const double a_agem = mean(field(res["agem"], acc));
  const double a_mt = mean(field(res["multitask"], acc));
  const double f_van = mean(field(res["vanilla"], fgt));
  const double f_agem = mean(field(res["agem"], fgt));

  const bool gap = a_agem - a_van >= kTrendMinGap;
  const bool forgets_less = f_agem < f_van;
  const bool upper = a_mt >= a_agem && a_mt >= a_van;
  const bool fast = seconds < kTrendSeconds;
  std::ostringstream os;
  os << "A_T vanilla " << fixed(a_van) << ", agem " << fixed(a_agem) << ", multitask " << fixed(a_mt)
     << " (gap " << fixed(a_agem - a_van) << " >= " << kTrendMinGap << "); F_T vanilla " << fixed(f_van) << ", agem "
     << fixed(f_agem) << "; " << fixed(seconds, 0) << " s";
  return {gap && forgets_less && upper && fast, os.str()};
}

// The cost and violation criteria share one pair of runs.
std::map<std::string, ExperimentResult> g_cost_runs;

const std::map<std::string, ExperimentResult>& cost_runs() {
  if (g_cost_runs.empty())
    for (const char* name : {"agem", "gem"}) {
      ExperimentConfig c = permuted(name, kCostTasks);
      c.grid.lr = {kCostLr};
      g_cost_runs[name] = run(c);
    }
  return g_cost_runs;
}

// Mean over seeds of the per-task mean step time.
std::vector<double> task_costs(const ExperimentResult& r) {
  std::vector<double> out(r.reports.front().task_step_seconds.size(), 0.0);
  for (const auto& rep : r.reports)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += rep.task_step_seconds[k] / static_cast<double>(r.reports.size());
  return out;
}

Verdict efficiency() {
  const auto& runs = cost_runs();
  auto step = [](const MetricsReport& r) { return r.mean_step_seconds; };
  const double agem = mean(field(runs.at("agem"), step));
  const double gem = mean(field(runs.at("gem"), step));
  const auto agem_task = task_costs(runs.at("agem"));
  const auto gem_task = task_costs(runs.at("gem"));

  // Tasks 1.. have 1.. stored tasks; least-squares slope of GEM cost on that count.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const std::size_t n = gem_task.size() - 1;
  for (std::size_t k = 1; k < gem_task.size(); ++k) {
    const double x = static_cast<double>(k);
    sx += x;
    sy += gem_task[k];
    sxx += x * x;
    sxy += x * gem_task[k];
  }
  const double slope = (static_cast<double>(n) * sxy - sx * sy) / (static_cast<double>(n) * sxx - sx * sx);
  const bool grows = slope > 0.0 && gem_task.back() > gem_task[1];
  double agem_peak = 0.0;
  for (std::size_t k = 1; k < agem_task.size(); ++k) agem_peak = std::max(agem_peak, agem_task[k]);
  const bool flat = agem_peak <= kAgemCostDrift * agem_task[1];
  const bool ratio = agem <= kMaxAgemOverGem * gem;

  std::ostringstream os;
  os << "step ms agem " << fixed(1e3 * agem, 2) << " / gem " << fixed(1e3 * gem, 2) << " = " << fixed(agem / gem, 3)
     << " (<= " << kMaxAgemOverGem << "); gem ms by stored tasks";
  for (std::size_t k = 1; k < gem_task.size(); ++k) os << " " << fixed(1e3 * gem_task[k], 1);
  os << " (slope " << fixed(1e3 * slope, 2) << " ms/task); agem peak/task-2 " << fixed(agem_peak / agem_task[1], 2)
     << " (<= " << kAgemCostDrift << ")";
  return {ratio && grows && flat, os.str()};
}

Verdict violations() {
  const auto& runs = cost_runs();
  bool ok = true;
  std::ostringstream os;
  for (std::size_t s = 0; s < kSeeds.size(); ++s) {
    const auto& a = runs.at("agem").reports[s].violations_at_boundary;
    const auto& g = runs.at("gem").reports[s].violations_at_boundary;
    bool seed_ok = a.size() == g.size();
    for (std::size_t k = 0; seed_ok && k < a.size(); ++k) seed_ok = g[k] >= a[k];
    ok = ok && seed_ok;
    os << (s ? "; " : "") << "seed " << kSeeds[s] << " gem " << g.back() << " vs agem " << a.back()
       << (seed_ok ? "" : " (boundary order broken)");
  }
  return {ok, os.str()};
}

Verdict zero_shot() {
  ExperimentConfig c;
  c.learner = "agem-je";
  c.stream.kind = "synthetic-split";
  c.seeds = kSeeds;
  const ExperimentResult r = run(c);
  const double chance = 1.0 / static_cast<double>(c.stream.split.classes_per_task);

  bool ok = true;
  std::ostringstream os;
  for (const auto& rep : r.reports) {
    const auto& z = rep.zero_shot;
    const std::vector<double> tail(z.end() - static_cast<std::ptrdiff_t>(std::min(kZeroShotTail, z.size())), z.end());
    const double t = mean(tail);
    const bool seed_ok = z.size() >= kZeroShotTail && t >= chance + kZeroShotMargin && t > z.front();
    ok = ok && seed_ok;
    os << "seed " << rep.seed << " last-" << kZeroShotTail << " " << fixed(t, 3) << " vs first " << fixed(z.front(), 3)
       << "; ";
  }
  os << "chance " << fixed(chance, 2) << " + " << kZeroShotMargin;

  // Mode guard: the integer-descriptor model has no zero-shot path.
  const Continuum cont = build_continuum(c.stream, 0);
  const Architecture arch = make_architecture(cont, c.hidden, false);
  bool guarded = false;
  try {
    zero_shot_eval(make_initial_model(cont, arch, 0), cont.tasks[0]);
  } catch (const ConfigError&) {
    guarded = true;
  }
  os << "; integer-head guard " << (guarded ? "raised" : "missing");
  return {ok && guarded, os.str()};
}

Verdict hygiene() {
  if (g_all_reports.empty()) {
    // Run on its own: a short end-to-end pass of every learner.
    for (const char* name : {"vanilla", "ewc", "agem", "gem", "sgem", "multitask"}) {
      ExperimentConfig c = permuted(name, 5);
      c.stream.train_per_task = 200;
      c.stream.test_per_task = 200;
      c.grid.lr = {0.1, 0.03};
      c.grid.lambda = {10};
      run(c);
    }
  }
  std::size_t bad = 0;
  std::string first;
  for (const auto& r : g_all_reports)
    if (!r.audit.ok()) {
      if (!bad) first = r.learner + " seed " + std::to_string(r.seed) + ": " + r.audit.detail;
      ++bad;
    }
  std::ostringstream os;
  os << g_all_reports.size() << " runs audited (visit count, CV/EV isolation, reset), " << bad << " failed";
  if (bad) os << "; first: " << first;
  return {bad == 0, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"projection correctness", [] { return from_suite(oracle::projection_suite(kProjectionPairs), kProjectionSeconds); }},
      {"GEM dual soundness", [] { return from_suite(oracle::qp_suite(kQpInstances), kQpSeconds); }},
      {"single-constraint equivalence", [] { return from_suite(oracle::equivalence_suite(kEquivalenceSteps)); }},
      {"gradient exactness", [] { return from_suite(oracle::gradient_suite(kGradientModels)); }},
      {"metrics oracle", [] { return from_suite(oracle::metrics_suite(kMetricTensors)); }},
      {"desk-scale permuted trend", permuted_trend},
      {"efficiency trend", efficiency},
      {"violation-count trend", violations},
      {"zero-shot transfer", zero_shot},
      {"protocol hygiene", hygiene},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s criterion %2d  %-30s %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  return failed ? 1 : 0;
}
