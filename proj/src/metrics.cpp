#include "llb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "llb/errors.hpp"

namespace llb {

namespace {

std::string key_name(std::size_t k, std::size_t i, std::size_t j) {
  return "(k=" + std::to_string(k) + ", i=" + std::to_string(i) + ", j=" + std::to_string(j) + ")";
}

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool same(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || same(*a, *b);
}

bool same(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) { return same(x, y); });
}

}  // namespace

void AccuracyTensor::record(std::size_t k, std::size_t i, std::size_t j, double acc) {
  if (k >= batches_.size() || j >= batches_.size() || i > batches_[k])
    throw LogError("accuracy index out of range " + key_name(k, i, j));
  if (!(acc >= 0.0 && acc <= 1.0)) throw LogError("accuracy outside [0,1] at " + key_name(k, i, j));
  auto [it, inserted] = entries_.emplace(Key{k, i, j}, acc);
  if (!inserted && it->second != acc)
    throw LogError("conflicting duplicate accuracy at " + key_name(k, i, j) + ": " + std::to_string(it->second) +
                   " vs " + std::to_string(acc));
}

std::optional<double> AccuracyTensor::get(std::size_t k, std::size_t i, std::size_t j) const {
  auto it = entries_.find(Key{k, i, j});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

double AccuracyTensor::at(std::size_t k, std::size_t i, std::size_t j) const {
  auto v = get(k, i, j);
  if (!v) throw LogError("incomplete accuracy log: missing " + key_name(k, i, j));
  return *v;
}

double avg_accuracy(const AccuracyTensor& t, std::size_t k) {
  if (k >= t.tasks()) throw LogError("avg_accuracy: task index out of range");
  double sum = 0.0;
  for (std::size_t j = 0; j <= k; ++j) sum += t.end_of_task(k, j);
  return sum / static_cast<double>(k + 1);
}

Forgetting forgetting(const AccuracyTensor& t, std::size_t k, ForgettingScope scope) {
  if (k == 0) throw std::domain_error("forgetting is undefined after the first task");
  if (k >= t.tasks()) throw LogError("forgetting: task index out of range");
  Forgetting f;
  f.per_task.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t first = scope == ForgettingScope::all_previous ? 0 : j;
    double best = t.end_of_task(first, j);
    for (std::size_t l = first + 1; l < k; ++l) best = std::max(best, t.end_of_task(l, j));
    f.per_task.push_back(best - t.end_of_task(k, j));
  }
  double sum = 0.0;
  for (double v : f.per_task) sum += v;
  f.mean = sum / static_cast<double>(k);
  return f;
}

double worst_case_forgetting(const AccuracyTensor& t, std::size_t k, ForgettingScope scope) {
  const auto f = forgetting(t, k, scope);
  return *std::max_element(f.per_task.begin(), f.per_task.end());
}

LearningCurve lca(const AccuracyTensor& t, std::size_t beta) {
  if (t.tasks() == 0) throw LogError("lca: empty accuracy log");
  LearningCurve c;
  c.z.assign(beta + 1, 0.0);
  for (std::size_t b = 0; b <= beta; ++b) {
    double sum = 0.0;
    for (std::size_t k = 0; k < t.tasks(); ++k) sum += t.at(k, b, k);
    c.z[b] = sum / static_cast<double>(t.tasks());
  }
  double area = 0.0;
  for (double z : c.z) area += z;
  c.lca = area / static_cast<double>(beta + 1);
  return c;
}

std::vector<std::pair<std::size_t, double>> zero_shot_series(const AccuracyTensor& t) {
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t k = 0; k < t.tasks(); ++k)
    if (auto v = t.get(k, 0, k)) out.emplace_back(k, *v);
  return out;
}

bool operator==(const MetricsReport& a, const MetricsReport& b) {
  return a.learner == b.learner && a.seed == b.seed && a.hparams == b.hparams && same(a.cv_scores, b.cv_scores) &&
         same(a.avg_accuracy, b.avg_accuracy) && same(a.forgetting, b.forgetting) &&
         same(a.worst_forgetting_test, b.worst_forgetting_test) &&
         same(a.worst_forgetting_memory, b.worst_forgetting_memory) && same(a.lca, b.lca) && a.beta == b.beta &&
         same(a.z_curve, b.z_curve) && a.b_shot.size() == b.b_shot.size() &&
         std::equal(a.b_shot.begin(), a.b_shot.end(), b.b_shot.begin(),
                    [](const auto& x, const auto& y) { return same(x, y); }) &&
         same(a.zero_shot, b.zero_shot) && same(a.final_accuracies, b.final_accuracies) &&
         a.violations == b.violations && a.violations_at_boundary == b.violations_at_boundary &&
         same(a.mean_step_seconds, b.mean_step_seconds) && same(a.task_step_seconds, b.task_step_seconds) &&
         a.parameters == b.parameters && a.audit == b.audit;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  double sum = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++r.n;
    }
  if (r.n == 0) {
    r.mean = r.std = std::nan("");
    return r;
  }
  r.mean = sum / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double v : values)
      if (std::isfinite(v)) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(r.n - 1));
  }
  return r;
}

AggregateReport aggregate(const std::vector<MetricsReport>& reports) {
  AggregateReport agg;
  if (reports.empty()) return agg;
  agg.learner = reports.front().learner;
  auto collect = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(get(r));
    return mean_std(v);
  };
  const double nan = std::nan("");
  agg.avg_accuracy = collect([](const MetricsReport& r) { return r.avg_accuracy; });
  agg.forgetting = collect([&](const MetricsReport& r) { return r.forgetting.value_or(nan); });
  agg.lca = collect([&](const MetricsReport& r) { return r.lca.value_or(nan); });
  agg.worst_forgetting_test = collect([&](const MetricsReport& r) { return r.worst_forgetting_test.value_or(nan); });
  agg.worst_forgetting_memory =
      collect([&](const MetricsReport& r) { return r.worst_forgetting_memory.value_or(nan); });
  agg.mean_step_seconds = collect([](const MetricsReport& r) { return r.mean_step_seconds; });
  agg.violations = collect([](const MetricsReport& r) { return static_cast<double>(r.violations); });
  return agg;
}

}  // namespace llb
