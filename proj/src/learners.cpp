#include "llb/learners.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "llb/errors.hpp"
#include "llb/kernels.hpp"
#include "llb/qp.hpp"

namespace llb {

namespace {

struct NamedKind {
  const char* name;
  LearnerKind kind;
};

constexpr NamedKind kKinds[] = {
    {"vanilla", LearnerKind::vanilla}, {"ewc", LearnerKind::ewc},   {"gem", LearnerKind::gem},
    {"agem", LearnerKind::agem},       {"sgem", LearnerKind::sgem}, {"multitask", LearnerKind::multitask},
};

void take_step(LearnerState& state, const GradientVector& g, double lr) {
  apply_update(state.model, g, lr);
}

class Fnv {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= c[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
  void doubles(std::span<const double> v) { bytes(v.data(), v.size_bytes()); }
  void text(const std::string& s) { bytes(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

std::string LearnerSpec::name() const {
  std::string base;
  for (const auto& k : kKinds)
    if (k.kind == kind) base = k.name;
  return joint_embedding ? base + "-je" : base;
}

std::optional<LearnerSpec> parse_learner(std::string_view name) {
  LearnerSpec spec;
  constexpr std::string_view kSuffix = "-je";
  if (name.size() > kSuffix.size() && name.substr(name.size() - kSuffix.size()) == kSuffix) {
    spec.joint_embedding = true;
    name.remove_suffix(kSuffix.size());
  }
  for (const auto& k : kKinds)
    if (name == k.name) {
      spec.kind = k.kind;
      return spec;
    }
  return std::nullopt;
}

std::vector<std::string> learner_names() {
  std::vector<std::string> out;
  for (const auto& k : kKinds) out.emplace_back(k.name);
  for (const auto& k : kKinds) out.push_back(std::string(k.name) + "-je");
  return out;
}

Projection agem_project(std::span<const double> g, std::span<const double> g_ref) {
  if (g.size() != g_ref.size()) throw std::invalid_argument("agem_project: length mismatch");
  Projection p;
  p.g_tilde = GradientVector(std::vector<double>(g.begin(), g.end()));
  const double rr = kernels::dot(g_ref, g_ref);
  if (rr <= kDegenerateReference) {
    p.degenerate_reference = true;
    return p;
  }
  const double gr = kernels::dot(g, g_ref);
  if (gr >= 0.0) return p;
  p.violated = true;
  // Same arithmetic as the one-multiplier dual, so GEM with a single stored
  // task reproduces this bitwise.
  kernels::axpy(-(gr / rr), g_ref, p.g_tilde.span());
  return p;
}

StepResult vanilla_step(LearnerState& state, const Batch& batch, double lr) {
  LossGrad lg = loss_and_grad(state.model, batch);
  take_step(state, lg.grad, lr);
  return {lg.loss, false};
}

StepResult vanilla_step(LearnerState& state, std::span<const Batch> groups, double lr) {
  LossGrad lg = loss_and_grad(state.model, groups);
  take_step(state, lg.grad, lr);
  return {lg.loss, false};
}

StepResult agem_step(LearnerState& state, const Batch& batch, double lr, std::size_t ref_size, Rng& rng) {
  LossGrad lg = loss_and_grad(state.model, batch);
  const auto ref = state.memory.sample_ref_batch(ref_size, rng);
  if (ref.empty()) {
    take_step(state, lg.grad, lr);
    return {lg.loss, false};
  }
  const LossGrad ref_lg = loss_and_grad(state.model, std::span<const Batch>(ref));
  Projection p = agem_project(lg.grad.span(), ref_lg.grad.span());
  if (p.violated) ++state.violation_count;
  take_step(state, p.g_tilde, lr);
  return {lg.loss, p.violated};
}

StepResult gem_step(LearnerState& state, const Batch& batch, double lr) {
  LossGrad lg = loss_and_grad(state.model, batch);
  const auto buffers = state.memory.per_task_batches();
  if (buffers.empty()) {
    take_step(state, lg.grad, lr);
    return {lg.loss, false};
  }

  const std::size_t P = state.model.parameter_count();
  const std::ptrdiff_t T = static_cast<std::ptrdiff_t>(buffers.size());
  Matrix task_grads(buffers.size(), P);
  // Each g_k is an independent read of the model; nested kernel regions run serially.
#pragma omp parallel for schedule(dynamic) if (T > 1)
  for (std::ptrdiff_t k = 0; k < T; ++k) {
    const LossGrad gk = loss_and_grad(state.model, *buffers[static_cast<std::size_t>(k)]);
    std::copy(gk.grad.values.begin(), gk.grad.values.end(), task_grads.row(static_cast<std::size_t>(k)).begin());
  }

  bool violated = false;
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < buffers.size(); ++k) {
    const auto gk = task_grads.row(k);
    if (kernels::dot(gk, gk) <= kDegenerateReference) continue;
    keep.push_back(k);
    if (kernels::dot(lg.grad.span(), gk) < 0.0) violated = true;
  }
  if (!violated) {
    take_step(state, lg.grad, lr);
    return {lg.loss, false};
  }

  Matrix constraints(keep.size(), P);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    auto from = task_grads.row(keep[r]);
    std::copy(from.begin(), from.end(), constraints.row(r).begin());
  }
  const DualProblem dual = make_dual_problem(constraints, lg.grad.span());
  const DualSolution sol = solve_nonneg_qp(dual);
  if (!sol.converged)
    std::clog << "warning: GEM dual QP not converged after " << sol.iterations << " iterations (KKT residual "
              << sol.residual << ")\n";
  ++state.violation_count;
  take_step(state, reconstruct(lg.grad.span(), constraints, sol.v), lr);
  return {lg.loss, true};
}

StepResult sgem_step(LearnerState& state, const Batch& batch, double lr, Rng& rng) {
  LossGrad lg = loss_and_grad(state.model, batch);
  const auto buffers = state.memory.per_task_batches();
  if (buffers.empty()) {
    take_step(state, lg.grad, lr);
    return {lg.loss, false};
  }
  std::uniform_int_distribution<std::size_t> pick(0, buffers.size() - 1);
  const LossGrad gk = loss_and_grad(state.model, *buffers[pick(rng)]);
  Projection p = agem_project(lg.grad.span(), gk.grad.span());
  if (p.violated) ++state.violation_count;
  take_step(state, p.g_tilde, lr);
  return {lg.loss, p.violated};
}

void ewc_consolidate(LearnerState& state, const TaskDataset& task, std::size_t fisher_samples, double lambda,
                     Rng& rng) {
  const std::size_t P = state.model.parameter_count();
  EwcAnchor anchor;
  anchor.theta_star = state.model.theta();
  anchor.fisher.assign(P, 0.0);
  anchor.lambda = lambda;

  const std::size_t n = task.train.size();
  if (n == 0 || fisher_samples == 0) {
    std::clog << "warning: EWC consolidation on task " << task.task << " with no samples; Fisher is zero\n";
    state.anchors.push_back(std::move(anchor));
    return;
  }
  std::vector<std::size_t> all(n), picked;
  std::iota(all.begin(), all.end(), 0);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), std::min(n, fisher_samples), rng);

  for (std::size_t idx : picked) {
    const std::size_t one[] = {idx};
    const LossGrad lg = loss_and_grad(state.model, task.train.gather(one, task.task));
    for (std::size_t i = 0; i < P; ++i) anchor.fisher[i] += lg.grad[i] * lg.grad[i];
  }
  const double inv = 1.0 / static_cast<double>(picked.size());
  for (double& f : anchor.fisher) f *= inv;
  state.anchors.push_back(std::move(anchor));
}

double ewc_penalty(const LearnerState& state, std::span<const double> theta) {
  double total = 0.0;
  for (const auto& a : state.anchors) {
    double s = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double d = theta[i] - a.theta_star[i];
      s += a.fisher[i] * d * d;
    }
    total += a.lambda * s;
  }
  return total;
}

std::vector<double> ewc_penalty_grad(const LearnerState& state, std::span<const double> theta) {
  std::vector<double> g(theta.size(), 0.0);
  for (const auto& a : state.anchors) {
    if (a.lambda == 0.0) continue;
    const double two_lambda = 2.0 * a.lambda;
    for (std::size_t i = 0; i < theta.size(); ++i) g[i] += two_lambda * a.fisher[i] * (theta[i] - a.theta_star[i]);
  }
  return g;
}

StepResult ewc_step(LearnerState& state, const Batch& batch, double lr) {
  LossGrad lg = loss_and_grad(state.model, batch);
  if (!state.anchors.empty()) {
    const auto pg = ewc_penalty_grad(state, state.model.theta());
    kernels::axpy(1.0, pg, lg.grad.span());
    lg.loss += ewc_penalty(state, state.model.theta());
  }
  take_step(state, lg.grad, lr);
  return {lg.loss, false};
}

LearnerState make_state(const Model& model, std::size_t memory_per_task, std::uint64_t seed) {
  LearnerState s;
  s.model = model;
  s.memory = EpisodicMemory(memory_per_task);
  s.memory_rng = make_rng(seed, "memory");
  s.ref_rng = make_rng(seed, "ref-batch");
  s.sgem_rng = make_rng(seed, "sgem-constraint");
  s.fisher_rng = make_rng(seed, "fisher");
  return s;
}

Learner::Learner(LearnerSpec spec, Model initial, HyperParams hp, std::uint64_t seed)
    : spec_(spec), initial_(std::move(initial)), hp_(hp), seed_(seed) {
  if (spec_.joint_embedding != (initial_.arch().head_mode == HeadMode::joint_embedding))
    throw ConfigError("learner " + spec_.name() + " does not match the model's head mode");
  reset();
}

void Learner::reset() { state_ = make_state(initial_, hp_.memory_per_task, seed_); }

StepResult Learner::step(const Batch& batch) {
  const auto t0 = std::chrono::steady_clock::now();
  StepResult r;
  switch (spec_.kind) {
    case LearnerKind::vanilla:
    case LearnerKind::multitask:
      r = vanilla_step(state_, batch, hp_.lr);
      break;
    case LearnerKind::ewc:
      r = ewc_step(state_, batch, hp_.lr);
      break;
    case LearnerKind::gem:
      r = gem_step(state_, batch, hp_.lr);
      break;
    case LearnerKind::agem:
      r = agem_step(state_, batch, hp_.lr, hp_.ref_batch_size, state_.ref_rng);
      break;
    case LearnerKind::sgem:
      r = sgem_step(state_, batch, hp_.lr, state_.sgem_rng);
      break;
  }
  state_.step_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++state_.steps;
  return r;
}

StepResult Learner::step(std::span<const Batch> groups) {
  if (groups.size() == 1) return step(groups.front());
  if (spec_.kind != LearnerKind::vanilla && spec_.kind != LearnerKind::multitask)
    throw ConfigError("mixed-task batches are only supported by vanilla/multitask learners");
  const auto t0 = std::chrono::steady_clock::now();
  StepResult r = vanilla_step(state_, groups, hp_.lr);
  state_.step_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++state_.steps;
  return r;
}

void Learner::end_task(const TaskDataset& task) {
  if (spec_.uses_memory()) {
    state_.memory.update(task, state_.memory_rng);
  } else if (spec_.kind == LearnerKind::ewc) {
    ewc_consolidate(state_, task, hp_.fisher_samples, hp_.lambda, state_.fisher_rng);
  }
}

std::string Learner::fingerprint() const {
  Fnv h;
  h.doubles(state_.model.theta());
  h.value(state_.memory.capacity());
  for (const Batch* b : state_.memory.per_task_batches()) {
    h.value(b->task);
    h.bytes(b->ids.data(), b->ids.size() * sizeof(SampleId));
  }
  h.value(state_.anchors.size());
  for (const auto& a : state_.anchors) {
    h.doubles(a.theta_star);
    h.doubles(a.fisher);
    h.value(a.lambda);
  }
  h.value(state_.violation_count);
  h.value(state_.steps);
  h.value(state_.step_seconds);
  h.text(rng_state(state_.memory_rng));
  h.text(rng_state(state_.ref_rng));
  h.text(rng_state(state_.sgem_rng));
  h.text(rng_state(state_.fisher_rng));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h.digest();
  return os.str();
}

}  // namespace llb
