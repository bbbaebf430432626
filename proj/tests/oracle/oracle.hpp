#pragma once

// Independent reference implementations used by the unit tests, the
// acceptance suite and `llb selftest`. Nothing here calls the optimized
// kernels; loops are written out directly.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "llb/metrics.hpp"
#include "llb/nn.hpp"
#include "llb/qp.hpp"
#include "llb/streams.hpp"

namespace llb::oracle {

/// Logits computed with plain loops in extended precision. `pattern`, if
/// given, receives the ReLU on/off state of every hidden unit.
std::vector<std::vector<long double>> naive_logits(const Model& model, std::span<const double> theta,
                                                   const Batch& batch, std::vector<bool>* pattern = nullptr);

long double naive_loss(const Model& model, std::span<const double> theta, const Batch& batch,
                       std::vector<bool>* pattern = nullptr);

double naive_accuracy(const Model& model, const SampleSet& samples, TaskId task);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation flips a ReLU
};

/// Compares `analytic` with Richardson-extrapolated central differences of
/// naive_loss. Relative error is |a - n| / max(|a|, |n|, floor); the floor
/// keeps exactly-zero gradients (pure rounding noise on both sides) out of it.
GradCheck check_gradient(const Model& model, const Batch& batch, std::span<const double> analytic,
                         double h = 1e-4, double floor = 1e-8);

/// Exhaustive active-set solution of min 0.5 v'Hv + l'v, v >= 0 (n <= 20).
/// Enumerates supports with linearly independent rows.
struct BruteQp {
  std::vector<double> v;
  double objective = 0.0;
};
BruteQp brute_force_qp(const Matrix& constraints, std::span<const double> g);

/// Golden-section search over the scalar dual of the single-constraint
/// projection; returns the projected vector.
std::vector<double> golden_section_projection(std::span<const double> g, std::span<const double> g_ref);

// Brute-force metric recomputation straight from the tensor entries.
double brute_avg_accuracy(const AccuracyTensor& t, std::size_t k);
double brute_forgetting(const AccuracyTensor& t, std::size_t k);
double brute_worst_forgetting(const AccuracyTensor& t, std::size_t k);
std::vector<double> brute_z(const AccuracyTensor& t, std::size_t beta);
double brute_lca(const AccuracyTensor& t, std::size_t beta);

/// Random dense tensor with T tasks and B_k in [1, max_batches].
AccuracyTensor random_tensor(std::uint64_t seed, std::size_t max_tasks, std::size_t max_batches);

/// Small random architecture (per-task heads or joint embedding) and a batch for it.
struct GradProblem {
  Model model;
  Batch batch;
};
GradProblem random_grad_problem(std::uint64_t seed, bool joint_embedding);

}  // namespace llb::oracle
