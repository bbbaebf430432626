#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llb/hparams.hpp"
#include "llb/memory.hpp"
#include "llb/nn.hpp"
#include "llb/rng.hpp"
#include "llb/streams.hpp"

namespace llb {

enum class LearnerKind { vanilla, ewc, gem, agem, sgem, multitask };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::vanilla;
  bool joint_embedding = false;

  /// "agem", "agem-je", ...
  std::string name() const;
  bool uses_memory() const {
    return kind == LearnerKind::gem || kind == LearnerKind::agem || kind == LearnerKind::sgem;
  }
  friend bool operator==(const LearnerSpec&, const LearnerSpec&) = default;
};

/// Parses a learner name; nullopt if unknown.
std::optional<LearnerSpec> parse_learner(std::string_view name);
/// Every accepted learner name, for diagnostics.
std::vector<std::string> learner_names();

struct EwcAnchor {
  std::vector<double> theta_star;
  std::vector<double> fisher;  // diagonal, nonnegative
  double lambda = 0.0;
};

struct LearnerState {
  Model model;
  EpisodicMemory memory;
  std::vector<EwcAnchor> anchors;
  std::uint64_t violation_count = 0;
  std::uint64_t steps = 0;
  double step_seconds = 0.0;  // cumulative wall-clock spent in steps

  // Named sub-streams of the run seed.
  Rng memory_rng;
  Rng ref_rng;
  Rng sgem_rng;
  Rng fisher_rng;
};

struct StepResult {
  double loss = 0.0;
  bool violated = false;
};

struct Projection {
  GradientVector g_tilde;
  bool violated = false;
  bool degenerate_reference = false;
};

/// |g_ref|^2 at or below this counts as "no constraint".
inline constexpr double kDegenerateReference = 1e-12;

/// Closest vector to g (L2) with nonnegative inner product with g_ref.
Projection agem_project(std::span<const double> g, std::span<const double> g_ref);

StepResult vanilla_step(LearnerState& state, const Batch& batch, double lr);

/// Step on a batch drawn from several tasks (the multi-task baseline).
StepResult vanilla_step(LearnerState& state, std::span<const Batch> groups, double lr);

StepResult agem_step(LearnerState& state, const Batch& batch, double lr, std::size_t ref_size, Rng& rng);

StepResult gem_step(LearnerState& state, const Batch& batch, double lr);

StepResult sgem_step(LearnerState& state, const Batch& batch, double lr, Rng& rng);

/// Appends an anchor at the current theta with the empirical Fisher diagonal
/// over min(n, fisher_samples) training samples of `task`.
void ewc_consolidate(LearnerState& state, const TaskDataset& task, std::size_t fisher_samples, double lambda,
                     Rng& rng);

double ewc_penalty(const LearnerState& state, std::span<const double> theta);
/// d penalty / d theta = sum over anchors of 2 lambda F (theta - theta*).
std::vector<double> ewc_penalty_grad(const LearnerState& state, std::span<const double> theta);

StepResult ewc_step(LearnerState& state, const Batch& batch, double lr);

/// Uniform driver over the learner family: one step per minibatch plus the
/// task-boundary hook, with reset to the construction-time state.
class Learner {
 public:
  Learner(LearnerSpec spec, Model initial, HyperParams hp, std::uint64_t seed);

  const LearnerSpec& spec() const { return spec_; }
  const HyperParams& hparams() const { return hp_; }
  void set_hparams(const HyperParams& hp) { hp_ = hp; }

  StepResult step(const Batch& batch);
  StepResult step(std::span<const Batch> groups);
  /// Memory update / consolidation after a task's training pass.
  void end_task(const TaskDataset& task);
  void reset();

  const LearnerState& state() const { return state_; }
  LearnerState& state() { return state_; }
  const Model& model() const { return state_.model; }

  /// Digest of parameters, memory contents, anchors, counters and RNG states.
  std::string fingerprint() const;

 private:
  LearnerSpec spec_;
  Model initial_;
  HyperParams hp_;
  std::uint64_t seed_;
  LearnerState state_;
};

LearnerState make_state(const Model& model, std::size_t memory_per_task, std::uint64_t seed);

}  // namespace llb
