#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "llb/errors.hpp"
#include "llb/kernels.hpp"
#include "llb/learners.hpp"
#include "oracle.hpp"
#include "suites.hpp"

using namespace llb;

namespace {

struct Fixture {
  TaskStream stream = test::toy_stream(3);
  Model model = init_model(test::toy_arch(stream), 17);

  Batch batch(std::size_t task, std::size_t n = 10) const {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return stream[task].train.gather(idx, stream[task].task);
  }
};

double batch_objective(const LearnerState& s, const Batch& b, bool with_penalty) {
  double loss = loss_and_grad(s.model, b).loss;
  if (with_penalty) loss += ewc_penalty(s, s.model.theta());
  return loss;
}

}  // namespace

TEST_CASE("A-GEM projection") {
  SUBCASE("nonnegative inner product passes through") {
    const auto p = agem_project(std::vector<double>{1, 1}, std::vector<double>{1, 0});
    CHECK_FALSE(p.violated);
    CHECK(p.g_tilde.values == std::vector<double>{1, 1});
  }
  SUBCASE("violated constraint is projected onto the half-space boundary") {
    const std::vector<double> g{1, 0}, ref{-1, 1};
    const auto p = agem_project(g, ref);
    CHECK(p.violated);
    CHECK(p.g_tilde[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.g_tilde[1] == doctest::Approx(0.5).epsilon(1e-15));
    const auto numeric = oracle::golden_section_projection(g, ref);
    CHECK(std::abs(numeric[0] - 0.5) <= 1e-6);
    CHECK(std::abs(numeric[1] - 0.5) <= 1e-6);
  }
  SUBCASE("antiparallel gradient projects to zero") {
    const auto p = agem_project(std::vector<double>{-2, 0}, std::vector<double>{1, 0});
    CHECK(p.violated);
    CHECK(std::abs(p.g_tilde[0]) == 0.0);
    CHECK(p.g_tilde[1] == 0.0);
  }
  SUBCASE("degenerate reference leaves g unchanged") {
    const auto p = agem_project(std::vector<double>{-2, 3}, std::vector<double>{1e-7, 0});
    CHECK(p.degenerate_reference);
    CHECK_FALSE(p.violated);
    CHECK(p.g_tilde.values == std::vector<double>{-2, 3});
  }
}

TEST_CASE("vanilla step is the plain SGD update") {
  Fixture f;
  LearnerState s = make_state(f.model, 10, 1);
  const Batch b = f.batch(0);
  Model expected = f.model;
  apply_update(expected, loss_and_grad(f.model, b).grad, 0.1);
  vanilla_step(s, b, 0.1);
  CHECK(s.model.theta() == expected.theta());
  CHECK(s.violation_count == 0);

  // A mixed batch of one group is the single-task step.
  LearnerState s2 = make_state(f.model, 10, 1);
  const std::vector<Batch> one{b};
  vanilla_step(s2, one, 0.1);
  CHECK(s2.model.theta() == expected.theta());
}

TEST_CASE("memory learners without memory step like vanilla") {
  Fixture f;
  const Batch b = f.batch(0);
  LearnerState v = make_state(f.model, 10, 1), a = v, g = v, sg = v;
  Rng r1(1), r2(2);
  vanilla_step(v, b, 0.1);
  agem_step(a, b, 0.1, 256, r1);
  gem_step(g, b, 0.1);
  sgem_step(sg, b, 0.1, r2);
  CHECK(a.model.theta() == v.model.theta());
  CHECK(g.model.theta() == v.model.theta());
  CHECK(sg.model.theta() == v.model.theta());
}

TEST_CASE("A-GEM with a satisfied constraint equals vanilla") {
  Fixture f;
  LearnerState s = make_state(f.model, 40, 1);
  // The reference is the same task: its gradient agrees with the batch gradient.
  s.memory.update(f.stream[0], 1);
  LearnerState v = s;
  const Batch b = s.memory.buffer(0);
  Rng rng(3);
  const auto r = agem_step(s, b, 0.1, 256, rng);
  vanilla_step(v, b, 0.1);
  CHECK_FALSE(r.violated);
  CHECK(s.model.theta() == v.model.theta());
}

TEST_CASE("projected A-GEM step does not increase the memory loss to first order") {
  Fixture f;
  LearnerState s = make_state(f.model, 40, 1);
  s.memory.update(f.stream[0], 1);
  for (std::size_t t = 1; t < 3; ++t) {
    const Batch b = f.batch(t);
    const LossGrad g = loss_and_grad(s.model, b);
    const LossGrad ref = loss_and_grad(s.model, s.memory.buffer(0));
    const auto p = agem_project(g.grad.span(), ref.grad.span());
    // Directional derivative of the memory loss along -g~.
    CHECK(-kernels::dot(ref.grad.span(), p.g_tilde.span()) <= 1e-12);
  }
}

TEST_CASE("GEM and S-GEM with one stored task agree with A-GEM on the full buffer") {
  const auto r = oracle::equivalence_suite(30, 7);
  CHECK_MESSAGE(r.passed, r.detail);

  Fixture f;
  LearnerState g = make_state(f.model, 20, 1);
  g.memory.update(f.stream[0], 1);
  LearnerState sg = g;
  Rng rng(4);
  for (int step = 0; step < 20; ++step) {
    const Batch b = f.batch(1 + static_cast<std::size_t>(step) % 2);
    gem_step(g, b, 0.1);
    sgem_step(sg, b, 0.1, rng);
  }
  CHECK(test::max_abs_diff(g.model.theta(), sg.model.theta()) <= 1e-9);
  CHECK(g.violation_count == sg.violation_count);
}

TEST_CASE("GEM counts a violation exactly when some constraint inner product is negative") {
  Fixture f;
  LearnerState s = make_state(f.model, 20, 1);
  s.memory.update(f.stream[0], 1);
  s.memory.update(f.stream[1], 1);
  for (int step = 0; step < 30; ++step) {
    const Batch b = f.batch(2, 5 + static_cast<std::size_t>(step) % 6);
    const auto g = loss_and_grad(s.model, b).grad;
    bool predicted = false;
    for (const Batch* m : s.memory.per_task_batches())
      predicted = predicted || kernels::dot(g.span(), loss_and_grad(s.model, *m).grad.span()) < 0.0;
    const auto before = s.violation_count;
    const auto r = gem_step(s, b, 0.3);
    CHECK(r.violated == predicted);
    CHECK(s.violation_count == before + (predicted ? 1 : 0));
  }
}

TEST_CASE("every learner descends its batch objective at a tiny step") {
  Fixture f;
  for (LearnerKind kind : {LearnerKind::vanilla, LearnerKind::ewc, LearnerKind::agem, LearnerKind::gem,
                           LearnerKind::sgem, LearnerKind::multitask}) {
    HyperParams hp;
    hp.lr = 1e-6;
    hp.lambda = 10.0;
    hp.memory_per_task = 20;
    Learner learner({kind, false}, f.model, hp, 5);
    for (std::size_t t = 0; t < 2; ++t) {
      const Batch b = f.batch(t);
      for (int i = 0; i < 5; ++i) learner.step(b);
      learner.end_task(f.stream[t]);
    }
    const Batch b = f.batch(2);
    const bool ewc = kind == LearnerKind::ewc;
    const double before = batch_objective(learner.state(), b, ewc);
    learner.step(b);
    CHECK_MESSAGE(batch_objective(learner.state(), b, ewc) <= before, learner.spec().name());
  }
}

TEST_CASE("EWC") {
  Fixture f;
  LearnerState s = make_state(f.model, 0, 1);
  Rng rng(2);

  SUBCASE("no anchors or zero strength is vanilla") {
    const Batch b = f.batch(0);
    LearnerState v = s, e = s;
    vanilla_step(v, b, 0.1);
    ewc_step(e, b, 0.1);
    CHECK(e.model.theta() == v.model.theta());
    ewc_consolidate(e, f.stream[0], 50, 0.0, rng);
    LearnerState v2 = e;
    v2.anchors.clear();
    ewc_step(e, b, 0.1);
    vanilla_step(v2, b, 0.1);
    CHECK(e.model.theta() == v2.model.theta());
  }
  SUBCASE("an empty task gives a zero Fisher") {
    TaskDataset empty;
    ewc_consolidate(s, empty, 50, 1.0, rng);
    REQUIRE(s.anchors.size() == 1);
    for (double v : s.anchors[0].fisher) CHECK(v == 0.0);
  }
  SUBCASE("anchors add up and the penalty gradient matches finite differences") {
    ewc_consolidate(s, f.stream[0], 50, 3.0, rng);
    vanilla_step(s, f.batch(1), 0.5);
    ewc_consolidate(s, f.stream[1], 50, 7.0, rng);
    REQUIRE(s.anchors.size() == 2);
    for (double v : s.anchors[0].fisher) CHECK(v >= 0.0);

    auto theta = s.model.theta();
    for (double& v : theta) v += 0.05;
    LearnerState first = s, second = s;
    first.anchors.pop_back();
    second.anchors.erase(second.anchors.begin());
    CHECK(ewc_penalty(s, theta) == doctest::Approx(ewc_penalty(first, theta) + ewc_penalty(second, theta)).epsilon(1e-14));

    const auto grad = ewc_penalty_grad(s, theta);
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); i += 7) {
      auto plus = theta, minus = theta;
      const double h = 1e-4;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (ewc_penalty(s, plus) - ewc_penalty(s, minus)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8}));
    }
    CHECK(worst < 1e-8);
  }
  SUBCASE("larger strength keeps parameters closer to the anchor") {
    ewc_consolidate(s, f.stream[0], 50, 1.0, rng);
    const auto star = s.anchors[0].theta_star;
    double previous = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 10.0, 1000.0}) {
      LearnerState t = s;
      t.anchors[0].lambda = lambda;
      for (int i = 0; i < 30; ++i) ewc_step(t, f.batch(1), 1e-3);
      double dist = 0.0;
      for (std::size_t i = 0; i < star.size(); ++i) dist += (t.model.theta()[i] - star[i]) * (t.model.theta()[i] - star[i]);
      CHECK(dist < previous);
      previous = dist;
    }
  }
}

TEST_CASE("learner names") {
  for (const auto& name : learner_names()) {
    const auto spec = parse_learner(name);
    REQUIRE(spec.has_value());
    CHECK(spec->name() == name);
  }
  CHECK(parse_learner("agem-je")->joint_embedding);
  CHECK(parse_learner("agem-je")->kind == LearnerKind::agem);
  CHECK_FALSE(parse_learner("icarl").has_value());
}

TEST_CASE("reset restores the construction-time state") {
  Fixture f;
  HyperParams hp;
  hp.memory_per_task = 20;
  hp.lambda = 1.0;
  for (const char* name : {"agem", "gem", "sgem", "ewc"}) {
    Learner fresh(*parse_learner(name), f.model, hp, 9);
    Learner used(*parse_learner(name), f.model, hp, 9);
    for (std::size_t t = 0; t < 2; ++t) {
      used.step(f.batch(t));
      used.end_task(f.stream[t]);
    }
    CHECK(used.fingerprint() != fresh.fingerprint());
    used.reset();
    CHECK(used.fingerprint() == fresh.fingerprint());
  }
}
