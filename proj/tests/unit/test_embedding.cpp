#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "llb/embedding.hpp"
#include "llb/errors.hpp"
#include "llb/nn.hpp"
#include "oracle.hpp"

using namespace llb;

namespace {

constexpr std::size_t kInput = 6;
constexpr std::size_t kAttr = 5;
constexpr std::size_t kDim = 4;

Architecture je_arch() {
  Architecture a;
  a.input_dim = kInput;
  a.hidden_layers = {kDim};
  a.head_mode = HeadMode::joint_embedding;
  a.attribute_count = kAttr;
  return a;
}

Matrix descriptor(std::initializer_list<std::vector<double>> rows) {
  Matrix m(rows.size(), kAttr);
  std::size_t r = 0;
  for (const auto& row : rows) std::copy(row.begin(), row.end(), m.row(r++).begin());
  return m;
}

}  // namespace

TEST_CASE("class embeddings") {
  const Model model = init_model(je_arch(), 3);
  const auto table = model.view(model.attribute_table());

  SUBCASE("one-hot rows select table rows") {
    const Matrix e = embed_task(model, descriptor({{0, 0, 1, 0, 0}, {1, 0, 0, 0, 0}}));
    for (std::size_t d = 0; d < kDim; ++d) {
      CHECK(e(0, d) == table[2 * kDim + d]);
      CHECK(e(1, d) == table[0 * kDim + d]);
    }
  }
  SUBCASE("zero descriptor embeds to zero") {
    for (double v : embed_task(model, Matrix(3, kAttr, 0.0)).data) CHECK(v == 0.0);
  }
  SUBCASE("random descriptor matches a loop product") {
    Rng rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    Matrix desc(4, kAttr);
    for (double& v : desc.data) v = u(rng);
    const Matrix e = embed_task(model, desc);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t d = 0; d < kDim; ++d) {
        long double s = 0;
        for (std::size_t a = 0; a < kAttr; ++a) s += static_cast<long double>(desc(c, a)) * table[a * kDim + d];
        CHECK(std::abs(e(c, d) - static_cast<double>(s)) <= 1e-12);
      }
  }
  SUBCASE("shape mismatches are configuration errors") {
    CHECK_THROWS_AS(embed_task(model, Matrix(2, kAttr + 1)), ConfigError);
    CHECK_THROWS_AS(embed_task(Matrix(2, kAttr), model.view(model.attribute_table()), kAttr, kDim + 1), ConfigError);
  }
}

TEST_CASE("joint-embedding probabilities") {
  Rng rng(4);
  const Batch b = test::random_batch(9, kInput, 3, 0, rng);

  SUBCASE("zero table gives uniform probabilities") {
    Model model = init_model(je_arch(), 3);
    for (double& v : model.view(model.attribute_table())) v = 0.0;
    const Matrix p = je_probabilities(model, b, descriptor({{1, 0, 0, 0, 0}, {0, 1, 0, 0, 0}, {0, 0, 1, 1, 0}}));
    for (double v : p.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("a single class gets probability one") {
    const Model model = init_model(je_arch(), 3);
    for (double v : je_probabilities(model, b, descriptor({{1, 1, 0, 0, 1}})).data) CHECK(v == 1.0);
  }
  SUBCASE("rows are normalized") {
    const Model model = init_model(je_arch(), 3);
    const Matrix p = je_probabilities(model, b, descriptor({{1, 0, 1, 0, 0}, {0, 1, 0, 0, 1}, {1, 1, 1, 1, 0}}));
    for (std::size_t i = 0; i < p.rows; ++i) {
      double s = 0.0;
      for (double v : p.row(i)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("joint-embedding gradient") {
  SUBCASE("central differences on trunk and table") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto problem = oracle::random_grad_problem(seed, true);
      const auto lg = loss_and_grad(problem.model, problem.batch);
      const auto check = oracle::check_gradient(problem.model, problem.batch, lg.grad.span());
      CHECK(check.max_rel_error < 1e-6);
    }
  }
  SUBCASE("an attribute absent from the task gets no gradient") {
    const Model model = init_model(je_arch(), 3);
    Rng rng(5);
    const Batch b = test::random_batch(6, kInput, 2, 0, rng);
    const Matrix desc = descriptor({{1, 0, 1, 0, 0}, {0, 1, 1, 0, 0}});
    const LossGrad lg = je_loss_and_grad(model, b, desc);
    const Slice t = model.attribute_table();
    for (std::size_t a : {std::size_t{3}, std::size_t{4}})
      for (std::size_t d = 0; d < kDim; ++d) CHECK(lg.grad[t.offset + a * kDim + d] == 0.0);
    bool any = false;
    for (std::size_t d = 0; d < kDim; ++d) any = any || lg.grad[t.offset + d] != 0.0;
    CHECK(any);
  }
}

TEST_CASE("shared attribute table couples tasks through common attributes") {
  Model model = init_model(je_arch(), 3);
  Rng rng(6);
  const Batch train = test::random_batch(8, kInput, 2, 0, rng);
  const Batch probe = test::random_batch(5, kInput, 2, 1, rng);
  const Matrix seen = descriptor({{1, 1, 0, 0, 0}, {0, 1, 0, 0, 0}});
  const Matrix sharing = descriptor({{1, 0, 0, 1, 0}, {0, 0, 0, 1, 1}});
  const Matrix disjoint = descriptor({{0, 0, 1, 1, 0}, {0, 0, 0, 1, 1}});

  const Matrix sharing_before = je_forward(model, probe, sharing);
  const Matrix disjoint_before = je_forward(model, probe, disjoint);

  // One step on the table only (frozen trunk).
  LossGrad lg = je_loss_and_grad(model, train, seen);
  const Slice t = model.attribute_table();
  for (std::size_t i = 0; i < lg.grad.size(); ++i)
    if (i < t.offset || i >= t.offset + t.size) lg.grad[i] = 0.0;
  apply_update(model, lg.grad, 0.5);

  CHECK(je_forward(model, probe, disjoint).data == disjoint_before.data);
  CHECK(je_forward(model, probe, sharing).data != sharing_before.data);
}

TEST_CASE("zero-shot evaluation") {
  SUBCASE("integer-descriptor model has no zero-shot path") {
    auto task = test::toy_task(0, 10, 10, kInput, 2, 1);
    Architecture arch;
    arch.input_dim = kInput;
    arch.hidden_layers = {kDim};
    arch.heads = {{0, 2, {}}};
    CHECK_THROWS_AS(zero_shot_eval(init_model(arch, 1), *task), ConfigError);
  }
  SUBCASE("untrained model scores near chance") {
    SplitStreamOptions opts;
    opts.num_classes = 40;
    opts.classes_per_task = 5;
    opts.tasks = 8;
    opts.cv_tasks = 2;
    opts.attributes = 12;
    opts.input_dim = kInput;
    opts.test_per_class = 40;
    const Continuum c = make_synthetic_split_stream(opts, 3);
    Architecture arch;
    arch.input_dim = kInput;
    arch.hidden_layers = {16};
    arch.head_mode = HeadMode::joint_embedding;
    arch.attribute_count = 12;
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const Model model = init_model(arch, seed);
      for (const auto& t : c.tasks) mean += zero_shot_eval(model, *t);
    }
    mean /= 8.0 * static_cast<double>(c.tasks.size());
    // A single random model favours some classes; averaged over seeds and
    // tasks the accuracy sits at 1/C.
    CHECK(std::abs(mean - 0.2) < 0.05);
  }
}
