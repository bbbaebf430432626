// OpenMP kernels against the serial reference at the shapes the 784-256-256
// network produces: a training minibatch (10 rows), an A-GEM reference
// batch (256 rows) and a GEM per-task buffer (250 rows).
//
//   ./build/bench/llb_bench --benchmark_filter=matmul_nt
//   OMP_NUM_THREADS=4 ./build/bench/llb_bench

#include <benchmark/benchmark.h>

#include <omp.h>

#include <random>
#include <vector>

#include "llb/kernels.hpp"
#include "llb/learners.hpp"
#include "llb/nn.hpp"

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = gauss(rng);
  return v;
}

using Kernel = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t,
                        std::size_t, std::size_t);

// args: rows n, inner k, cols m
void run_matmul(benchmark::State& state, Kernel kernel) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const auto a = random_vector(n * k, 1);
  const auto b = random_vector(k * m, 2);
  std::vector<double> c(n * m);
  for (auto _ : state) {
    kernel(a, b, c, n, k, m);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * k * m));
  state.counters["threads"] = omp_get_max_threads();
}

void matmul_args(benchmark::internal::Benchmark* b) {
  b->Args({10, 784, 256})->Args({256, 784, 256})->Args({256, 256, 256})->Args({250, 256, 10});
}

void BM_matmul_nt_omp(benchmark::State& s) { run_matmul(s, llb::kernels::matmul_nt); }
void BM_matmul_nt_serial(benchmark::State& s) { run_matmul(s, llb::kernels::serial::matmul_nt); }
void BM_matmul_nn_omp(benchmark::State& s) { run_matmul(s, llb::kernels::matmul_nn); }
void BM_matmul_nn_serial(benchmark::State& s) { run_matmul(s, llb::kernels::serial::matmul_nn); }
void BM_matmul_tn_omp(benchmark::State& s) { run_matmul(s, llb::kernels::matmul_tn); }
void BM_matmul_tn_serial(benchmark::State& s) { run_matmul(s, llb::kernels::serial::matmul_tn); }

BENCHMARK(BM_matmul_nt_omp)->Apply(matmul_args);
BENCHMARK(BM_matmul_nt_serial)->Apply(matmul_args);
BENCHMARK(BM_matmul_nn_omp)->Apply(matmul_args);
BENCHMARK(BM_matmul_nn_serial)->Apply(matmul_args);
BENCHMARK(BM_matmul_tn_omp)->Apply(matmul_args);
BENCHMARK(BM_matmul_tn_serial)->Apply(matmul_args);

void BM_dot_omp(benchmark::State& state) {
  const auto x = random_vector(269322, 3), y = random_vector(269322, 4);
  for (auto _ : state) benchmark::DoNotOptimize(llb::kernels::dot(x, y));
}
void BM_dot_serial(benchmark::State& state) {
  const auto x = random_vector(269322, 3), y = random_vector(269322, 4);
  for (auto _ : state) benchmark::DoNotOptimize(llb::kernels::serial::dot(x, y));
}
BENCHMARK(BM_dot_omp);
BENCHMARK(BM_dot_serial);

// Full forward/backward of the network on a batch of range(0) rows.
void BM_loss_and_grad(benchmark::State& state) {
  llb::Architecture arch;
  arch.input_dim = 784;
  arch.hidden_layers = {256, 256};
  arch.heads = {{0, 10, {}}};
  const llb::Model model = llb::init_model(arch, 1);
  const auto rows = static_cast<std::size_t>(state.range(0));
  llb::Batch batch;
  batch.inputs = llb::Matrix(rows, 784);
  batch.inputs.data = random_vector(rows * 784, 5);
  for (std::size_t i = 0; i < rows; ++i) {
    batch.labels.push_back(static_cast<int>(i % 10));
    batch.ids.push_back(i);
  }
  for (auto _ : state) benchmark::DoNotOptimize(llb::loss_and_grad(model, batch).loss);
}
BENCHMARK(BM_loss_and_grad)->Arg(10)->Arg(256);

void BM_agem_project(benchmark::State& state) {
  const auto g = random_vector(269322, 6), ref = random_vector(269322, 7);
  for (auto _ : state) benchmark::DoNotOptimize(llb::agem_project(g, ref).g_tilde.values.data());
}
BENCHMARK(BM_agem_project);

}  // namespace

BENCHMARK_MAIN();
