// Serial reference transcriptions against the OpenMP kernels, same inputs,
// double precision throughout. Run with OMP_NUM_THREADS to vary parallelism.

#include <benchmark/benchmark.h>

#include "oracle_sweep.hpp"
#include "reference.hpp"
#include "xcbam/autograd.hpp"
#include "xcbam/context.hpp"

namespace {

using namespace xcbam;
using Var = Variable<double>;

Shape feature_shape(const benchmark::State& state) {
  return Shape{1, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
               static_cast<int>(state.range(1)) * 2};
}

void BM_ConvReference(benchmark::State& state) {
  const Shape s = feature_shape(state);
  const auto x = random_normal<double>(s, 1);
  const auto w = random_normal<double>(Shape{s.c, s.c, 3, 3}, 2, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(ref::conv2d(x, w, {}, 1, 1, 1));
}

void BM_ConvOptimized(benchmark::State& state) {
  const Shape s = feature_shape(state);
  const Var x(random_normal<double>(s, 1));
  const Var w(random_normal<double>(Shape{s.c, s.c, 3, 3}, 2, 0.1));
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, Var(), ConvGeometry{1, 1, 1}));
}

void BM_PoolReference(benchmark::State& state) {
  const auto x = random_normal<double>(feature_shape(state), 3);
  for (auto _ : state) benchmark::DoNotOptimize(ref::avg_pool(x, 3, 2, 1));
}

void BM_PoolOptimized(benchmark::State& state) {
  const Var x(random_normal<double>(feature_shape(state), 3));
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(pool2d(x, PoolKind::avg, 3, 2, 1));
}

void BM_BilinearReference(benchmark::State& state) {
  const Shape s = feature_shape(state);
  const auto x = random_normal<double>(s, 4);
  for (auto _ : state) benchmark::DoNotOptimize(ref::bilinear(x, 2 * s.h, 2 * s.w));
}

void BM_BilinearOptimized(benchmark::State& state) {
  const Shape s = feature_shape(state);
  const Var x(random_normal<double>(s, 4));
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(bilinear_resize(x, 2 * s.h, 2 * s.w));
}

void BM_CcbamReference(benchmark::State& state) {
  const Shape s = feature_shape(state);
  Rng rng(5);
  Ccbam<double> m(s.c, rng);
  testing::randomize(m, 6);
  const auto weights = testing::to_ccbam_weights(m);
  const auto high = random_normal<double>(s, 7);
  const auto low = random_normal<double>(s, 8);
  for (auto _ : state) benchmark::DoNotOptimize(ref::ccbam(high, low, weights));
}

void BM_CcbamOptimized(benchmark::State& state) {
  const Shape s = feature_shape(state);
  Rng rng(5);
  Ccbam<double> m(s.c, rng);
  testing::randomize(m, 6);
  const Var high(random_normal<double>(s, 7));
  const Var low(random_normal<double>(s, 8));
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(high, low));
}

// (channels, height); width is twice the height.
void shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 32})->Args({128, 64})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_ConvReference)->Apply(shapes);
BENCHMARK(BM_ConvOptimized)->Apply(shapes);
BENCHMARK(BM_PoolReference)->Apply(shapes);
BENCHMARK(BM_PoolOptimized)->Apply(shapes);
BENCHMARK(BM_BilinearReference)->Apply(shapes);
BENCHMARK(BM_BilinearOptimized)->Apply(shapes);
BENCHMARK(BM_CcbamReference)->Apply(shapes);
BENCHMARK(BM_CcbamOptimized)->Apply(shapes);

}  // namespace

BENCHMARK_MAIN();
