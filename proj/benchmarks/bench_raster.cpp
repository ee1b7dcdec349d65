#include <random>

#include <benchmark/benchmark.h>

#include "l3s/raster.hpp"

using namespace l3s;

namespace {

Mat random_rows(int n, int cols, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Mat m(n, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

void BM_SplatForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
  Mat pts = random_rows(n, 3, 1.0, size - 1.0, 1);
  pts.col(2).setConstant(2.0);
  pts.col(2).head(n / 2).array() += 1.0;
  const SplatConfig cfg;
  for (auto _ : state) {
    Tape tape;
    Var p = tape.parameter(pts);
    Var img = splat_points(tape, p, size, size, cfg);
    tape.backward(mean(tape, img));
    benchmark::DoNotOptimize(tape.grad(p).data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SplatForwardBackward)->Args({500, 32})->Args({2000, 32})->Args({2000, 64});

void BM_StrokeRasterForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
  const Mat curves = random_rows(n, 8, 0.0, size, 2);
  const StrokeRasterConfig cfg;
  for (auto _ : state) {
    Tape tape;
    Var c = tape.parameter(curves);
    Var img = raster_strokes(tape, c, size, size, cfg);
    tape.backward(mean(tape, img));
    benchmark::DoNotOptimize(tape.grad(c).data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_StrokeRasterForwardBackward)->Args({8, 64})->Args({16, 128});

}  // namespace
