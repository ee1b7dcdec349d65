#include <random>

#include <benchmark/benchmark.h>

#include "l3s/evalkit.hpp"
#include "l3s/nn.hpp"

using namespace l3s;

namespace {

// Encoded batch through the deformation network and back.
void BM_MlpForwardBackward(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0)), width = static_cast<int>(state.range(1));
  const int depth = static_cast<int>(state.range(2));
  const MlpShape shape{80, width, depth, depth / 2, 3};
  const Mlp net = mlp_init(shape, 1, false);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Mat x(rows, 80);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = d(rng);
  for (auto _ : state) {
    Tape tape;
    MlpBinding b = bind_mlp(tape, net, true);
    Var y = mlp_forward(tape, net, b, tape.constant(x));
    tape.backward(mean(tape, y));
    benchmark::DoNotOptimize(tape.grad(b.params.front()).data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_MlpForwardBackward)->Args({2000, 64, 4})->Args({2000, 256, 8})->Unit(benchmark::kMillisecond);

void BM_Chamfer(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<Vec3> a(n), b(n);
  for (auto& p : a) p = Vec3(d(rng), d(rng), d(rng));
  for (auto& p : b) p = Vec3(d(rng), d(rng), d(rng));
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_distance(a, b));
}
BENCHMARK(BM_Chamfer)->Arg(192)->Arg(2000);

}  // namespace
