#include <benchmark/benchmark.h>

#include <random>

#include "lsor/analysis.hpp"
#include "lsor/trainer.hpp"

using namespace lsor;

namespace {

Cohort bench_cohort() {
  GenConfig cfg;
  cfg.n_subjects = 200;
  cfg.input_dim = 32;
  cfg.seed = 7;
  return generate_cohort(cfg);
}

void fill_random(std::span<double> v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& x : v) x = dist(rng);
}

void BM_EncoderForward(benchmark::State& state) {
  Mlp enc({32, 64, 64, 64}, 0.2, 1);
  std::vector<double> x(64 * 32);
  fill_random(x, 2);
  Tensor batch({64, 32}, x, false);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(enc.forward(tape, batch));
  }
}
BENCHMARK(BM_EncoderForward);

void BM_TotalLossForwardBackward(benchmark::State& state) {
  const Cohort cohort = bench_cohort();
  TrainConfig cfg;
  cfg.latent_dim = 64;
  Trainer trainer(cohort, cfg);
  trainer.pretrain();
  PairSampler sampler(cohort, 64, 3);
  const PairBatch batch = sampler.next();
  ReferenceTrajectories refs(4, 8, 64);
  TauSchedule sched{0.1, 1.0, 400};
  for (auto _ : state) {
    Tape tape;
    auto res = total_loss(tape, batch, trainer.encoder(), trainer.decoder(), trainer.grid(),
                          refs, cfg, sched, 0);
    tape.backward(res.loss);
    trainer.grid().representations().clear_grad();
  }
}
BENCHMARK(BM_TotalLossForwardBackward);

void BM_PairwiseSqdist(benchmark::State& state) {
  std::vector<double> a(64 * 64), b(32 * 64);
  fill_random(a, 4);
  fill_random(b, 5);
  Tensor za({64, 64}, a, false);
  Tensor zb({32, 64}, b, false);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(tape.pairwise_sqdist(za, zb));
  }
}
BENCHMARK(BM_PairwiseSqdist);

void BM_SoftWeights(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(soft_weights({1, 3}, 4, 8, 12.5));
  }
}
BENCHMARK(BM_SoftWeights);

void BM_KmeansInit(benchmark::State& state) {
  std::vector<double> points(600 * 64);
  fill_random(points, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kmeans(points, 600, 64, 32, 7));
  }
}
BENCHMARK(BM_KmeansInit);

void BM_DistanceCorrelation(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n * 2), y(n);
  fill_random(x, 8);
  fill_random(y, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(distance_correlation(x, n, 2, y, 1));
  }
}
BENCHMARK(BM_DistanceCorrelation)->Arg(128)->Arg(512);

void BM_SimilarityGrid(benchmark::State& state) {
  SomGrid grid(4, 8, 64);
  auto reps = grid.representations().values_mut();
  fill_random(reps, 10);
  std::vector<double> z(64);
  fill_random(z, 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(similarity_grid(z, grid));
  }
}
BENCHMARK(BM_SimilarityGrid);

}  // namespace

BENCHMARK_MAIN();
