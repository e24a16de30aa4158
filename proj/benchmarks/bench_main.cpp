#include <benchmark/benchmark.h>

#include "flowrbm/eval.hpp"
#include "flowrbm/flow.hpp"
#include "flowrbm/model.hpp"
#include "flowrbm/train.hpp"

using namespace flowrbm;

namespace {

BinaryDataset random_batch(int n, int d, Rng& rng) {
  BinaryDataset data{Eigen::MatrixXd(n, d), "bench"};
  for (Eigen::Index i = 0; i < data.rows.size(); ++i) data.rows.data()[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  return data;
}

void BM_FreeEnergies(benchmark::State& state) {
  Rng rng(1);
  const RbmParams p = init_params(784, static_cast<int>(state.range(0)), rng, 0.1);
  const BinaryDataset batch = random_batch(100, 784, rng);
  for (auto _ : state) benchmark::DoNotOptimize(free_energies(p, batch.rows));
  state.SetItemsProcessed(state.iterations() * batch.size());
}
BENCHMARK(BM_FreeEnergies)->Arg(20)->Arg(200)->Arg(500);

void BM_OneBitFlipFlow(benchmark::State& state) {
  Rng rng(2);
  const int d = static_cast<int>(state.range(0));
  const RbmParams p = init_params(d, 20, rng, 0.1);
  const BinaryDataset batch = random_batch(25, d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(one_bit_flip_flow(p, batch).objective);
  state.SetItemsProcessed(state.iterations() * batch.size());
}
BENCHMARK(BM_OneBitFlipFlow)->Arg(196)->Arg(784);

void BM_FactorizedFlow(benchmark::State& state) {
  Rng rng(3);
  const RbmParams p = init_params(784, 200, rng, 0.1);
  const BinaryDataset batch = random_batch(25, 784, rng);
  const BinaryDataset samples = random_batch(50, 784, rng);
  for (auto _ : state) benchmark::DoNotOptimize(factorized_flow(p, p, batch, samples).objective);
}
BENCHMARK(BM_FactorizedFlow);

void BM_CdUpdate(benchmark::State& state) {
  Rng rng(4);
  const RbmParams p = init_params(196, 20, rng, 0.1);
  const BinaryDataset batch = random_batch(100, 196, rng);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cd_k_update(p, batch, k, rng).dW.data());
}
BENCHMARK(BM_CdUpdate)->Arg(1)->Arg(10);

void BM_ExactLogPartition(benchmark::State& state) {
  Rng rng(5);
  const RbmParams p = init_params(196, static_cast<int>(state.range(0)), rng, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(exact_log_partition(p));
  state.SetItemsProcessed(state.iterations() * (int64_t{1} << state.range(0)));
}
BENCHMARK(BM_ExactLogPartition)->Arg(12)->Arg(16)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_Ais(benchmark::State& state) {
  Rng rng(6);
  const RbmParams p = init_params(196, 20, rng, 0.1);
  AisConfig cfg;
  cfg.n_temperatures = 1000;
  cfg.n_chains = 100;
  for (auto _ : state) benchmark::DoNotOptimize(ais_log_partition(p, cfg).value);
}
BENCHMARK(BM_Ais)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
