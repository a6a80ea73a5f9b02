#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>
#include <vector>

#include "fedac/clustering.hpp"
#include "fedac/data.hpp"
#include "fedac/engine.hpp"
#include "fedac/nn.hpp"
#include "fedac/rng.hpp"
#include "fedac/similarity.hpp"

using namespace fedac;

namespace {

std::vector<ParamVector> make_models(int count, int dim, std::uint64_t seed) {
  Rng rng = derive_stream(seed, "bench_models");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ParamVector> models;
  for (int i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    models.emplace_back(std::move(v), static_cast<std::size_t>(3 * dim / 4));
  }
  return models;
}

void BM_Lrcos(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  auto models = make_models(16, dim, 1);
  ReductionMap map = update_map(models, 10);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lrcos(models[i % 16], models[(i + 1) % 16], map));
    ++i;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Lrcos)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_UpdateMap(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  auto models = make_models(30, dim, 2);
  for (auto _ : state) {
    ReductionMap map = update_map(models, 10);
    benchmark::DoNotOptimize(map.matrix.values.data());
  }
}
BENCHMARK(BM_UpdateMap)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_EStep(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  auto models = make_models(30, dim, 3);
  ClusterSet clusters;
  clusters.centers = make_models(3, dim, 4);
  clusters.member_counts = {10, 10, 10};
  ReductionMap map = update_map(models, 10);
  for (auto _ : state) {
    Assignment a = e_step(models, clusters, map);
    benchmark::DoNotOptimize(a.cluster_of.data());
  }
}
BENCHMARK(BM_EStep)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_Granularity(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  auto models = make_models(30, dim, 5);
  ClusterSet clusters;
  clusters.centers = make_models(3, dim, 6);
  clusters.member_counts = {10, 10, 10};
  Assignment a;
  a.cluster_count = 3;
  for (int i = 0; i < 30; ++i) a.cluster_of.push_back(i % 3);
  for (auto _ : state) {
    GranularityReport report = granularity(models, a, clusters);
    benchmark::DoNotOptimize(report.per_cluster.data());
  }
}
BENCHMARK(BM_Granularity)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_LocalUpdate(benchmark::State& state) {
  SyntheticTask task = synthetic_clustered_task(1, 1, 16, 4, 1.0, 0.2, 200, 200, 7);
  AssembledClients assembled = assemble_synthetic(task, 7);

  RunConfig config;
  config.eta = 0.05;
  config.mu = 0.1;
  config.lambda = 0.1;
  config.local_epochs = 5;
  config.batch_size = static_cast<int>(state.range(0));
  config.hidden_sizes = {32};

  MlpSpec spec = build_spec(config, assembled.pool);
  Rng init_rng = derive_stream(7, "init");
  ParamVector w0 = init_params(spec, init_rng);
  std::vector<double> phi(w0.embedding().begin(), w0.embedding().end());
  ClientState client{0, w0, assembled.partitions[0]};

  std::uint64_t iteration = 0;
  for (auto _ : state) {
    Rng rng = derive_stream(7, "bench_local", iteration++);
    ClientState out = local_update(client, w0, phi, config, assembled.pool, spec, rng);
    benchmark::DoNotOptimize(out.params.values.data());
  }
}
BENCHMARK(BM_LocalUpdate)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
