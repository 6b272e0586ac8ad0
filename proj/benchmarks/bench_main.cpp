#include <benchmark/benchmark.h>

#include "snpla/flows.hpp"
#include "snpla/metrics.hpp"
#include "snpla/models.hpp"

using namespace snpla;

static void BM_FlowSample1000(benchmark::State& state) {
  RngStream rng(1);
  flow::FlowArchitecture arch{2, 5, 5, {50, 50}, {}};
  flow::ConditionalFlow f(arch, rng);
  ad::Matrix ctx = rng.normal_matrix(1, 5);
  for (auto _ : state) {
    auto s = f.sample(1000, ad::Var::leaf(ctx), rng);
    benchmark::DoNotOptimize(s.samples.value());
  }
}
BENCHMARK(BM_FlowSample1000)->Unit(benchmark::kMillisecond);

static void BM_FlowLogProb(benchmark::State& state) {
  RngStream rng(2);
  flow::FlowArchitecture arch{5, 2, 5, {50, 50}, {}};
  flow::ConditionalFlow f(arch, rng);
  ad::Matrix x = rng.normal_matrix(1000, 5);
  ad::Matrix ctx = rng.normal_matrix(1000, 2);
  for (auto _ : state) {
    auto lp = f.log_prob(ad::Var::leaf(x), ad::Var::leaf(ctx));
    benchmark::DoNotOptimize(lp.value());
  }
}
BENCHMARK(BM_FlowLogProb)->Unit(benchmark::kMillisecond);

static void BM_Wasserstein1(benchmark::State& state) {
  RngStream rng(3);
  long n = state.range(0);
  ad::Matrix a = rng.normal_matrix(static_cast<int>(n), 2);
  ad::Matrix b = rng.normal_matrix(static_cast<int>(n), 2);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::wasserstein1(a, b));
}
BENCHMARK(BM_Wasserstein1)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_LvGillespie(benchmark::State& state) {
  RngStream rng(4);
  Eigen::Vector4d theta = models::lv_theta_gt();
  for (auto _ : state) {
    auto path = models::lv_gillespie_simulate(theta, rng);
    benchmark::DoNotOptimize(path.predators);
  }
}
BENCHMARK(BM_LvGillespie)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
