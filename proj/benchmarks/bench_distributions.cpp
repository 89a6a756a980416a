#include <benchmark/benchmark.h>

#include <random>

#include "wdl/distributions.hpp"
#include "wdl/mm.hpp"

namespace {

std::vector<double> mixture_sample(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution pick(0.4);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& y : out) y = pick(rng) ? -1.0 + 0.7 * z(rng) : 2.5 + 0.5 * z(rng);
  return out;
}

const wdl::GaussianMixtureParams kTheta({{0.4, -1.0, 0.7}, {0.6, 2.5, 0.5}});

void BM_GmmQuantileFunction(benchmark::State& state) {
  const auto grid = wdl::LevelGrid::uniform(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(wdl::gmm_quantile_function(kTheta, grid));
}
BENCHMARK(BM_GmmQuantileFunction)->Arg(99)->Arg(999);

void BM_EmpiricalQuantiles(benchmark::State& state) {
  const wdl::EmpiricalDistribution g(mixture_sample(static_cast<std::size_t>(state.range(0)), 1));
  const auto grid = wdl::default_grid();
  for (auto _ : state) benchmark::DoNotOptimize(wdl::empirical_quantiles(g, grid));
}
BENCHMARK(BM_EmpiricalQuantiles)->Arg(300)->Arg(5000);

void BM_W2Squared(benchmark::State& state) {
  const auto grid = wdl::default_grid();
  const auto a = wdl::gaussian_quantile_function(0.0, 1.0, grid);
  const auto b = wdl::gmm_quantile_function(kTheta, grid);
  for (auto _ : state) benchmark::DoNotOptimize(wdl::w2_squared(a, b));
}
BENCHMARK(BM_W2Squared);

void BM_Decompose(benchmark::State& state) {
  const wdl::EmpiricalDistribution g(mixture_sample(static_cast<std::size_t>(state.range(0)), 2));
  for (auto _ : state) benchmark::DoNotOptimize(wdl::decompose(g, kTheta));
}
BENCHMARK(BM_Decompose)->Arg(300)->Arg(5000);

void BM_FitGmmMm(benchmark::State& state) {
  const wdl::EmpiricalDistribution g(mixture_sample(300, 3));
  wdl::MmConfig cfg;
  cfg.pi_update = state.range(0) == 0 ? wdl::WeightUpdate::kEmApprox : wdl::WeightUpdate::kProjectedGradient;
  for (auto _ : state) benchmark::DoNotOptimize(wdl::fit_gmm_mm(g, 2, cfg, wdl::default_grid()));
}
BENCHMARK(BM_FitGmmMm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
