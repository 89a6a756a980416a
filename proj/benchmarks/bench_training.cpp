#include <benchmark/benchmark.h>

#include <random>

#include "wdl/scgmm.hpp"
#include "wdl/sim.hpp"
#include "wdl/tree.hpp"

namespace {

void BM_FitTree(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  wdl::Matrix x(rows, 3);
  std::vector<double> y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = u(rng);
    y[i] = x(i, 0) * x(i, 1) + u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(wdl::fit_tree(x, y, wdl::TreeParams{}));
}
BENCHMARK(BM_FitTree)->Arg(160)->Arg(2000);

wdl::DistributionalDataset mixture_data(std::size_t samples) {
  wdl::SimConfig sim;
  sim.samples = samples;
  sim.seed = 5;
  return wdl::simulate_mixture(sim);
}

void BM_TrainIterations(benchmark::State& state) {
  const auto data = mixture_data(200);
  wdl::ScgmmConfig cfg;
  cfg.max_boost_iters = static_cast<std::size_t>(state.range(0));
  cfg.early_stop_patience = cfg.max_boost_iters;
  for (auto _ : state) benchmark::DoNotOptimize(wdl::train(data, cfg));
}
BENCHMARK(BM_TrainIterations)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_PredictQuantiles(benchmark::State& state) {
  const auto data = mixture_data(200);
  wdl::ScgmmConfig cfg;
  cfg.max_boost_iters = 30;
  const auto model = wdl::train(data, cfg);
  const auto grid = wdl::default_grid();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(wdl::predict_quantiles(model, data.covariates().row(i), grid));
    i = (i + 1) % data.size();
  }
}
BENCHMARK(BM_PredictQuantiles);

}  // namespace
