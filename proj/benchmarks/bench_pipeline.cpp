#include <benchmark/benchmark.h>

#include "deft/baselines.hpp"
#include "deft/noise.hpp"
#include "deft/rng.hpp"
#include "deft/synthetic.hpp"

namespace {

using namespace deft;

void InstanceNoise(benchmark::State& state) {
  SyntheticConfig config;
  config.n = static_cast<std::size_t>(state.range(0));
  config.dim = 64;
  config.num_classes = 10;
  config.seed = 1;
  const LabeledDataset ds = generate_synthetic(config).dataset;
  for (auto _ : state) {
    benchmark::DoNotOptimize(inject_instance_noise(ds, 0.3, 2).second.realized_ratio);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(InstanceNoise)->RangeMultiplier(4)->Range(1000, 16000)->Complexity()->Unit(benchmark::kMillisecond);

void GmmFit(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> losses(static_cast<std::size_t>(state.range(0)));
  for (double& v : losses) {
    v = rng.uniform() < 0.6 ? 0.3 + 0.1 * std::abs(rng.normal())
                            : 1.8 + 0.3 * std::abs(rng.normal());
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_gmm_em(losses).means[0]);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(GmmFit)->RangeMultiplier(4)->Range(2000, 32000)->Complexity()->Unit(benchmark::kMillisecond);

void SyntheticGeneration(benchmark::State& state) {
  SyntheticConfig config;
  config.n = static_cast<std::size_t>(state.range(0));
  config.dim = 64;
  config.num_classes = 10;
  config.seed = 4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_synthetic(config).dataset.n);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(SyntheticGeneration)->RangeMultiplier(4)->Range(1000, 16000)->Complexity()->Unit(benchmark::kMillisecond);

}  // namespace
