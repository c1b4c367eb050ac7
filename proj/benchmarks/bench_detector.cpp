#include <benchmark/benchmark.h>

#include <numeric>

#include "deft/detector.hpp"
#include "deft/noise.hpp"
#include "deft/synthetic.hpp"

namespace {

using namespace deft;

LabeledDataset benchmark_dataset(std::size_t n) {
  SyntheticConfig config;
  config.n = n;
  config.dim = 64;
  config.num_classes = 10;
  config.seed = 1;
  LabeledDataset ds = generate_synthetic(config).dataset;
  return inject_symmetric_noise(ds, 0.4, 2).first;
}

void LossDp(benchmark::State& state) {
  const LabeledDataset ds = benchmark_dataset(static_cast<std::size_t>(state.range(0)));
  const PromptPair prompts = init_prompts(ds, 3);
  Rng rng(4);
  const auto comp = sample_complementary_labels(ds, ds.given_labels, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        loss_dp(ds, prompts, Temperature(0.1), ds.given_labels, comp, 1.0).value);
  }
}
BENCHMARK(LossDp)->Arg(1000)->Arg(5000);

void LossSim(benchmark::State& state) {
  const LabeledDataset ds = benchmark_dataset(static_cast<std::size_t>(state.range(0)));
  const PromptPair prompts = init_prompts(ds, 3);
  const AdapterParams adapter = AdapterParams::make_low_rank(ds.dim, 8, 0.1, 5);
  std::vector<std::size_t> subset(ds.n);
  std::iota(subset.begin(), subset.end(), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        loss_sim(ds, subset, ds.given_labels, prompts.positive, Temperature(0.1), adapter).value);
  }
}
BENCHMARK(LossSim)->Arg(1000)->Arg(5000);

void SelectClean(benchmark::State& state) {
  const LabeledDataset ds = benchmark_dataset(static_cast<std::size_t>(state.range(0)));
  const PromptPair prompts = init_prompts(ds, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(select_clean(ds, prompts, Temperature(0.1), false).selected_count());
  }
}
BENCHMARK(SelectClean)->Arg(1000)->Arg(5000);

void DetectorEpoch(benchmark::State& state) {
  const LabeledDataset ds = benchmark_dataset(2000);
  DetectorConfig config;
  config.warmup_epochs = 1;
  config.detect_epochs = 1;
  config.seed = 6;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        train_detector(ds, config, AdapterParams::make_low_rank(ds.dim, 8, 0.1, 7))
            .selection.selected_count());
  }
}
BENCHMARK(DetectorEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
