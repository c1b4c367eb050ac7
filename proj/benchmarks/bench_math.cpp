#include <benchmark/benchmark.h>

#include <vector>

#include "deft/math.hpp"
#include "deft/rng.hpp"

namespace {

std::vector<double> random_vector(std::size_t dim, std::uint64_t seed) {
  deft::Rng rng(seed);
  std::vector<double> v(dim);
  for (double& x : v) {
    x = rng.normal();
  }
  return v;
}

void CosineSim(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  const std::vector<double> a = random_vector(dim, 1);
  const std::vector<double> b = random_vector(dim, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(deft::cosine_sim(a, b));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(CosineSim)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void SoftmaxOverSims(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  const std::vector<double> sims = random_vector(k, 3);
  std::vector<double> out(k);
  const deft::Temperature tau(0.1);
  for (auto _ : state) {
    deft::softmax_over_sims(sims, tau, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(SoftmaxOverSims)->Arg(10)->Arg(100)->Arg(1000);

void RngNormal(benchmark::State& state) {
  deft::Rng rng(7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rng.normal());
  }
}
BENCHMARK(RngNormal);

void RngUniformInt(benchmark::State& state) {
  deft::Rng rng(8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rng.uniform_int(1000));
  }
}
BENCHMARK(RngUniformInt);

}  // namespace
