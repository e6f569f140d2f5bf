#include <benchmark/benchmark.h>

#include <random>

#include "silp/dsp.hpp"

using namespace silp;

namespace {

std::vector<double> noise(int n) {
  std::mt19937_64 g(1);
  std::normal_distribution<double> d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = d(g);
  return v;
}

}  // namespace

static void BM_Stft(benchmark::State& state) {
  dsp::StftConfig cfg;
  const auto x = noise(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto spec = dsp::stft(x, cfg);
    benchmark::DoNotOptimize(spec.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stft)->Arg(8000)->Arg(16000)->Arg(48000)->Unit(benchmark::kMillisecond);

static void BM_StftRoundTrip(benchmark::State& state) {
  dsp::StftConfig cfg;
  const auto x = noise(16000);
  for (auto _ : state) {
    auto y = dsp::istft(dsp::stft(x, cfg));
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_StftRoundTrip)->Unit(benchmark::kMillisecond);

static void BM_IstftGraphBackward(benchmark::State& state) {
  dsp::StftConfig cfg;
  const auto x = noise(8000);
  for (auto _ : state) {
    auto leaf = ad::Var::leaf({8000}, x, true);
    auto out = ad::sum(ad::square(dsp::istft_graph(dsp::stft_graph(leaf, cfg))));
    ad::backward(out);
    benchmark::DoNotOptimize(leaf.grad().data());
  }
}
BENCHMARK(BM_IstftGraphBackward)->Unit(benchmark::kMillisecond);
