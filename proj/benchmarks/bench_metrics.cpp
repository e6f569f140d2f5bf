#include <benchmark/benchmark.h>

#include <random>

#include "silp/data.hpp"
#include "silp/eval.hpp"
#include "silp/loss.hpp"

using namespace silp;

static void BM_Stoi(benchmark::State& state) {
  const auto s = data::synth_speech(1, 2.0, 16000.0);
  auto noisy = s;
  std::mt19937_64 g(2);
  std::normal_distribution<double> d(0.0, 0.02);
  for (auto& v : noisy) v += d(g);
  for (auto _ : state) benchmark::DoNotOptimize(loss::stoi(s, noisy, 16000.0));
}
BENCHMARK(BM_Stoi)->Unit(benchmark::kMillisecond);

static void BM_FwSegSnr(benchmark::State& state) {
  const auto s = data::synth_speech(1, 2.0, 16000.0);
  auto noisy = s;
  std::mt19937_64 g(2);
  std::normal_distribution<double> d(0.0, 0.02);
  for (auto& v : noisy) v += d(g);
  for (auto _ : state) benchmark::DoNotOptimize(eval::fw_segsnr(s, noisy, 16000.0));
}
BENCHMARK(BM_FwSegSnr)->Unit(benchmark::kMillisecond);

static void BM_IsotropicNoise(benchmark::State& state) {
  auto hrirs = data::HrirSet::synthetic(16000.0, 5.0);
  auto wgn = data::make_wgn();
  for (auto _ : state) {
    auto v = data::isotropic_noise(0.5, *wgn, hrirs, 5.0, 7);
    benchmark::DoNotOptimize(v.left.data());
  }
}
BENCHMARK(BM_IsotropicNoise)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
