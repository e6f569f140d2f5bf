#include <benchmark/benchmark.h>

#include <random>

#include "silp/engine.hpp"
#include "silp/model.hpp"

using namespace silp;

namespace {

model::ModelConfig toy_config() {
  model::ModelConfig mc;
  mc.encoder_channels = {8, 16, 32};
  mc.lstm_layers = 2;
  mc.lstm_hidden = 32;
  mc.linear_features = 32 * 32;
  return mc;
}

dsp::BinauralWaveform utterance(uint64_t seed) {
  dsp::BinauralWaveform w;
  w.left = data::synth_speech(seed, 0.5, 16000.0);
  w.right = data::synth_speech(seed + 1, 0.5, 16000.0);
  return w;
}

}  // namespace

static void BM_ToyForward(benchmark::State& state) {
  dsp::StftConfig stft;
  const auto mc = toy_config();
  auto ckpt = model::init_parameters(mc, stft, 3);
  model::MaskNet net(mc, stft);
  auto w = utterance(1);
  auto spec_l = dsp::stft(w.left, stft);
  auto spec_r = dsp::stft(w.right, stft);
  for (auto _ : state) {
    auto leaves = model::MaskNet::make_leaves(ckpt, false);
    auto fwd = net.forward(spec_l, spec_r, leaves);
    benchmark::DoNotOptimize(fwd.mask_left.re.values().data());
  }
}
BENCHMARK(BM_ToyForward)->Unit(benchmark::kMillisecond);

static void BM_ToyTrainStep(benchmark::State& state) {
  dsp::StftConfig stft;
  auto ckpt = model::init_parameters(toy_config(), stft, 3);
  auto clean = utterance(1);
  auto noisy = clean;
  std::mt19937_64 g(5);
  std::normal_distribution<double> d(0.0, 0.01);
  for (auto& v : noisy.left) v += d(g);
  for (auto& v : noisy.right) v += d(g);
  loss::LossOptions opts;
  for (auto _ : state) {
    auto ul = engine::utterance_loss(ckpt, clean, noisy, opts, true);
    ad::backward(ul.graph.total);
    benchmark::DoNotOptimize(ul.graph.total.item());
  }
}
BENCHMARK(BM_ToyTrainStep)->Unit(benchmark::kMillisecond);

static void BM_FullSizeForward(benchmark::State& state) {
  dsp::StftConfig stft;
  model::ModelConfig mc;  // full-size defaults
  auto ckpt = model::init_parameters(mc, stft, 3);
  model::MaskNet net(mc, stft);
  auto w = utterance(1);
  auto spec_l = dsp::stft(w.left, stft);
  auto spec_r = dsp::stft(w.right, stft);
  auto leaves = model::MaskNet::make_leaves(ckpt, false);
  for (auto _ : state) {
    auto fwd = net.forward(spec_l, spec_r, leaves);
    benchmark::DoNotOptimize(fwd.mask_left.re.values().data());
  }
}
BENCHMARK(BM_FullSizeForward)->Unit(benchmark::kMillisecond)->Iterations(3);
