#include "silp/dsp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fft.hpp"

namespace silp::dsp {

void StftConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("StftConfig: sample_rate must be > 0");
  if (!(hop_length > 0 && hop_length <= window_length && window_length <= fft_length))
    throw std::invalid_argument("StftConfig: need 0 < hop <= window <= fft_length");
  if (!fft::is_pow2(fft_length))
    throw std::invalid_argument("StftConfig: fft_length must be a power of two");
}

void BinauralWaveform::validate() const {
  if (left.size() != right.size())
    throw std::invalid_argument("BinauralWaveform: channel length mismatch");
  for (double v : left)
    if (!std::isfinite(v)) throw std::invalid_argument("BinauralWaveform: non-finite sample");
  for (double v : right)
    if (!std::isfinite(v)) throw std::invalid_argument("BinauralWaveform: non-finite sample");
}

int frame_count(int n, const StftConfig& cfg) {
  const int padded = n + 2 * cfg.pad();
  return (padded - cfg.window_length) / cfg.hop_length + 1;
}

std::vector<double> analysis_window(const StftConfig& cfg) {
  const int w = cfg.window_length;
  std::vector<double> win(static_cast<size_t>(w));
  for (int n = 0; n < w; ++n) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / w);
    win[static_cast<size_t>(n)] = std::sqrt(hann);
  }
  return win;
}

std::vector<double> wola_norm(const StftConfig& cfg, int frames, int padded_len) {
  const auto win = analysis_window(cfg);
  std::vector<double> norm(static_cast<size_t>(padded_len), 0.0);
  for (int m = 0; m < frames; ++m) {
    const int base = m * cfg.hop_length;
    for (int n = 0; n < cfg.window_length; ++n) {
      const int t = base + n;
      if (t < padded_len) norm[static_cast<size_t>(t)] += win[static_cast<size_t>(n)] * win[static_cast<size_t>(n)];
    }
  }
  for (auto& v : norm) v = std::max(v, 1e-12);
  return norm;
}

ComplexSpectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  cfg.validate();
  if (x.empty()) throw std::invalid_argument("stft: empty input");
  const int n = static_cast<int>(x.size());
  if (n < cfg.window_length) throw std::invalid_argument("stft: input shorter than window");

  const int pad = cfg.pad();
  const int frames = frame_count(n, cfg);
  const int bins = cfg.bins();
  const auto win = analysis_window(cfg);

  std::vector<double> padded(static_cast<size_t>(n + 2 * pad));
  for (int i = 0; i < pad; ++i) padded[static_cast<size_t>(i)] = x[static_cast<size_t>(pad - i)];
  std::copy(x.begin(), x.end(), padded.begin() + pad);
  for (int i = 0; i < pad; ++i)
    padded[static_cast<size_t>(pad + n + i)] = x[static_cast<size_t>(n - 2 - i)];

  ComplexSpectrogram spec;
  spec.bins = bins;
  spec.frames = frames;
  spec.config = cfg;
  spec.signal_length = n;
  spec.data.assign(static_cast<size_t>(bins) * frames, {0.0, 0.0});

  std::vector<double> frame(static_cast<size_t>(cfg.window_length));
  std::vector<double> re(static_cast<size_t>(bins)), im(static_cast<size_t>(bins));
  for (int m = 0; m < frames; ++m) {
    const int base = m * cfg.hop_length;
    for (int j = 0; j < cfg.window_length; ++j)
      frame[static_cast<size_t>(j)] = padded[static_cast<size_t>(base + j)] * win[static_cast<size_t>(j)];
    fft::rfft(frame.data(), cfg.window_length, cfg.fft_length, re.data(), im.data());
    for (int k = 0; k < bins; ++k) spec.at(k, m) = {re[static_cast<size_t>(k)], im[static_cast<size_t>(k)]};
  }
  return spec;
}

std::vector<double> istft(const ComplexSpectrogram& spec) {
  const StftConfig& cfg = spec.config;
  cfg.validate();
  if (spec.bins != cfg.bins())
    throw std::invalid_argument("istft: spectrogram bins inconsistent with config");
  for (const auto& c : spec.data)
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
      throw std::invalid_argument("istft: non-finite spectrogram value");

  const int pad = cfg.pad();
  const int padded_len = spec.signal_length + 2 * pad;
  const auto win = analysis_window(cfg);
  const auto norm = wola_norm(cfg, spec.frames, padded_len);

  std::vector<double> acc(static_cast<size_t>(padded_len), 0.0);
  std::vector<double> re(static_cast<size_t>(spec.bins)), im(static_cast<size_t>(spec.bins));
  std::vector<double> frame(static_cast<size_t>(cfg.fft_length));
  for (int m = 0; m < spec.frames; ++m) {
    for (int k = 0; k < spec.bins; ++k) {
      re[static_cast<size_t>(k)] = spec.at(k, m).real();
      im[static_cast<size_t>(k)] = spec.at(k, m).imag();
    }
    fft::irfft(re.data(), im.data(), cfg.fft_length, frame.data());
    const int base = m * cfg.hop_length;
    for (int j = 0; j < cfg.window_length; ++j) {
      const int t = base + j;
      if (t < padded_len) acc[static_cast<size_t>(t)] += frame[static_cast<size_t>(j)] * win[static_cast<size_t>(j)];
    }
  }
  std::vector<double> out(static_cast<size_t>(spec.signal_length));
  for (int i = 0; i < spec.signal_length; ++i)
    out[static_cast<size_t>(i)] = acc[static_cast<size_t>(pad + i)] / norm[static_cast<size_t>(pad + i)];
  return out;
}

Grid frame_energy(const ComplexSpectrogram& spec) {
  Grid e(spec.bins, spec.frames);
  for (int k = 0; k < spec.bins; ++k)
    for (int l = 0; l < spec.frames; ++l) {
      const auto c = spec.at(k, l);
      e.at(k, l) = 10.0 * std::log10(std::norm(c) + kEnergyFloor);
    }
  return e;
}

// ---- differentiable path -------------------------------------------------

namespace {

std::vector<int> frame_starts(int frames, int hop) {
  std::vector<int> starts(static_cast<size_t>(frames));
  for (int m = 0; m < frames; ++m) starts[static_cast<size_t>(m)] = m * hop;
  return starts;
}

}  // namespace

SpecVar stft_graph(const ad::Var& x, const StftConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(x.numel());
  if (n < cfg.window_length) throw std::invalid_argument("stft: input shorter than window");
  const int frames = frame_count(n, cfg);
  const int bins = cfg.bins();

  ad::Var padded = ad::reflect_pad(x, cfg.pad());
  ad::Var fr = ad::gather_frames(padded, frame_starts(frames, cfg.hop_length), cfg.window_length);
  fr = ad::mul_rowvec(fr, analysis_window(cfg));
  ad::Var packed = ad::rfft_rows(fr, cfg.fft_length);  // (frames, 2*bins)

  SpecVar out;
  out.config = cfg;
  out.signal_length = n;
  // transpose from (frames, bins) to (bins, frames) via permute on a
  // rank-3 view
  ad::Var re = ad::slice(packed, 1, 0, bins);
  ad::Var im = ad::slice(packed, 1, bins, bins);
  out.re = ad::reshape(ad::permute3(ad::reshape(re, {frames, bins, 1}), {1, 0, 2}), {bins, frames});
  out.im = ad::reshape(ad::permute3(ad::reshape(im, {frames, bins, 1}), {1, 0, 2}), {bins, frames});
  return out;
}

ad::Var istft_graph(const SpecVar& spec) {
  const StftConfig& cfg = spec.config;
  cfg.validate();
  const int bins = spec.bins();
  const int frames = spec.frames();
  if (bins != cfg.bins()) throw std::invalid_argument("istft: bins inconsistent with config");
  const int pad = cfg.pad();
  const int padded_len = spec.signal_length + 2 * pad;

  auto to_rows = [&](const ad::Var& v) {
    return ad::reshape(ad::permute3(ad::reshape(v, {bins, frames, 1}), {1, 0, 2}), {frames, bins});
  };
  ad::Var packed = ad::concat2(1, to_rows(spec.re), to_rows(spec.im));  // (frames, 2*bins)
  ad::Var fr = ad::irfft_rows(packed, cfg.fft_length);                  // (frames, fft)
  fr = ad::slice(fr, 1, 0, cfg.window_length);
  fr = ad::mul_rowvec(fr, analysis_window(cfg));
  ad::Var acc = ad::overlap_add(fr, cfg.hop_length, padded_len);
  acc = ad::div_vec(acc, wola_norm(cfg, frames, padded_len));
  return ad::slice(acc, 0, pad, spec.signal_length);
}

SpecVar spec_constant(const ComplexSpectrogram& spec) {
  SpecVar out;
  out.config = spec.config;
  out.signal_length = spec.signal_length;
  const size_t n = spec.data.size();
  std::vector<double> re(n), im(n);
  for (size_t i = 0; i < n; ++i) {
    re[i] = spec.data[i].real();
    im[i] = spec.data[i].imag();
  }
  out.re = ad::Var::constant({spec.bins, spec.frames}, std::move(re));
  out.im = ad::Var::constant({spec.bins, spec.frames}, std::move(im));
  return out;
}

ComplexSpectrogram spec_values(const SpecVar& spec) {
  ComplexSpectrogram out;
  out.bins = spec.bins();
  out.frames = spec.frames();
  out.config = spec.config;
  out.signal_length = spec.signal_length;
  out.data.resize(static_cast<size_t>(out.bins) * out.frames);
  auto re = spec.re.values();
  auto im = spec.im.values();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = {re[i], im[i]};
  return out;
}

}  // namespace silp::dsp
