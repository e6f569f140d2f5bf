#pragma once

// Time <-> time-frequency transforms. Analysis uses a square-root-Hann
// window pair (periodic Hann of window_length samples, zero-padded to
// fft_length) so weighted overlap-add reconstruction is exact at the
// configured hop. Signals are reflect-padded by window_length - hop_length
// on both ends before framing; istft trims the padding back off, so
// istft(stft(x)) returns exactly len(x) samples.

#include <complex>
#include <span>
#include <vector>

#include "silp/autodiff.hpp"

namespace silp::dsp {

struct StftConfig {
  int fft_length = 512;
  int window_length = 400;  // 25 ms at 16 kHz
  int hop_length = 100;     // 6.25 ms
  double sample_rate = 16000.0;

  int bins() const { return fft_length / 2 + 1; }
  int pad() const { return window_length - hop_length; }
  // Throws std::invalid_argument on violated invariants.
  void validate() const;

  bool operator==(const StftConfig&) const = default;
};

struct BinauralWaveform {
  std::vector<double> left;
  std::vector<double> right;
  double sample_rate = 16000.0;

  size_t samples() const { return left.size(); }
  void validate() const;  // equal lengths, finite values
};

// One-sided complex T-F grid, row-major (bins, frames).
struct ComplexSpectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<std::complex<double>> data;
  StftConfig config;
  int signal_length = 0;  // samples before padding; used by istft to trim

  std::complex<double>& at(int k, int l) { return data[static_cast<size_t>(k) * frames + l]; }
  const std::complex<double>& at(int k, int l) const {
    return data[static_cast<size_t>(k) * frames + l];
  }
};

// A real-valued T-F grid with the same (bins, frames) layout.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}
  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return v.size(); }
};

// Number of analysis frames for a signal of length n under cfg (after
// reflect padding): floor((n + 2*pad - window) / hop) + 1.
int frame_count(int n, const StftConfig& cfg);

// sqrt of the periodic Hann window, length cfg.window_length.
std::vector<double> analysis_window(const StftConfig& cfg);

// Per-sample WOLA normalization sum_m w_a[t-mh] * w_s[t-mh] over the padded
// extent, floored at 1e-12 where no window energy lands.
std::vector<double> wola_norm(const StftConfig& cfg, int frames, int padded_len);

ComplexSpectrogram stft(std::span<const double> x, const StftConfig& cfg);
std::vector<double> istft(const ComplexSpectrogram& spec);

// E(k,l) = 10 log10(|S|^2 + kEnergyFloor), in dB.
inline constexpr double kEnergyFloor = 1e-12;
Grid frame_energy(const ComplexSpectrogram& spec);

// ---- differentiable path -------------------------------------------------
// Complex values as a real/imaginary Var pair with (bins, frames) shape.
struct SpecVar {
  ad::Var re;
  ad::Var im;
  StftConfig config;
  int signal_length = 0;
  int bins() const { return re.dim(0); }
  int frames() const { return re.dim(1); }
};

// Differentiable stft of a 1-d signal Var; same values as stft().
SpecVar stft_graph(const ad::Var& x, const StftConfig& cfg);
// Differentiable istft; same values as istft().
ad::Var istft_graph(const SpecVar& spec);

// Bridges between plain and graph representations.
SpecVar spec_constant(const ComplexSpectrogram& spec);
ComplexSpectrogram spec_values(const SpecVar& spec);

}  // namespace silp::dsp
