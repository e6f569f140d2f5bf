#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fft.hpp"
#include "silp/eval.hpp"

namespace silp::eval {

namespace {

constexpr int kBands = 25;
constexpr double kBandLo = 50.0;
constexpr double kBandHi = 8000.0;
constexpr double kClampLo = -10.0;
constexpr double kClampHi = 35.0;
constexpr double kGamma = 0.2;        // weight exponent on |S_j|
constexpr double kFrameGateDb = 40.0; // reference frames below peak-40 dB skipped
constexpr int kFft = 512;

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// 25 mel-spaced triangular filters over the one-sided bin grid.
std::vector<double> triangle_bank(double fs, int bins) {
  std::vector<double> centers(kBands + 2);
  const double mlo = hz_to_mel(kBandLo), mhi = hz_to_mel(std::min(kBandHi, fs / 2));
  for (int i = 0; i < kBands + 2; ++i)
    centers[static_cast<size_t>(i)] = mel_to_hz(mlo + (mhi - mlo) * i / (kBands + 1));
  std::vector<double> bank(static_cast<size_t>(kBands) * bins, 0.0);
  for (int j = 0; j < kBands; ++j) {
    const double fl = centers[static_cast<size_t>(j)];
    const double fc = centers[static_cast<size_t>(j) + 1];
    const double fr = centers[static_cast<size_t>(j) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * fs / kFft;
      double w = 0.0;
      if (f > fl && f <= fc)
        w = (f - fl) / (fc - fl);
      else if (f > fc && f < fr)
        w = (fr - f) / (fr - fc);
      bank[static_cast<size_t>(j) * bins + k] = w;
    }
  }
  return bank;
}

}  // namespace

double fw_segsnr(std::span<const double> s, std::span<const double> x, double sample_rate) {
  if (s.size() != x.size()) throw std::invalid_argument("fw_segsnr: length mismatch");
  const int frame = static_cast<int>(std::lround(0.025 * sample_rate));
  const int hop = frame / 2;
  if (static_cast<int>(s.size()) < frame)
    throw std::invalid_argument("fw_segsnr: input shorter than one frame");
  const int bins = kFft / 2 + 1;
  const auto bank = triangle_bank(sample_rate, bins);

  std::vector<double> win(static_cast<size_t>(frame));
  for (int i = 0; i < frame; ++i)
    win[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / frame);

  const int n_frames = (static_cast<int>(s.size()) - frame) / hop + 1;
  std::vector<double> frame_energy(static_cast<size_t>(n_frames));
  double peak_energy = -1e300;

  std::vector<double> fs_re(static_cast<size_t>(bins)), fs_im(static_cast<size_t>(bins));
  std::vector<double> fx_re(static_cast<size_t>(bins)), fx_im(static_cast<size_t>(bins));
  std::vector<double> buf(static_cast<size_t>(frame));
  std::vector<double> scores;
  scores.reserve(static_cast<size_t>(n_frames));

  // first pass: reference frame energies for the silence gate
  for (int m = 0; m < n_frames; ++m) {
    double e = 0.0;
    for (int i = 0; i < frame; ++i) {
      const double v = s[static_cast<size_t>(m * hop + i)] * win[static_cast<size_t>(i)];
      e += v * v;
    }
    frame_energy[static_cast<size_t>(m)] = 10.0 * std::log10(e + 1e-20);
    peak_energy = std::max(peak_energy, frame_energy[static_cast<size_t>(m)]);
  }

  for (int m = 0; m < n_frames; ++m) {
    if (frame_energy[static_cast<size_t>(m)] <= peak_energy - kFrameGateDb) continue;
    for (int i = 0; i < frame; ++i)
      buf[static_cast<size_t>(i)] = s[static_cast<size_t>(m * hop + i)] * win[static_cast<size_t>(i)];
    fft::rfft(buf.data(), frame, kFft, fs_re.data(), fs_im.data());
    for (int i = 0; i < frame; ++i)
      buf[static_cast<size_t>(i)] = x[static_cast<size_t>(m * hop + i)] * win[static_cast<size_t>(i)];
    fft::rfft(buf.data(), frame, kFft, fx_re.data(), fx_im.data());

    double num = 0.0, den = 0.0;
    for (int j = 0; j < kBands; ++j) {
      double e_sig = 0.0, e_err = 0.0;
      const double* w = bank.data() + static_cast<size_t>(j) * bins;
      for (int k = 0; k < bins; ++k) {
        if (w[k] == 0.0) continue;
        const double sr2 = fs_re[static_cast<size_t>(k)], si2 = fs_im[static_cast<size_t>(k)];
        const double dr = sr2 - fx_re[static_cast<size_t>(k)], di = si2 - fx_im[static_cast<size_t>(k)];
        e_sig += w[k] * (sr2 * sr2 + si2 * si2);
        e_err += w[k] * (dr * dr + di * di);
      }
      double snr = 10.0 * std::log10((e_sig + 1e-20) / (e_err + 1e-20));
      snr = std::clamp(snr, kClampLo, kClampHi);
      const double weight = std::pow(std::sqrt(e_sig) + 1e-20, kGamma);
      num += weight * snr;
      den += weight;
    }
    if (den > 0) scores.push_back(num / den);
  }
  if (scores.empty()) throw std::invalid_argument("fw_segsnr: no reference frames above the gate");
  double acc = 0.0;
  for (double v : scores) acc += v;
  return acc / static_cast<double>(scores.size());
}

}  // namespace silp::eval
