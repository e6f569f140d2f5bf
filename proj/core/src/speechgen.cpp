#include <cmath>
#include <numbers>

#include "silp/data.hpp"

namespace silp::data {

namespace {

double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& g, double lo, double hi) { return lo + (hi - lo) * uniform01(g); }

// Box-Muller, fully pinned to the mt19937_64 stream.
double gauss(std::mt19937_64& g) {
  const double u1 = std::max(uniform01(g), 1e-300);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double formant_gain(double f, double center, double bw) {
  const double d = (f - center) / bw;
  return 1.0 / (1.0 + d * d);
}

}  // namespace

std::vector<double> synth_speech(uint64_t seed, double duration_s, double sample_rate,
                                 double level) {
  std::mt19937_64 g(seed ^ 0x53504545434853ULL);
  const int n = static_cast<int>(std::lround(duration_s * sample_rate));
  std::vector<double> x(static_cast<size_t>(n), 0.0);

  int pos = 0;
  while (pos < n) {
    const double r = uniform01(g);
    if (r < 0.08) {  // short pause
      pos += static_cast<int>(uniform(g, 0.03, 0.06) * sample_rate);
      continue;
    }
    const int len = std::min(n - pos, static_cast<int>(uniform(g, 0.12, 0.25) * sample_rate));
    if (len < 32) break;
    const bool voiced = r < 0.8;
    if (voiced) {
      const double f0 = uniform(g, 90.0, 220.0);
      const double drift = uniform(g, -0.08, 0.08);
      const double f1 = uniform(g, 300.0, 900.0);
      const double f2 = uniform(g, 1000.0, 2400.0);
      const int n_harm = static_cast<int>(7000.0 / f0);
      std::vector<double> hgain(static_cast<size_t>(n_harm) + 1, 0.0);
      for (int h = 1; h <= n_harm; ++h) {
        const double f = h * f0;
        const double tilt = f < 500.0 ? 1.0 : std::pow(500.0 / f, 1.0);
        hgain[static_cast<size_t>(h)] =
            tilt * (0.4 + formant_gain(f, f1, 160.0) + 0.7 * formant_gain(f, f2, 220.0));
      }
      double phase = uniform(g, 0.0, 2.0 * std::numbers::pi);
      for (int i = 0; i < len; ++i) {
        const double u = static_cast<double>(i) / len;
        const double f = f0 * (1.0 + drift * u);
        phase += 2.0 * std::numbers::pi * f / sample_rate;
        double s = 0.0;
        for (int h = 1; h <= n_harm; ++h) s += hgain[static_cast<size_t>(h)] * std::sin(h * phase);
        const double env = std::sin(std::numbers::pi * std::min(1.0, u * 1.25)) *
                           (0.7 + 0.3 * std::cos(2.0 * std::numbers::pi * 4.0 * u));
        x[static_cast<size_t>(pos + i)] += s * env * 0.25;
      }
    } else {  // fricative-like burst: high-passed noise
      double hp = 0.0, prev = 0.0;
      for (int i = 0; i < len; ++i) {
        const double w = gauss(g);
        hp = 0.85 * (hp + w - prev);  // first-order highpass around 1.5 kHz
        prev = w;
        const double u = static_cast<double>(i) / len;
        const double env = std::sin(std::numbers::pi * u);
        x[static_cast<size_t>(pos + i)] += hp * env * 0.5;
      }
    }
    pos += len;
  }

  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / n);
  if (rms <= 0.0) rms = 1.0;
  // breath-level floor (-24 dB) so pauses never drop below analysis gates
  for (auto& v : x) v += 0.06 * rms * gauss(g);
  rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / n);
  const double s = level / rms;
  for (auto& v : x) v *= s;
  return x;
}

}  // namespace silp::data
