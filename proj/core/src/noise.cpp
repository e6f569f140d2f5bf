#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fft.hpp"
#include "silp/data.hpp"
#include "silp/wav.hpp"

namespace silp::data {

namespace {

double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

double gauss(std::mt19937_64& g) {
  const double u1 = std::max(uniform01(g), 1e-300);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

class WgnSource final : public NoiseSource {
 public:
  std::vector<double> draw(int n, std::mt19937_64& rng) const override {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = gauss(rng);
    return v;
  }
  std::string name() const override { return "wgn"; }
};

constexpr int kSsnTaps = 512;
constexpr int kWelchFft = 512;

class SsnSource final : public NoiseSource {
 public:
  explicit SsnSource(std::vector<double> fir) : fir_(std::move(fir)) {}

  std::vector<double> draw(int n, std::mt19937_64& rng) const override {
    // prime with one filter length so the output is stationary
    const int taps = static_cast<int>(fir_.size());
    std::vector<double> white(static_cast<size_t>(n + taps));
    for (auto& x : white) x = gauss(rng);
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int k = 0; k < taps; ++k) acc += fir_[static_cast<size_t>(k)] * white[static_cast<size_t>(i + taps - k)];
      out[static_cast<size_t>(i)] = acc;
    }
    return out;
  }
  std::string name() const override { return "ssn"; }

 private:
  std::vector<double> fir_;
};

class FileSource final : public NoiseSource {
 public:
  FileSource(std::vector<double> samples, std::string label)
      : samples_(std::move(samples)), label_(std::move(label)) {}

  std::vector<double> draw(int n, std::mt19937_64& rng) const override {
    const int total = static_cast<int>(samples_.size());
    if (total < n) throw std::runtime_error("file noise: recording shorter than requested draw");
    const int start = static_cast<int>(uniform01(rng) * (total - n));
    return {samples_.begin() + start, samples_.begin() + start + n};
  }
  std::string name() const override { return label_; }

 private:
  std::vector<double> samples_;
  std::string label_;
};

// Welch-averaged one-sided magnitude spectrum, 512-point segments, 50 %
// overlap, periodic Hann window.
std::vector<double> welch_magnitude(std::span<const double> x) {
  const int nfft = kWelchFft;
  const int hop = nfft / 2;
  std::vector<double> win(static_cast<size_t>(nfft));
  for (int i = 0; i < nfft; ++i)
    win[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / nfft);
  const int bins = nfft / 2 + 1;
  std::vector<double> acc(static_cast<size_t>(bins), 0.0);
  std::vector<double> frame(static_cast<size_t>(nfft)), re(static_cast<size_t>(bins)),
      im(static_cast<size_t>(bins));
  int count = 0;
  for (int s = 0; s + nfft <= static_cast<int>(x.size()); s += hop) {
    for (int i = 0; i < nfft; ++i) frame[static_cast<size_t>(i)] = x[static_cast<size_t>(s + i)] * win[static_cast<size_t>(i)];
    fft::rfft(frame.data(), nfft, nfft, re.data(), im.data());
    for (int k = 0; k < bins; ++k)
      acc[static_cast<size_t>(k)] += re[static_cast<size_t>(k)] * re[static_cast<size_t>(k)] +
                                     im[static_cast<size_t>(k)] * im[static_cast<size_t>(k)];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("welch: input shorter than one segment");
  for (auto& v : acc) v = std::sqrt(v / count);
  return acc;
}

}  // namespace

std::unique_ptr<NoiseSource> make_wgn() { return std::make_unique<WgnSource>(); }

std::unique_ptr<NoiseSource> make_ssn(std::span<const double> reference_speech,
                                      double sample_rate) {
  if (static_cast<double>(reference_speech.size()) < 60.0 * sample_rate)
    throw std::invalid_argument("make_ssn: need at least 60 s of reference speech");
  auto mag = welch_magnitude(reference_speech);
  {  // third-octave smoothing of the target keeps the 512-tap fit inside
     // the band tolerance even across steep spectral edges
    const auto raw = mag;
    const double half = std::pow(2.0, 1.0 / 6.0);
    for (size_t k = 1; k < mag.size(); ++k) {
      const size_t lo = static_cast<size_t>(static_cast<double>(k) / half);
      const size_t hi = std::min(mag.size() - 1, static_cast<size_t>(static_cast<double>(k) * half));
      double acc = 0.0;
      for (size_t j = lo; j <= hi; ++j) acc += raw[j] * raw[j];
      mag[k] = std::sqrt(acc / static_cast<double>(hi - lo + 1));
    }
  }
  // zero-phase frequency-sampling design, rotated and Hann-windowed to
  // kSsnTaps taps
  const int nfft = kWelchFft;
  const int bins = nfft / 2 + 1;
  std::vector<double> im(static_cast<size_t>(bins), 0.0);
  std::vector<double> proto(static_cast<size_t>(nfft));
  fft::irfft(mag.data(), im.data(), nfft, proto.data());
  std::vector<double> fir(static_cast<size_t>(kSsnTaps));
  for (int i = 0; i < kSsnTaps; ++i) {
    const int src = (i - kSsnTaps / 2 + nfft) % nfft;
    const double w =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (kSsnTaps - 1));
    fir[static_cast<size_t>(i)] = proto[static_cast<size_t>(src)] * w;
  }
  // normalize to unit broadband gain for white input
  double e = 0.0;
  for (double v : fir) e += v * v;
  const double s = 1.0 / std::sqrt(std::max(e, 1e-30));
  for (auto& v : fir) v *= s;
  return std::make_unique<SsnSource>(std::move(fir));
}

std::unique_ptr<NoiseSource> make_file_noise(const std::string& path, double sample_rate) {
  auto w = wav::read(path);
  if (w.sample_rate != sample_rate)
    throw std::runtime_error("file noise: sample rate mismatch for " + path);
  return std::make_unique<FileSource>(w.channels[0], "file:" + path);
}

std::unique_ptr<NoiseSource> make_noise_source(const std::string& spec, double sample_rate) {
  if (spec == "wgn") return make_wgn();
  if (spec == "ssn") {
    const auto ref = synth_speech(0x55AA55AA, 62.0, sample_rate);
    return make_ssn(ref, sample_rate);
  }
  if (spec.rfind("file:", 0) == 0) return make_file_noise(spec.substr(5), sample_rate);
  throw std::invalid_argument("unknown noise source: " + spec + " (expected wgn|ssn|file:<path>)");
}

dsp::BinauralWaveform isotropic_noise(double duration_s, const NoiseSource& source,
                                      const HrirSet& hrirs, double spacing_deg, uint64_t seed) {
  if (spacing_deg <= 0 || std::fmod(360.0, spacing_deg) != 0.0)
    throw std::invalid_argument("isotropic_noise: spacing must divide 360");
  const double fs = hrirs.entries().front().sample_rate;
  const int n = static_cast<int>(std::lround(duration_s * fs));
  const int positions = static_cast<int>(std::lround(360.0 / spacing_deg));
  if (static_cast<int>(hrirs.size()) < positions)
    throw std::invalid_argument("isotropic_noise: HRIR set does not cover the requested grid");

  dsp::BinauralWaveform acc;
  acc.sample_rate = fs;
  acc.left.assign(static_cast<size_t>(n), 0.0);
  acc.right.assign(static_cast<size_t>(n), 0.0);
  for (int p = 0; p < positions; ++p) {
    const double az = -180.0 + p * spacing_deg;
    std::mt19937_64 rng(entry_seed(seed, 0x150000 + static_cast<uint64_t>(p)));
    const auto draw = source.draw(n, rng);
    const auto bin = spatialize(draw, hrirs.nearest(az));
    for (int i = 0; i < n; ++i) {
      acc.left[static_cast<size_t>(i)] += bin.left[static_cast<size_t>(i)];
      acc.right[static_cast<size_t>(i)] += bin.right[static_cast<size_t>(i)];
    }
  }
  double power = 0.0;
  for (int i = 0; i < n; ++i)
    power += acc.left[static_cast<size_t>(i)] * acc.left[static_cast<size_t>(i)] +
             acc.right[static_cast<size_t>(i)] * acc.right[static_cast<size_t>(i)];
  power /= 2.0 * n;  // mean per-channel power
  const double s = 1.0 / std::sqrt(std::max(power, 1e-30));
  for (auto& v : acc.left) v *= s;
  for (auto& v : acc.right) v *= s;
  return acc;
}

}  // namespace silp::data
