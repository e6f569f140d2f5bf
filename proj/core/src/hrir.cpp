#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "silp/data.hpp"
#include "silp/wav.hpp"

namespace silp::data {

namespace {

constexpr double kHeadRadius = 0.0875;  // m
constexpr double kSpeedOfSound = 343.0; // m/s
constexpr int kHrirLength = 128;
constexpr int kBaseDelay = 32;          // samples of headroom for the fractional delays
constexpr int kSincHalf = 24;

// Woodworth interaural time difference for a source at |az| <= 90 deg.
double woodworth_itd(double az_rad) {
  return kHeadRadius / kSpeedOfSound * (az_rad + std::sin(az_rad));
}

// Hann-windowed sinc fractional-delay kernel accumulated into h.
void add_fractional_impulse(std::vector<double>& h, double delay_samples, double gain) {
  const int center = static_cast<int>(std::floor(delay_samples));
  const double frac = delay_samples - center;
  for (int i = -kSincHalf; i <= kSincHalf; ++i) {
    const int idx = center + i;
    if (idx < 0 || idx >= static_cast<int>(h.size())) continue;
    const double x = i - frac;
    const double px = std::numbers::pi * x;
    const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(px) / px;
    const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * (i - frac) / (kSincHalf + 1));
    h[static_cast<size_t>(idx)] += gain * sinc * w;
  }
}

// One-pole lowpass applied in place; models the head shadow on the far ear.
void head_shadow(std::vector<double>& h, double cutoff_hz, double fs) {
  const double a = std::exp(-2.0 * std::numbers::pi * cutoff_hz / fs);
  double state = 0.0;
  for (auto& v : h) {
    state = (1.0 - a) * v + a * state;
    v = state;
  }
}

}  // namespace

Hrir synth_hrir(double azimuth_deg, double sample_rate) {
  if (azimuth_deg < -180.0 || azimuth_deg > 180.0)
    throw std::invalid_argument("synth_hrir: azimuth out of [-180, 180]");
  Hrir h;
  h.azimuth_deg = azimuth_deg;
  h.sample_rate = sample_rate;
  h.left.assign(kHrirLength, 0.0);
  h.right.assign(kHrirLength, 0.0);

  // fold rear azimuths onto the frontal cone for the delay model
  const double az = std::abs(azimuth_deg) <= 90.0 ? azimuth_deg
                    : (azimuth_deg > 0 ? 180.0 - azimuth_deg : -180.0 - azimuth_deg);
  const double az_rad = std::abs(az) * std::numbers::pi / 180.0;
  const double itd_samples = woodworth_itd(az_rad) * sample_rate;
  const double shadow = std::sin(az_rad);  // 0 at front, 1 at the side

  // positive azimuth = source on the right: the right ear leads
  std::vector<double>& near = azimuth_deg >= 0 ? h.right : h.left;
  std::vector<double>& far = azimuth_deg >= 0 ? h.left : h.right;
  add_fractional_impulse(near, kBaseDelay, 1.0);
  add_fractional_impulse(far, kBaseDelay + itd_samples, 1.0 - 0.3 * shadow);
  if (shadow > 0.0) {
    const double cutoff = 8000.0 - 6200.0 * shadow;
    head_shadow(far, cutoff, sample_rate);
  }
  return h;
}

HrirSet HrirSet::synthetic(double sample_rate, double spacing_deg) {
  if (spacing_deg <= 0 || std::fmod(360.0, spacing_deg) != 0.0)
    throw std::invalid_argument("HrirSet: spacing must divide 360");
  HrirSet set;
  for (double az = -180.0; az < 180.0; az += spacing_deg)
    set.entries_.push_back(synth_hrir(az, sample_rate));
  return set;
}

HrirSet HrirSet::load(const std::string& dir) {
  namespace fs = std::filesystem;
  HrirSet set;
  if (!fs::is_directory(dir)) throw std::runtime_error("HrirSet: not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() < 8 || name.rfind("azi_", 0) != 0 || e.path().extension() != ".wav") continue;
    const std::string num = name.substr(4, name.size() - 8);
    double az = 0.0;
    try {
      az = std::stod(num);
    } catch (const std::exception&) {
      throw std::runtime_error("HrirSet: bad azimuth in file name " + name);
    }
    auto w = wav::read(e.path().string());
    if (w.channels.size() != 2) throw std::runtime_error("HrirSet: " + name + " is not stereo");
    if (w.frames() < 8) throw std::runtime_error("HrirSet: " + name + " is too short");
    Hrir h;
    h.azimuth_deg = az;
    h.sample_rate = w.sample_rate;
    h.left = w.channels[0];
    h.right = w.channels[1];
    set.entries_.push_back(std::move(h));
  }
  if (set.entries_.empty()) throw std::runtime_error("HrirSet: no azi_<deg>.wav files in " + dir);
  std::sort(set.entries_.begin(), set.entries_.end(),
            [](const Hrir& a, const Hrir& b) { return a.azimuth_deg < b.azimuth_deg; });
  return set;
}

void HrirSet::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& h : entries_) {
    char name[32];
    std::snprintf(name, sizeof(name), "azi_%d.wav", static_cast<int>(std::lround(h.azimuth_deg)));
    wav::write((fs::path(dir) / name).string(),
               wav::make_stereo(h.left, h.right, h.sample_rate, wav::SampleFormat::Float32));
  }
}

const Hrir& HrirSet::nearest(double azimuth_deg) const {
  if (entries_.empty()) throw std::logic_error("HrirSet: empty");
  const Hrir* best = &entries_.front();
  double best_d = 1e300;
  for (const auto& h : entries_) {
    double d = std::abs(h.azimuth_deg - azimuth_deg);
    d = std::min(d, 360.0 - d);  // circular
    if (d < best_d) {
      best_d = d;
      best = &h;
    }
  }
  return *best;
}

dsp::BinauralWaveform spatialize(std::span<const double> mono, const Hrir& h) {
  if (mono.empty()) throw std::invalid_argument("spatialize: empty input");
  const int n = static_cast<int>(mono.size());
  dsp::BinauralWaveform out;
  out.sample_rate = h.sample_rate;
  out.left.assign(static_cast<size_t>(n), 0.0);
  out.right.assign(static_cast<size_t>(n), 0.0);
  auto convolve = [&](const std::vector<double>& ir, std::vector<double>& dst) {
    const int m = static_cast<int>(ir.size());
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      const int kmax = std::min(m - 1, i);
      for (int k = 0; k <= kmax; ++k) acc += ir[static_cast<size_t>(k)] * mono[static_cast<size_t>(i - k)];
      dst[static_cast<size_t>(i)] = acc;
    }
  };
  convolve(h.left, out.left);
  convolve(h.right, out.right);
  return out;
}

}  // namespace silp::data
