#include "silp/cues.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace silp::cues {

namespace {

void check_shapes(const ComplexSpectrogram& a, const ComplexSpectrogram& b, const char* op) {
  if (a.bins != b.bins || a.frames != b.frames)
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

double wrap_angle(double a) {
  double w = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (w <= 0.0) w += 2.0 * std::numbers::pi;
  return w - std::numbers::pi;
}

Grid ild_map(const ComplexSpectrogram& left, const ComplexSpectrogram& right) {
  check_shapes(left, right, "ild_map");
  Grid out(left.bins, left.frames);
  // log difference rather than log of the ratio, so swapping the channels
  // negates the map exactly
  for (size_t i = 0; i < out.size(); ++i) {
    const double ml = std::abs(left.data[i]) + kMagnitudeGuard;
    const double mr = std::abs(right.data[i]) + kMagnitudeGuard;
    out.v[i] = 20.0 * (std::log10(ml) - std::log10(mr));
  }
  return out;
}

Grid ipd_map(const ComplexSpectrogram& left, const ComplexSpectrogram& right) {
  check_shapes(left, right, "ipd_map");
  Grid out(left.bins, left.frames);
  for (size_t i = 0; i < out.size(); ++i) {
    const auto p = left.data[i] * std::conj(right.data[i]);
    out.v[i] = std::atan2(p.imag(), p.real());
  }
  return out;
}

CueMaps cue_maps(const ComplexSpectrogram& left, const ComplexSpectrogram& right) {
  return {ild_map(left, right), ipd_map(left, right)};
}

Grid ibm_single(const ComplexSpectrogram& spec, double threshold_db) {
  if (threshold_db <= 0) throw std::invalid_argument("ibm_single: threshold must be > 0 dB");
  const Grid energy = dsp::frame_energy(spec);
  const double floor_db = 10.0 * std::log10(dsp::kEnergyFloor);
  Grid mask(spec.bins, spec.frames);
  for (int k = 0; k < spec.bins; ++k) {
    double peak = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < spec.frames; ++l) peak = std::max(peak, energy.at(k, l));
    if (peak <= floor_db + 1e-9) continue;  // all-silent bin carries no speech cues
    const double gate = peak - threshold_db;
    for (int l = 0; l < spec.frames; ++l)
      if (energy.at(k, l) > gate) mask.at(k, l) = 1.0;
  }
  return mask;
}

SpeechActivityMask ibm_combine(const Grid& left, const Grid& right, const dsp::StftConfig& cfg,
                               double split_hz, double threshold_db) {
  if (left.rows != right.rows || left.cols != right.cols)
    throw std::invalid_argument("ibm_combine: shape mismatch");
  SpeechActivityMask out;
  out.threshold_db = threshold_db;
  out.split_bin = static_cast<int>(std::lround(split_hz * cfg.fft_length / cfg.sample_rate));
  out.mask = Grid(left.rows, left.cols);
  for (int k = 0; k < left.rows; ++k)
    for (int l = 0; l < left.cols; ++l) {
      const double m = left.at(k, l) * right.at(k, l);
      out.mask.at(k, l) = m;
      if (m != 0.0) {
        if (k > out.split_bin)
          ++out.n_ld;
        else
          ++out.n_pd;
      }
    }
  return out;
}

SpeechActivityMask speech_mask(const ComplexSpectrogram& left, const ComplexSpectrogram& right,
                               double threshold_db, double split_hz) {
  return ibm_combine(ibm_single(left, threshold_db), ibm_single(right, threshold_db), left.config,
                     split_hz, threshold_db);
}

}  // namespace silp::cues
