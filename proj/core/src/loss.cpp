#include "silp/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace silp::loss {

namespace {

constexpr double kLog10 = 2.302585092994045684;  // ln(10)
constexpr double kAbsGuard = 1e-30;  // inside sqrt(re^2+im^2) for gradient safety

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

// Selection weights for a cue term: mask / count over the requested side of
// the split bin. Returns an all-zero grid when the count is zero.
std::vector<double> cue_weights(const SpeechActivityMask& mask, bool high_side) {
  const long count = high_side ? mask.n_ld : mask.n_pd;
  std::vector<double> w(mask.mask.size(), 0.0);
  if (count == 0) return w;
  const double inv = 1.0 / static_cast<double>(count);
  for (int k = 0; k < mask.mask.rows; ++k) {
    const bool side = high_side ? (k > mask.split_bin) : (k <= mask.split_bin);
    if (!side) continue;
    for (int l = 0; l < mask.mask.cols; ++l)
      w[static_cast<size_t>(k) * mask.mask.cols + l] = mask.mask.at(k, l) * inv;
  }
  return w;
}

void check_pair(const ComplexSpectrogram& a, const ComplexSpectrogram& b, const char* op) {
  if (a.bins != b.bins || a.frames != b.frames)
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

double snr_db(std::span<const double> s, std::span<const double> s_hat) {
  if (s.size() != s_hat.size()) throw std::invalid_argument("snr_db: length mismatch");
  const double es = energy(s);
  if (es <= 0.0) throw std::invalid_argument("snr_db: all-zero reference");
  double en = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double d = s_hat[i] - s[i];
    en += d * d;
  }
  return 10.0 * std::log10(es / (en + kSnrGuard * es));
}

double snr_loss(const BinauralWaveform& s, const BinauralWaveform& s_hat) {
  s.validate();
  s_hat.validate();
  if (s.samples() != s_hat.samples()) throw std::invalid_argument("snr_loss: length mismatch");
  return -(snr_db(s.left, s_hat.left) + snr_db(s.right, s_hat.right)) / 2.0;
}

double ild_loss(const ComplexSpectrogram& s_left, const ComplexSpectrogram& s_right,
                const ComplexSpectrogram& shat_left, const ComplexSpectrogram& shat_right,
                const SpeechActivityMask& mask) {
  check_pair(s_left, shat_left, "ild_loss");
  check_pair(s_right, shat_right, "ild_loss");
  check_pair(s_left, s_right, "ild_loss");
  if (mask.n_ld == 0) return 0.0;
  const auto ild_s = cues::ild_map(s_left, s_right);
  const auto ild_hat = cues::ild_map(shat_left, shat_right);
  const auto w = cue_weights(mask, /*high_side=*/true);
  double acc = 0.0;
  for (size_t i = 0; i < w.size(); ++i) acc += w[i] * std::abs(ild_s.v[i] - ild_hat.v[i]);
  return acc;
}

double ipd_loss(const ComplexSpectrogram& s_left, const ComplexSpectrogram& s_right,
                const ComplexSpectrogram& shat_left, const ComplexSpectrogram& shat_right,
                const SpeechActivityMask& mask) {
  check_pair(s_left, shat_left, "ipd_loss");
  check_pair(s_right, shat_right, "ipd_loss");
  check_pair(s_left, s_right, "ipd_loss");
  if (mask.n_pd == 0) return 0.0;
  const auto ipd_s = cues::ipd_map(s_left, s_right);
  const auto ipd_hat = cues::ipd_map(shat_left, shat_right);
  const auto w = cue_weights(mask, /*high_side=*/false);
  double acc = 0.0;
  for (size_t i = 0; i < w.size(); ++i)
    acc += w[i] * std::abs(cues::wrap_angle(ipd_s.v[i] - ipd_hat.v[i]));
  return acc;
}

LossBreakdown composite_loss(const BinauralWaveform& s, const ComplexSpectrogram& s_left,
                             const ComplexSpectrogram& s_right,
                             const ComplexSpectrogram& shat_left,
                             const ComplexSpectrogram& shat_right, const LossOptions& opts) {
  dsp::SpecVar hl = dsp::spec_constant(shat_left);
  dsp::SpecVar hr = dsp::spec_constant(shat_right);
  return composite_graph(s, s_left, s_right, hl, hr, opts).values();
}

// ---- differentiable path -------------------------------------------------

LossBreakdown LossGraph::values() const {
  return {total.item(), snr_term.item(), stoi_term.item(), ild_term.item(), ipd_term.item()};
}

ad::Var snr_term_graph(std::span<const double> s, const ad::Var& s_hat) {
  if (static_cast<int64_t>(s.size()) != s_hat.numel())
    throw std::invalid_argument("snr: length mismatch");
  const double es = energy(s);
  if (es <= 0.0) throw std::invalid_argument("snr: all-zero reference");
  ad::Var ref = ad::Var::constant({static_cast<int>(s.size())},
                                  std::vector<double>(s.begin(), s.end()));
  ad::Var err = ad::sum(ad::square(ad::sub(s_hat, ref)));
  ad::Var snr =
      ad::mul_scalar(ad::log_of(ad::mul_scalar(ad::add_scalar(err, kSnrGuard * es), 1.0 / es)),
                     -10.0 / kLog10);
  return snr;
}

namespace {

struct CVarSpec {
  ad::Var mag_l, mag_r;        // |S| with guard
  ad::Var re_l, im_l, re_r, im_r;
};

CVarSpec split_pair(const dsp::SpecVar& l, const dsp::SpecVar& r) {
  CVarSpec s;
  s.re_l = l.re;
  s.im_l = l.im;
  s.re_r = r.re;
  s.im_r = r.im;
  s.mag_l = ad::sqrt_guarded(ad::add(ad::square(l.re), ad::square(l.im)), kAbsGuard);
  s.mag_r = ad::sqrt_guarded(ad::add(ad::square(r.re), ad::square(r.im)), kAbsGuard);
  return s;
}

}  // namespace

ad::Var ild_term_graph(const ComplexSpectrogram& s_left, const ComplexSpectrogram& s_right,
                       const dsp::SpecVar& shat_left, const dsp::SpecVar& shat_right,
                       const SpeechActivityMask& mask) {
  if (mask.n_ld == 0) return ad::Var::scalar(0.0);
  const auto ild_s = cues::ild_map(s_left, s_right);
  CVarSpec hat = split_pair(shat_left, shat_right);
  const double c = 20.0 / kLog10;
  ad::Var ild_hat = ad::mul_scalar(
      ad::sub(ad::log_of(ad::add_scalar(hat.mag_l, cues::kMagnitudeGuard)),
              ad::log_of(ad::add_scalar(hat.mag_r, cues::kMagnitudeGuard))),
      c);
  ad::Var diff = ad::abs_of(ad::sub(ad::Var::constant({ild_s.rows, ild_s.cols}, ild_s.v), ild_hat));
  return ad::weighted_sum(diff, cue_weights(mask, true));
}

ad::Var ipd_term_graph(const ComplexSpectrogram& s_left, const ComplexSpectrogram& s_right,
                       const dsp::SpecVar& shat_left, const dsp::SpecVar& shat_right,
                       const SpeechActivityMask& mask) {
  if (mask.n_pd == 0) return ad::Var::scalar(0.0);
  const auto ipd_s = cues::ipd_map(s_left, s_right);
  // phase of Shat_L * conj(Shat_R)
  ad::Var pre = ad::add(ad::mul(shat_left.re, shat_right.re), ad::mul(shat_left.im, shat_right.im));
  ad::Var pim = ad::sub(ad::mul(shat_left.im, shat_right.re), ad::mul(shat_left.re, shat_right.im));
  ad::Var ipd_hat = ad::atan2_of(pim, pre, cues::kMagnitudeGuard * cues::kMagnitudeGuard);
  ad::Var diff = ad::wrap_angle(
      ad::sub(ad::Var::constant({ipd_s.rows, ipd_s.cols}, ipd_s.v), ipd_hat));
  return ad::weighted_sum(ad::abs_of(diff), cue_weights(mask, false));
}

LossGraph composite_graph(const BinauralWaveform& s, const ComplexSpectrogram& s_left,
                          const ComplexSpectrogram& s_right, const dsp::SpecVar& shat_left,
                          const dsp::SpecVar& shat_right, const LossOptions& opts) {
  s.validate();
  check_pair(s_left, s_right, "composite_loss");
  if (s_left.bins != shat_left.bins() || s_left.frames != shat_left.frames() ||
      s_right.bins != shat_right.bins() || s_right.frames != shat_right.frames())
    throw std::invalid_argument("composite_loss: spectrogram shape mismatch");

  const auto mask = cues::speech_mask(s_left, s_right, opts.ibm_threshold_db, opts.split_hz);

  ad::Var shat_l_time = dsp::istft_graph(shat_left);
  ad::Var shat_r_time = dsp::istft_graph(shat_right);

  LossGraph g;
  g.snr_term = ad::mul_scalar(
      ad::add(snr_term_graph(s.left, shat_l_time), snr_term_graph(s.right, shat_r_time)), -0.5);
  g.stoi_term = ad::mul_scalar(ad::add(stoi_graph(s.left, shat_l_time, s.sample_rate),
                                       stoi_graph(s.right, shat_r_time, s.sample_rate)),
                               -0.5);
  g.ild_term = ild_term_graph(s_left, s_right, shat_left, shat_right, mask);
  g.ipd_term = ipd_term_graph(s_left, s_right, shat_left, shat_right, mask);

  const LossWeights& w = opts.weights;
  g.total = ad::add(ad::add(ad::mul_scalar(g.snr_term, w.alpha), ad::mul_scalar(g.stoi_term, w.beta)),
                    ad::add(ad::mul_scalar(g.ild_term, w.gamma), ad::mul_scalar(g.ipd_term, w.kappa)));
  return g;
}

}  // namespace silp::loss
