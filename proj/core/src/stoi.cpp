#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "fft.hpp"
#include "resample.hpp"
#include "silp/loss.hpp"

// Short-time objective intelligibility. Constants follow the reference
// procedure: analysis at 10 kHz, 256-sample frames with 50 % overlap and
// 512-point FFTs, 15 one-third-octave bands with the lowest center at
// 150 Hz, a 40 dB dynamic range for silent-frame removal, 30-frame
// comparison segments and a -15 dB lower SDR bound for clipping.

namespace silp::loss {

namespace {

constexpr int kFsInternal = 10000;
constexpr int kFrameLen = 256;
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBins = kFft / 2 + 1;
constexpr int kBands = 15;
constexpr double kLowestBand = 150.0;
constexpr double kDynRangeDb = 40.0;
constexpr int kSegLen = 30;
constexpr double kBetaDb = -15.0;
constexpr double kNormGuard = 1e-12;

// hanning(N) without the zero endpoints
std::vector<double> hanning(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 1) / (n + 1));
  return w;
}

// One-third-octave band matrix (15 x kBins) over the 10 kHz bin grid.
std::vector<double> octave_band_matrix() {
  std::vector<double> h(static_cast<size_t>(kBands) * kBins, 0.0);
  std::vector<double> f(static_cast<size_t>(kBins));
  for (int k = 0; k < kBins; ++k)
    f[static_cast<size_t>(k)] = static_cast<double>(k) * kFsInternal / kFft;
  auto nearest = [&](double target) {
    int best = 0;
    double bd = std::abs(f[0] - target);
    for (int k = 1; k < kBins; ++k) {
      const double d = std::abs(f[static_cast<size_t>(k)] - target);
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    return best;
  };
  for (int j = 0; j < kBands; ++j) {
    const double cf = kLowestBand * std::pow(2.0, j / 3.0);
    const int lo = nearest(cf * std::pow(2.0, -1.0 / 6.0));
    const int hi = nearest(cf * std::pow(2.0, 1.0 / 6.0));
    for (int k = lo; k < hi; ++k) h[static_cast<size_t>(j) * kBins + k] = 1.0;
  }
  return h;
}

std::vector<int> stdft_starts(int len) {
  std::vector<int> starts;
  for (int s = 0; s + kFrameLen <= len; s += kHop) starts.push_back(s);
  return starts;
}

// Frame starts kept after removing frames more than kDynRangeDb below the
// loudest clean frame. Selection depends on the clean signal only.
std::vector<int> active_frame_starts(const std::vector<double>& clean10k) {
  const auto w = hanning(kFrameLen);
  const auto starts = stdft_starts(static_cast<int>(clean10k.size()));
  std::vector<double> energy_db(starts.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < starts.size(); ++i) {
    double e = 0.0;
    for (int n = 0; n < kFrameLen; ++n) {
      const double v = clean10k[static_cast<size_t>(starts[i] + n)] * w[static_cast<size_t>(n)];
      e += v * v;
    }
    energy_db[i] = 20.0 * std::log10(std::sqrt(e / kFrameLen) + 1e-20);
    peak = std::max(peak, energy_db[i]);
  }
  std::vector<int> kept;
  for (size_t i = 0; i < starts.size(); ++i)
    if (energy_db[i] > peak - kDynRangeDb) kept.push_back(starts[i]);
  return kept;
}

// Overlap-add of windowed frames at the compacted positions.
std::vector<double> rebuild(const std::vector<double>& x, const std::vector<int>& kept) {
  const auto w = hanning(kFrameLen);
  const int out_len = static_cast<int>(kept.size() - 1) * kHop + kFrameLen;
  std::vector<double> out(static_cast<size_t>(out_len), 0.0);
  for (size_t i = 0; i < kept.size(); ++i)
    for (int n = 0; n < kFrameLen; ++n)
      out[i * kHop + static_cast<size_t>(n)] +=
          x[static_cast<size_t>(kept[i] + n)] * w[static_cast<size_t>(n)];
  return out;
}

// Band envelopes (kBands, M) of a plain signal.
std::vector<double> envelopes_plain(const std::vector<double>& sig, int* m_out) {
  const auto starts = stdft_starts(static_cast<int>(sig.size()));
  const int m = static_cast<int>(starts.size());
  *m_out = m;
  const auto w = hanning(kFrameLen);
  const auto obm = octave_band_matrix();
  std::vector<double> power(static_cast<size_t>(m) * kBins);
  std::vector<double> frame(kFrameLen), re(kBins), im(kBins);
  for (int i = 0; i < m; ++i) {
    for (int n = 0; n < kFrameLen; ++n)
      frame[static_cast<size_t>(n)] =
          sig[static_cast<size_t>(starts[static_cast<size_t>(i)] + n)] * w[static_cast<size_t>(n)];
    fft::rfft(frame.data(), kFrameLen, kFft, re.data(), im.data());
    for (int k = 0; k < kBins; ++k)
      power[static_cast<size_t>(i) * kBins + k] =
          re[static_cast<size_t>(k)] * re[static_cast<size_t>(k)] +
          im[static_cast<size_t>(k)] * im[static_cast<size_t>(k)];
  }
  std::vector<double> env(static_cast<size_t>(kBands) * m);
  for (int j = 0; j < kBands; ++j)
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int k = 0; k < kBins; ++k)
        acc += obm[static_cast<size_t>(j) * kBins + k] * power[static_cast<size_t>(i) * kBins + k];
      env[static_cast<size_t>(j) * m + i] = std::sqrt(acc + kNormGuard);
    }
  return env;
}

// Band envelopes (kBands, M) of a graph signal.
ad::Var envelopes_graph(const ad::Var& sig) {
  const auto starts = stdft_starts(static_cast<int>(sig.numel()));
  const int m = static_cast<int>(starts.size());
  ad::Var fr = ad::gather_frames(sig, starts, kFrameLen);
  fr = ad::mul_rowvec(fr, hanning(kFrameLen));
  ad::Var packed = ad::rfft_rows(fr, kFft);  // (m, 2*kBins)
  ad::Var re = ad::slice(packed, 1, 0, kBins);
  ad::Var im = ad::slice(packed, 1, kBins, kBins);
  ad::Var power = ad::add(ad::square(re), ad::square(im));  // (m, kBins)
  ad::Var power_t =
      ad::reshape(ad::permute3(ad::reshape(power, {m, kBins, 1}), {1, 0, 2}), {kBins, m});
  ad::Var obm = ad::Var::constant({kBands, kBins}, octave_band_matrix());
  return ad::sqrt_guarded(ad::matmul(obm, power_t), kNormGuard);  // (kBands, m)
}

}  // namespace

ad::Var stoi_graph(std::span<const double> s, const ad::Var& s_hat, double sample_rate) {
  if (static_cast<int64_t>(s.size()) != s_hat.numel())
    throw std::invalid_argument("stoi: length mismatch");
  if (sample_rate <= 0) throw std::invalid_argument("stoi: bad sample rate");

  // 1. resample both signals to the internal rate
  std::vector<double> clean10k;
  ad::Var deg10k;
  if (std::llround(sample_rate) == kFsInternal) {
    clean10k.assign(s.begin(), s.end());
    deg10k = s_hat;
  } else {
    const auto kernel = resample::design(sample_rate, kFsInternal);
    clean10k = resample::apply(s, kernel);
    deg10k = resample::apply_graph(s_hat, kernel);
  }

  // 2. drop silent frames (selection from the clean signal only)
  const auto kept = active_frame_starts(clean10k);
  if (static_cast<int>(kept.size()) < kSegLen)
    throw std::invalid_argument("stoi: too few active frames (input too short or silent)");
  const auto clean_sil = rebuild(clean10k, kept);
  const int out_len = static_cast<int>(clean_sil.size());
  ad::Var deg_fr = ad::gather_frames(deg10k, kept, kFrameLen);
  deg_fr = ad::mul_rowvec(deg_fr, hanning(kFrameLen));
  ad::Var deg_sil = ad::overlap_add(deg_fr, kHop, out_len);

  // 3. one-third-octave band envelopes
  int m = 0;
  const auto env_clean = envelopes_plain(clean_sil, &m);
  ad::Var env_deg = envelopes_graph(deg_sil);
  if (env_deg.dim(1) != m) throw std::logic_error("stoi: envelope frame mismatch");

  // 4. segment correlations with normalization + clipping
  const double clip_gain = 1.0 + std::pow(10.0, -kBetaDb / 20.0);
  ad::Var acc = ad::Var::scalar(0.0);
  int n_segs = 0;
  for (int seg_end = kSegLen; seg_end <= m; ++seg_end) {
    const int s0 = seg_end - kSegLen;
    // clean-side constants for this segment
    std::vector<double> xseg(static_cast<size_t>(kBands) * kSegLen);
    std::vector<double> xnorm(kBands), xclip(static_cast<size_t>(kBands) * kSegLen);
    std::vector<double> xcentered(static_cast<size_t>(kBands) * kSegLen);
    for (int j = 0; j < kBands; ++j) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < kSegLen; ++i) {
        const double v = env_clean[static_cast<size_t>(j) * m + s0 + i];
        xseg[static_cast<size_t>(j) * kSegLen + i] = v;
        sum += v;
        sq += v * v;
      }
      xnorm[static_cast<size_t>(j)] = std::sqrt(sq);
      const double mu = sum / kSegLen;
      double cnorm = 0.0;
      for (int i = 0; i < kSegLen; ++i) {
        const double c = xseg[static_cast<size_t>(j) * kSegLen + i] - mu;
        xcentered[static_cast<size_t>(j) * kSegLen + i] = c;
        cnorm += c * c;
      }
      cnorm = std::sqrt(cnorm) + kNormGuard;
      for (int i = 0; i < kSegLen; ++i) {
        xcentered[static_cast<size_t>(j) * kSegLen + i] /= cnorm;
        xclip[static_cast<size_t>(j) * kSegLen + i] =
            xseg[static_cast<size_t>(j) * kSegLen + i] * clip_gain;
      }
    }
    ad::Var y = ad::slice(env_deg, 1, s0, kSegLen);  // (kBands, kSegLen)
    ad::Var ynorm = ad::sqrt_guarded(ad::sum_lastdim(ad::square(y)), kNormGuard);
    ad::Var alpha = ad::div(ad::Var::constant({kBands, 1}, xnorm), ynorm);
    y = ad::mul(y, ad::tile_lastdim(alpha, kSegLen));
    y = ad::minimum(y, ad::Var::constant({kBands, kSegLen}, xclip));
    ad::Var mu = ad::mul_scalar(ad::sum_lastdim(y), 1.0 / kSegLen);
    ad::Var yc = ad::sub(y, ad::tile_lastdim(mu, kSegLen));
    ad::Var ycn = ad::sqrt_guarded(ad::sum_lastdim(ad::square(yc)), kNormGuard);
    yc = ad::div(yc, ad::tile_lastdim(ycn, kSegLen));
    acc = ad::add(acc, ad::weighted_sum(yc, xcentered));
    ++n_segs;
  }
  return ad::mul_scalar(acc, 1.0 / (static_cast<double>(kBands) * n_segs));
}

double stoi(std::span<const double> s, std::span<const double> s_hat, double sample_rate) {
  ad::Var deg = ad::Var::constant({static_cast<int>(s_hat.size())},
                                  std::vector<double>(s_hat.begin(), s_hat.end()));
  return stoi_graph(s, deg, sample_rate).item();
}

double stoi_loss(const BinauralWaveform& s, const BinauralWaveform& s_hat) {
  s.validate();
  s_hat.validate();
  if (s.samples() != s_hat.samples()) throw std::invalid_argument("stoi_loss: length mismatch");
  const double l = stoi(s.left, s_hat.left, s.sample_rate);
  const double r = stoi(s.right, s_hat.right, s.sample_rate);
  return -(l + r) / 2.0;
}

}  // namespace silp::loss
