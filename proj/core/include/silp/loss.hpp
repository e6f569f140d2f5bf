#pragma once

// The four-term training objective
//
//   L = alpha * L_SNR + beta * L_STOI + gamma * L_ILD + kappa * L_IPD
//
// with every term differentiable with respect to the enhanced spectrograms.
// SNR and STOI act on time-domain signals synthesized through the istft;
// the cue terms act on masked T-F differences against the clean signal.

#include <span>

#include "silp/cues.hpp"
#include "silp/dsp.hpp"

namespace silp::loss {

using cues::SpeechActivityMask;
using dsp::BinauralWaveform;
using dsp::ComplexSpectrogram;

struct LossWeights {
  double alpha = 1.0;   // SNR term
  double beta = 10.0;   // STOI term
  double gamma = 1.0;   // ILD term
  double kappa = 10.0;  // IPD term
};

struct LossBreakdown {
  double total = 0.0;
  double snr_term = 0.0;   // pre-weight values
  double stoi_term = 0.0;
  double ild_term = 0.0;
  double ipd_term = 0.0;
};

struct LossOptions {
  LossWeights weights;
  double ibm_threshold_db = 20.0;
  double split_hz = 1500.0;
};

// Relative guard inside snr_db: eps = kSnrGuard * ||s||^2 caps the
// perfect-reconstruction SNR at 80 dB.
inline constexpr double kSnrGuard = 1e-8;

// 10 log10(||s||^2 / (||s_hat - s||^2 + eps)).
double snr_db(std::span<const double> s, std::span<const double> s_hat);

// -(SNR_L + SNR_R) / 2
double snr_loss(const BinauralWaveform& s, const BinauralWaveform& s_hat);

// Short-time objective intelligibility of s_hat against clean s, following
// the reference procedure: 10 kHz internal resampling, removal of frames
// more than 40 dB below the loudest clean frame, 15 one-third-octave bands
// from 150 Hz, 384 ms (30-frame) correlation segments and clipping at
// -15 dB SDR. Silent-frame selection uses the clean signal only.
double stoi(std::span<const double> s, std::span<const double> s_hat, double sample_rate);

// -(STOI_L + STOI_R) / 2
double stoi_loss(const BinauralWaveform& s, const BinauralWaveform& s_hat);

// (1/N_ld) sum_{k>K_p,l} M(k,l) |ILD_S - ILD_Shat|; 0 when N_ld = 0.
double ild_loss(const ComplexSpectrogram& s_left, const ComplexSpectrogram& s_right,
                const ComplexSpectrogram& shat_left, const ComplexSpectrogram& shat_right,
                const SpeechActivityMask& mask);

// (1/N_pd) sum_{k<=K_p,l} M(k,l) |wrap(IPD_S - IPD_Shat)|; 0 when N_pd = 0.
double ipd_loss(const ComplexSpectrogram& s_left, const ComplexSpectrogram& s_right,
                const ComplexSpectrogram& shat_left, const ComplexSpectrogram& shat_right,
                const SpeechActivityMask& mask);

// Full objective; s is the clean reference waveform, s_pair its
// spectrograms (the activity mask is derived from them), shat_pair the
// enhanced spectrograms (synthesized to the time domain internally).
LossBreakdown composite_loss(const BinauralWaveform& s, const ComplexSpectrogram& s_left,
                             const ComplexSpectrogram& s_right,
                             const ComplexSpectrogram& shat_left,
                             const ComplexSpectrogram& shat_right, const LossOptions& opts);

// ---- differentiable path -------------------------------------------------

struct LossGraph {
  ad::Var total;
  ad::Var snr_term;
  ad::Var stoi_term;
  ad::Var ild_term;
  ad::Var ipd_term;
  LossBreakdown values() const;
};

ad::Var snr_term_graph(std::span<const double> s, const ad::Var& s_hat);
ad::Var stoi_graph(std::span<const double> s, const ad::Var& s_hat, double sample_rate);
ad::Var ild_term_graph(const ComplexSpectrogram& s_left, const ComplexSpectrogram& s_right,
                       const dsp::SpecVar& shat_left, const dsp::SpecVar& shat_right,
                       const SpeechActivityMask& mask);
ad::Var ipd_term_graph(const ComplexSpectrogram& s_left, const ComplexSpectrogram& s_right,
                       const dsp::SpecVar& shat_left, const dsp::SpecVar& shat_right,
                       const SpeechActivityMask& mask);

LossGraph composite_graph(const BinauralWaveform& s, const ComplexSpectrogram& s_left,
                          const ComplexSpectrogram& s_right, const dsp::SpecVar& shat_left,
                          const dsp::SpecVar& shat_right, const LossOptions& opts);

}  // namespace silp::loss
