#pragma once

// Interaural cue maps and the binary speech-activity mask that restricts
// cue errors to speech-active T-F tiles.

#include "silp/dsp.hpp"

namespace silp::cues {

using dsp::ComplexSpectrogram;
using dsp::Grid;

// Magnitude guard for ILD / IPD so both maps are total functions.
inline constexpr double kMagnitudeGuard = 1e-8;

struct CueMaps {
  Grid ild;  // dB
  Grid ipd;  // radians in (-pi, pi]
};

// 20 log10((|S_L| + eps) / (|S_R| + eps)) per tile.
Grid ild_map(const ComplexSpectrogram& left, const ComplexSpectrogram& right);

// Principal argument of S_L * conj(S_R) per tile, in (-pi, pi].
Grid ipd_map(const ComplexSpectrogram& left, const ComplexSpectrogram& right);

CueMaps cue_maps(const ComplexSpectrogram& left, const ComplexSpectrogram& right);

// Binary mask: tile (k,l) is speech-active iff its energy is within
// threshold_db of that bin's maximum over time. Bins whose maximum sits at
// the energy floor (all-silent) are forced to zero.
Grid ibm_single(const ComplexSpectrogram& spec, double threshold_db);

struct SpeechActivityMask {
  Grid mask;                 // values in {0, 1}
  double threshold_db = 20;  // the selection threshold used for the inputs
  int split_bin = 0;         // K_p = round(f_p * N_fft / f_s)
  long n_ld = 0;             // selected tiles with k > split_bin
  long n_pd = 0;             // selected tiles with k <= split_bin
};

// Hadamard product of the per-ear masks plus the low/high frequency split
// at f_p (Hz) used by the phase/level cue losses.
SpeechActivityMask ibm_combine(const Grid& left, const Grid& right, const dsp::StftConfig& cfg,
                               double split_hz, double threshold_db = 20.0);

// Convenience: per-ear IBMs of the clean spectrograms, combined.
SpeechActivityMask speech_mask(const ComplexSpectrogram& left, const ComplexSpectrogram& right,
                               double threshold_db, double split_hz);

// Wrap an angle difference to (-pi, pi].
double wrap_angle(double a);

}  // namespace silp::cues
