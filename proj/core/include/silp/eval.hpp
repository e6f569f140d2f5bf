#pragma once

// Objective evaluation: frequency-weighted segmental SNR improvement,
// masked interaural cue errors, per-ear intelligibility, dataset-level
// aggregation and report emission.

#include <optional>
#include <string>
#include <vector>

#include "silp/checkpoint.hpp"
#include "silp/data.hpp"
#include "silp/dsp.hpp"

namespace silp::eval {

// Frequency-weighted segmental SNR of x against the clean reference s.
// Constants fixed by this implementation: 25 mel-spaced triangular bands
// over 50 Hz..8 kHz, 25 ms frames with 50 % overlap (512-point FFT,
// periodic Hann), per-band SNR from the complex spectral difference clamped
// to [-10, 35] dB, band weights W_j = |S_j|^0.2, frames more than 40 dB
// below the loudest reference frame excluded.
double fw_segsnr(std::span<const double> s, std::span<const double> x, double sample_rate);

struct PairRecord {
  std::string id;
  double input_snr_db = 0.0;   // measured mean broadband SNR of the mixture
  double snr_bucket_db = 0.0;  // manifest target, used for grouping
  double dfw_left_db = 0.0;    // fwSegSNR(enhanced) - fwSegSNR(noisy), left
  double dfw_right_db = 0.0;
  double ild_error_db = 0.0;
  double ipd_error_rad = 0.0;
  double stoi_left = 0.0;
  double stoi_right = 0.0;
};

struct EvalOptions {
  double ibm_threshold_db = 20.0;
  double split_hz = 1500.0;
  bool identity_mask = false;  // bypass the network, mask = 1 everywhere
};

// Evaluates one clean/noisy/enhanced triple: fwSegSNR improvement per ear,
// cue errors of the enhanced signal against the clean-signal activity mask,
// per-ear STOI.
PairRecord evaluate_pair(const dsp::BinauralWaveform& clean, const dsp::BinauralWaveform& noisy,
                         const dsp::BinauralWaveform& enhanced, const dsp::StftConfig& cfg,
                         const EvalOptions& opts = {});

struct Aggregate {
  double snr_bucket_db = 0.0;
  int count = 0;
  double dfw_db = 0.0;        // mean over ears and entries
  double ild_error_db = 0.0;
  double ipd_error_rad = 0.0;
  double stoi = 0.0;          // mean of per-ear STOI (stands in for the
                              // binaural metric; not paper-comparable)
};

struct EvalReport {
  std::vector<PairRecord> records;
  std::vector<Aggregate> aggregates;  // grouped by rounded target SNR
};

EvalReport evaluate_dataset(const data::DatasetManifest& manifest, const model::Checkpoint& ckpt,
                            const EvalOptions& opts = {},
                            const std::string& split = std::string());

// Recomputes the SNR-bucket aggregates from the records.
std::vector<Aggregate> aggregate(const std::vector<PairRecord>& records);

// CSV + JSON tables and SVG line plots (delta fwSegSNR, ILD error, IPD
// error, mean STOI vs input SNR bucket) under the given directory.
void emit_report(const EvalReport& report, const std::string& dir);

// Re-reads an emitted report.json.
EvalReport load_report(const std::string& path);

}  // namespace silp::eval
