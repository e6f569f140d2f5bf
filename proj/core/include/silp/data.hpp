#pragma once

// Binaural dataset synthesis: spherical-head HRIRs, spatialization,
// isotropic noise fields from 5 degree-spaced uncorrelated sources,
// speech-shaped noise, SNR-controlled mixing and manifest management.

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "silp/dsp.hpp"

namespace silp::data {

struct Hrir {
  double azimuth_deg = 0.0;  // -180..180, 0 = front, positive = right
  std::vector<double> left;
  std::vector<double> right;
  double sample_rate = 16000.0;
};

// Spherical-head model: Woodworth interaural delay (radius 0.0875 m,
// c = 343 m/s) realized as fractional delays, plus a first-order head-shadow
// lowpass and a small broadband attenuation on the far ear.
// synth_hrir(-az) equals synth_hrir(az) with the channels swapped.
Hrir synth_hrir(double azimuth_deg, double sample_rate);

class HrirSet {
 public:
  static HrirSet synthetic(double sample_rate, double spacing_deg = 5.0);
  // Directory of 2-channel WAVs named azi_<deg>.wav.
  static HrirSet load(const std::string& dir);
  void save(const std::string& dir) const;

  const Hrir& nearest(double azimuth_deg) const;  // circular distance
  size_t size() const { return entries_.size(); }
  const std::vector<Hrir>& entries() const { return entries_; }

 private:
  std::vector<Hrir> entries_;
};

// Per-ear full convolution truncated to the input length.
dsp::BinauralWaveform spatialize(std::span<const double> mono, const Hrir& h);

// Deterministic speech-like utterance: voiced harmonic syllables with pitch
// drift, two formant resonances, syllabic amplitude modulation, unvoiced
// fricative bursts and short pauses. RMS is normalized to `level`.
std::vector<double> synth_speech(uint64_t seed, double duration_s, double sample_rate,
                                 double level = 0.06);

class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual std::vector<double> draw(int n, std::mt19937_64& rng) const = 0;
  virtual std::string name() const = 0;
};

// White Gaussian noise.
std::unique_ptr<NoiseSource> make_wgn();
// Speech-shaped noise: white noise through a 512-tap FIR fitted to the
// average long-term magnitude spectrum of the reference speech (>= 60 s).
std::unique_ptr<NoiseSource> make_ssn(std::span<const double> reference_speech,
                                      double sample_rate);
// Random crops of a mono WAV file.
std::unique_ptr<NoiseSource> make_file_noise(const std::string& path, double sample_rate);
// Registry used by the CLI: "wgn", "ssn", "file:<path>". SSN fits its filter
// to 60 s of the bundled synthetic speech when no reference is supplied.
std::unique_ptr<NoiseSource> make_noise_source(const std::string& spec, double sample_rate);

// Sum over 360/spacing azimuths of independently drawn noise convolved with
// that azimuth's HRIR, normalized so the mean broadband power of the two
// ears is one.
dsp::BinauralWaveform isotropic_noise(double duration_s, const NoiseSource& source,
                                      const HrirSet& hrirs, double spacing_deg, uint64_t seed);

struct MixResult {
  dsp::BinauralWaveform mixture;  // s + scaled noise
  double noise_scale = 0.0;
  double achieved_snr_db = 0.0;  // (SNR_L + SNR_R) / 2 of the result
};

// Scales the noise by one common factor so the mean of the per-channel
// broadband SNRs hits the target exactly (closed form).
MixResult mix_at_snr(const dsp::BinauralWaveform& speech, const dsp::BinauralWaveform& noise,
                     double target_mean_snr_db);

// Mean of the two per-channel broadband SNRs, in dB.
double mean_snr_db(const dsp::BinauralWaveform& speech, const dsp::BinauralWaveform& noise);

struct ManifestEntry {
  std::string id;
  std::string clean_path;
  std::string noisy_path;
  double azimuth_deg = 0.0;
  double distance_m = 0.8;
  std::string noise_type;
  double target_snr_db = 0.0;
  std::string split;
  uint64_t seed = 0;
};

struct BuildConfig {
  std::string out_dir;
  int count = 200;
  double duration_s = 0.5;
  double sample_rate = 16000.0;
  std::vector<std::string> noise_types{"wgn", "ssn"};
  double snr_min_db = -7.0;
  double snr_max_db = 16.0;
  double azimuth_min_deg = -90.0;
  double azimuth_max_deg = 90.0;
  std::vector<std::pair<std::string, double>> splits{{"train", 0.85}, {"val", 0.15}};
  double hrir_spacing_deg = 5.0;
  std::string speech_dir;  // optional user WAV corpus; empty = synthetic
  std::string hrir_dir;    // optional measured HRIR set; empty = synthetic
  uint64_t seed = 0;
};

struct DatasetManifest {
  BuildConfig config;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& tag) const;
  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

// Synthesizes the corpus: per utterance a random frontal azimuth, distance,
// noise type and target SNR, written as float32 stereo WAV pairs plus the
// manifest. Byte-reproducible from the seed.
DatasetManifest build_dataset(const BuildConfig& cfg);

// Derives the per-entry RNG stream from (seed, index) so synthesis order
// never affects output.
uint64_t entry_seed(uint64_t seed, uint64_t index);

}  // namespace silp::data
