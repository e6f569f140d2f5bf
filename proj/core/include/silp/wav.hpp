#pragma once

// Minimal RIFF/WAVE reader and writer: PCM 16-bit integer and IEEE 32-bit
// float, mono or stereo. Conversion to/from int16 rounds to nearest with
// clamping so file contents are deterministic.

#include <cstdint>
#include <string>
#include <vector>

namespace silp::wav {

enum class SampleFormat : uint16_t { Int16 = 1, Float32 = 3 };

struct WavData {
  std::vector<std::vector<double>> channels;  // [channel][sample], -1..1 nominal
  double sample_rate = 0.0;
  SampleFormat format = SampleFormat::Int16;

  size_t frames() const { return channels.empty() ? 0 : channels[0].size(); }
};

WavData read(const std::string& path);
void write(const std::string& path, const WavData& data);

// Stereo helpers used throughout the dataset pipeline.
WavData make_stereo(const std::vector<double>& left, const std::vector<double>& right,
                    double sample_rate, SampleFormat fmt = SampleFormat::Float32);

}  // namespace silp::wav
