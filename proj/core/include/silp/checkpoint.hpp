#pragma once

// Named-tensor container for network parameters, optimizer state and the
// configuration they were created under.
//
// File layout: magic "SILPCKPT", a little-endian u32 header length, a JSON
// header (format version, config echo, config hash, tensor directory with
// name/shape/axis labels/offsets), then per tensor the real part followed by
// the imaginary part as little-endian 32-bit floats. Loading and re-saving a
// checkpoint reproduces the file byte for byte.

#include <cstdint>
#include <string>
#include <vector>

#include "silp/dsp.hpp"

namespace silp::model {

struct ModelConfig {
  std::vector<int> encoder_channels{32, 64, 128, 256, 256, 256};
  int kernel_freq = 5;
  int kernel_time = 1;
  int stride_freq = 2;
  int stride_time = 1;
  // Total directional LSTM passes; a bidirectional model stacks
  // lstm_layers / 2 levels of paired forward/backward cells.
  int lstm_layers = 8;
  int lstm_hidden = 128;  // complex units per direction
  bool bidirectional = true;
  int linear_features = 1024;  // per-ear bottleneck features, C_last * F'
  int input_bins = 256;        // DC dropped: bins 1..input_bins feed the net

  int depth() const { return static_cast<int>(encoder_channels.size()); }
  int bottleneck_freq() const;
  int lstm_levels() const { return bidirectional ? lstm_layers / 2 : lstm_layers; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct ParamTensor {
  std::string name;
  std::vector<int> shape;             // of each part
  std::vector<std::string> axes;      // one label per shape entry
  std::vector<double> re, im;

  int64_t numel() const;
};

struct Checkpoint {
  ModelConfig model;
  dsp::StftConfig stft;
  uint64_t seed = 0;
  std::string config_hash;  // FNV-1a of the canonical config serialization
  std::vector<ParamTensor> tensors;

  // Adam state, present when has_optimizer is set: first/second moments per
  // tensor, shaped like the parameters.
  bool has_optimizer = false;
  int64_t optimizer_step = 0;
  std::vector<ParamTensor> opt_m, opt_v;

  int find(const std::string& name) const;  // index or -1
  int64_t parameter_count() const;          // complex parameters (2 reals each)

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

// Fresh parameters with per-part uniform fan-in initialization, seeded.
Checkpoint init_parameters(const ModelConfig& cfg, const dsp::StftConfig& stft, uint64_t seed);

// Canonical config hash shared by checkpoint and config echo.
std::string config_hash(const ModelConfig& cfg, const dsp::StftConfig& stft);

}  // namespace silp::model
