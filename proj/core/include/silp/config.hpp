#pragma once

// JSON configuration loading with strict schema validation: unknown keys
// are rejected, violations are reported exhaustively, defaults are applied
// for anything unspecified, and the fully resolved configuration can be
// echoed back out for reproducibility.

#include <string>
#include <vector>

#include "silp/engine.hpp"

namespace silp::config {

struct FullConfig {
  dsp::StftConfig stft;
  model::ModelConfig model;
  engine::TrainConfig train;  // includes the loss options and weights
  uint64_t seed = 0;
};

FullConfig defaults();

// Loads a JSON config file (empty path = pure defaults) and applies
// key=value overrides with dotted paths, e.g. "loss.beta=5" or
// "train.learning_rate=0.002". Throws std::invalid_argument listing every
// schema violation.
FullConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Fully resolved configuration as a JSON string (the echo format).
std::string echo(const FullConfig& cfg);

}  // namespace silp::config
