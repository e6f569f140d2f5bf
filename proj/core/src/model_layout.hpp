#pragma once

// Canonical parameter layout shared by checkpoint initialization and the
// network forward pass. Order is the contract: leaves, optimizer moments
// and payload serialization all follow it.

#include <string>
#include <vector>

#include "silp/checkpoint.hpp"

namespace silp::model::detail {

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  std::vector<std::string> axes;
  double init_scale = 0.0;  // uniform(-s, s) when > 0
  double const_re = 0.0;    // used when init_scale == 0
  double const_im = 0.0;
};

std::vector<TensorSpec> model_layout(const ModelConfig& cfg);

// Frequency padding giving exact stride-sf downsampling for kernel kf, and
// the transposed-side output padding restoring the extent.
inline int freq_pad(int kf, int sf) { return (kf - sf + 1) / 2; }
inline int freq_outpad(int kf, int sf) { return sf + 2 * freq_pad(kf, sf) - kf; }

}  // namespace silp::model::detail
