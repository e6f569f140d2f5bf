#pragma once

// Rational polyphase resampler (Kaiser-windowed sinc, beta = 5, ten
// zero-crossings per side). Linear in the input, with an exact adjoint for
// the differentiable path.

#include <span>
#include <vector>

#include "silp/autodiff.hpp"

namespace silp::resample {

struct Kernel {
  int up = 1;    // L
  int down = 1;  // M
  int delay = 0; // group delay of the prototype filter, in upsampled samples
  std::vector<double> taps;

  int output_length(int n_in) const;
};

Kernel design(double from_rate, double to_rate);

std::vector<double> apply(std::span<const double> x, const Kernel& k);

ad::Var apply_graph(const ad::Var& x, const Kernel& k);

}  // namespace silp::resample
