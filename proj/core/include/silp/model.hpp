#pragma once

// The binaural mask-estimation network: per-ear complex convolutional
// encoders, a shared complex LSTM bottleneck over the concatenated ear
// encodings, per-ear decoders with skip connections, and one complex ratio
// mask per ear. Plus the CRM algebra from the signal model.

#include <span>

#include "silp/checkpoint.hpp"
#include "silp/dsp.hpp"

namespace silp::model {

// A complex tensor in the graph: equally shaped real/imaginary parts.
struct CVar {
  ad::Var re;
  ad::Var im;
};

// ---- complex layer primitives (exposed for tests and gradcheck) ----------
// (W_r*x_r - W_i*x_i) + j(W_r*x_i + W_i*x_r), four real convolutions.
CVar complex_conv2d(const CVar& x, const CVar& w, const CVar& bias, int sf, int st, int pf);
CVar complex_conv_transpose2d(const CVar& x, const CVar& w, const CVar& bias, int sf, int st,
                              int pf, int opf);
// Complex recurrence from two real LSTM passes per part:
// out = (F_r(x_r) - F_i(x_i)) + j(F_r(x_i) + F_i(x_r)).
// x: (T, B, D); returns (T, B, H). Bidirectional stacking lives in MaskNet.
CVar complex_lstm(const CVar& x, const CVar& w, const CVar& u, const CVar& b);
// Per-part matmul on the last axis: x (n, D) * w (D, M) + bias (M).
CVar complex_linear(const CVar& x, const CVar& w, const CVar& bias);
// Independent per-part normalization over (freq, time) per channel with
// per-part affine parameters. Stateless.
CVar complex_batchnorm(const CVar& x, const CVar& gamma, const CVar& beta, double eps = 1e-5);
// Independent real PReLU per part with separate learnable slopes.
CVar complex_prelu(const CVar& x, const CVar& slope);

// ---- CRM algebra ----------------------------------------------------------
inline constexpr double kCrmEps = 1e-12;

// S_hat = M . Y elementwise complex product.
dsp::ComplexSpectrogram crm_apply(const dsp::ComplexSpectrogram& mask,
                                  const dsp::ComplexSpectrogram& noisy);
// M = S_hat / Y with |Y|^2 guarded by kCrmEps.
dsp::ComplexSpectrogram crm_compute(const dsp::ComplexSpectrogram& s_hat,
                                    const dsp::ComplexSpectrogram& noisy);

// ---- network ---------------------------------------------------------------
class MaskNet {
 public:
  MaskNet(const ModelConfig& cfg, const dsp::StftConfig& stft);

  // Graph leaves for every parameter part, in checkpoint tensor order:
  // leaves[2*i] is tensors[i].re, leaves[2*i+1] the imaginary part.
  static std::vector<ad::Var> make_leaves(const Checkpoint& ckpt, bool requires_grad);

  struct Forward {
    CVar mask_left;   // (input_bins, frames)
    CVar mask_right;
  };

  // Builds the forward graph from noisy per-ear spectrograms (full one-sided
  // bins; the DC row is dropped internally) and parameter leaves.
  Forward forward(const dsp::ComplexSpectrogram& noisy_left,
                  const dsp::ComplexSpectrogram& noisy_right,
                  std::span<const ad::Var> leaves) const;

  // Applies a per-ear mask to the full noisy spectrogram: the DC row passes
  // through unmodified, rows 1..input_bins are multiplied by the mask.
  static dsp::SpecVar apply_mask(const CVar& mask, const dsp::ComplexSpectrogram& noisy);

  // Convenience for inference: forward + apply + synthesize both ears.
  static dsp::BinauralWaveform enhance(const Checkpoint& ckpt, const dsp::BinauralWaveform& noisy);

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  dsp::StftConfig stft_;
};

}  // namespace silp::model
