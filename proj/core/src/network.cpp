#include <map>
#include <stdexcept>

#include "model_layout.hpp"
#include "silp/model.hpp"

namespace silp::model {

MaskNet::MaskNet(const ModelConfig& cfg, const dsp::StftConfig& stft) : cfg_(cfg), stft_(stft) {
  cfg_.validate();
  stft_.validate();
  if (cfg_.input_bins != stft_.bins() - 1)
    throw std::invalid_argument("MaskNet: input_bins must be the one-sided bin count minus DC");
}

std::vector<ad::Var> MaskNet::make_leaves(const Checkpoint& ckpt, bool requires_grad) {
  std::vector<ad::Var> leaves;
  leaves.reserve(2 * ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    ad::Shape shape(t.shape.begin(), t.shape.end());
    leaves.push_back(ad::Var::leaf(shape, t.re, requires_grad));
    leaves.push_back(ad::Var::leaf(shape, t.im, requires_grad));
  }
  return leaves;
}

namespace {

struct ParamLookup {
  const std::vector<detail::TensorSpec>& specs;
  std::span<const ad::Var> leaves;
  std::map<std::string, int> index;

  ParamLookup(const std::vector<detail::TensorSpec>& s, std::span<const ad::Var> l)
      : specs(s), leaves(l) {
    if (leaves.size() != 2 * specs.size())
      throw std::invalid_argument("MaskNet: leaf count does not match the parameter layout");
    for (size_t i = 0; i < specs.size(); ++i) index[specs[i].name] = static_cast<int>(i);
  }

  CVar operator()(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::logic_error("MaskNet: missing parameter " + name);
    return {leaves[2 * static_cast<size_t>(it->second)],
            leaves[2 * static_cast<size_t>(it->second) + 1]};
  }
};

CVar spec_rows_constant(const dsp::ComplexSpectrogram& spec, int row0, int rows) {
  std::vector<double> re(static_cast<size_t>(rows) * spec.frames);
  std::vector<double> im(re.size());
  for (int k = 0; k < rows; ++k)
    for (int l = 0; l < spec.frames; ++l) {
      const auto c = spec.at(row0 + k, l);
      re[static_cast<size_t>(k) * spec.frames + l] = c.real();
      im[static_cast<size_t>(k) * spec.frames + l] = c.imag();
    }
  return {ad::Var::constant({rows, spec.frames}, std::move(re)),
          ad::Var::constant({rows, spec.frames}, std::move(im))};
}

}  // namespace

MaskNet::Forward MaskNet::forward(const dsp::ComplexSpectrogram& noisy_left,
                                  const dsp::ComplexSpectrogram& noisy_right,
                                  std::span<const ad::Var> leaves) const {
  if (noisy_left.bins != stft_.bins() || noisy_right.bins != stft_.bins() ||
      noisy_left.frames != noisy_right.frames)
    throw std::invalid_argument("MaskNet: input spectrogram shape mismatch");
  const auto specs = detail::model_layout(cfg_);
  ParamLookup param(specs, leaves);

  const int depth = cfg_.depth();
  const int kf = cfg_.kernel_freq;
  const int sf = cfg_.stride_freq;
  const int pf = detail::freq_pad(kf, sf);
  const int opf = detail::freq_outpad(kf, sf);
  const int frames = noisy_left.frames;
  const int c_last = cfg_.encoder_channels.back();
  const int fprime = cfg_.bottleneck_freq();

  // per-ear encoders; activations kept for the decoder skip paths
  auto encode = [&](const dsp::ComplexSpectrogram& noisy, const char* ear) {
    CVar x = spec_rows_constant(noisy, 1, cfg_.input_bins);
    x.re = ad::reshape(x.re, {1, cfg_.input_bins, frames});
    x.im = ad::reshape(x.im, {1, cfg_.input_bins, frames});
    std::vector<CVar> acts;
    for (int i = 0; i < depth; ++i) {
      const std::string base = std::string("enc.") + ear + std::to_string(i);
      x = complex_conv2d(x, param(base + ".w"), param(base + ".b"), sf, cfg_.stride_time, pf);
      x = complex_batchnorm(x, param(base + ".bn.gamma"), param(base + ".bn.beta"));
      x = complex_prelu(x, param(base + ".prelu"));
      acts.push_back(x);
    }
    return acts;
  };
  auto acts_l = encode(noisy_left, "l");
  auto acts_r = encode(noisy_right, "r");

  // bottleneck: concatenate the ears along channels, sequence over time with
  // the frequency positions as parallel sequences
  CVar bott{ad::concat2(0, acts_l.back().re, acts_r.back().re),
            ad::concat2(0, acts_l.back().im, acts_r.back().im)};  // (2C, F', T)
  CVar seq{ad::permute3(bott.re, {2, 1, 0}), ad::permute3(bott.im, {2, 1, 0})};  // (T, F', 2C)

  const int levels = cfg_.lstm_levels();
  for (int level = 0; level < levels; ++level) {
    const std::string fwd = "lstm" + std::to_string(level) + ".fwd";
    CVar out = complex_lstm(seq, param(fwd + ".w"), param(fwd + ".u"), param(fwd + ".b"));
    if (cfg_.bidirectional) {
      const std::string bwd = "lstm" + std::to_string(level) + ".bwd";
      CVar rev{ad::reverse_axis(seq.re, 0), ad::reverse_axis(seq.im, 0)};
      CVar back = complex_lstm(rev, param(bwd + ".w"), param(bwd + ".u"), param(bwd + ".b"));
      back = {ad::reverse_axis(back.re, 0), ad::reverse_axis(back.im, 0)};
      out = {ad::concat2(2, out.re, back.re), ad::concat2(2, out.im, back.im)};
    }
    seq = out;  // (T, F', 2H or H)
  }

  // per-position complex linear back to 2*C_last channels, split per ear
  const int feat = seq.re.dim(2);
  CVar flat{ad::reshape(seq.re, {frames * fprime, feat}),
            ad::reshape(seq.im, {frames * fprime, feat})};
  CVar proj = complex_linear(flat, param("proj.w"), param("proj.b"));
  CVar grid{ad::permute3(ad::reshape(proj.re, {frames, fprime, 2 * c_last}), {2, 1, 0}),
            ad::permute3(ad::reshape(proj.im, {frames, fprime, 2 * c_last}), {2, 1, 0})};

  auto decode = [&](CVar x, const std::vector<CVar>& acts, const char* ear) {
    for (int j = 0; j < depth; ++j) {
      const std::string base = std::string("dec.") + ear + std::to_string(j);
      const CVar& skip = acts[static_cast<size_t>(depth - 1 - j)];
      x = {ad::add(x.re, skip.re), ad::add(x.im, skip.im)};
      x = complex_conv_transpose2d(x, param(base + ".w"), param(base + ".b"), sf,
                                   cfg_.stride_time, pf, opf);
      if (j < depth - 1) {
        x = complex_batchnorm(x, param(base + ".bn.gamma"), param(base + ".bn.beta"));
        x = complex_prelu(x, param(base + ".prelu"));
      }
    }
    // (1, input_bins, T) -> (input_bins, T)
    return CVar{ad::reshape(x.re, {cfg_.input_bins, frames}),
                ad::reshape(x.im, {cfg_.input_bins, frames})};
  };

  Forward out;
  out.mask_left = decode({ad::slice(grid.re, 0, 0, c_last), ad::slice(grid.im, 0, 0, c_last)},
                         acts_l, "l");
  out.mask_right = decode(
      {ad::slice(grid.re, 0, c_last, c_last), ad::slice(grid.im, 0, c_last, c_last)}, acts_r, "r");
  return out;
}

dsp::SpecVar MaskNet::apply_mask(const CVar& mask, const dsp::ComplexSpectrogram& noisy) {
  const int rows = mask.re.dim(0);
  if (rows != noisy.bins - 1 || mask.re.dim(1) != noisy.frames)
    throw std::invalid_argument("apply_mask: mask shape mismatch");
  CVar y = spec_rows_constant(noisy, 1, rows);
  CVar dc = spec_rows_constant(noisy, 0, 1);
  ad::Var re = ad::sub(ad::mul(mask.re, y.re), ad::mul(mask.im, y.im));
  ad::Var im = ad::add(ad::mul(mask.re, y.im), ad::mul(mask.im, y.re));
  dsp::SpecVar out;
  out.config = noisy.config;
  out.signal_length = noisy.signal_length;
  out.re = ad::concat2(0, dc.re, re);
  out.im = ad::concat2(0, dc.im, im);
  return out;
}

dsp::BinauralWaveform MaskNet::enhance(const Checkpoint& ckpt, const dsp::BinauralWaveform& noisy) {
  noisy.validate();
  MaskNet net(ckpt.model, ckpt.stft);
  auto spec_l = dsp::stft(noisy.left, ckpt.stft);
  auto spec_r = dsp::stft(noisy.right, ckpt.stft);
  auto leaves = make_leaves(ckpt, false);
  auto fwd = net.forward(spec_l, spec_r, leaves);
  dsp::BinauralWaveform out;
  out.sample_rate = noisy.sample_rate;
  out.left = dsp::istft(dsp::spec_values(apply_mask(fwd.mask_left, spec_l)));
  out.right = dsp::istft(dsp::spec_values(apply_mask(fwd.mask_right, spec_r)));
  return out;
}

}  // namespace silp::model
