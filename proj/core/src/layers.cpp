#include "silp/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace silp::model {

CVar complex_conv2d(const CVar& x, const CVar& w, const CVar& bias, int sf, int st, int pf) {
  ad::Var rr = ad::conv2d(x.re, w.re, sf, st, pf);
  ad::Var ii = ad::conv2d(x.im, w.im, sf, st, pf);
  ad::Var ri = ad::conv2d(x.re, w.im, sf, st, pf);
  ad::Var ir = ad::conv2d(x.im, w.re, sf, st, pf);
  CVar out{ad::sub(rr, ii), ad::add(ri, ir)};
  out.re = ad::add_channel_bias(out.re, bias.re);
  out.im = ad::add_channel_bias(out.im, bias.im);
  return out;
}

CVar complex_conv_transpose2d(const CVar& x, const CVar& w, const CVar& bias, int sf, int st,
                              int pf, int opf) {
  ad::Var rr = ad::conv_transpose2d(x.re, w.re, sf, st, pf, opf);
  ad::Var ii = ad::conv_transpose2d(x.im, w.im, sf, st, pf, opf);
  ad::Var ri = ad::conv_transpose2d(x.re, w.im, sf, st, pf, opf);
  ad::Var ir = ad::conv_transpose2d(x.im, w.re, sf, st, pf, opf);
  CVar out{ad::sub(rr, ii), ad::add(ri, ir)};
  out.re = ad::add_channel_bias(out.re, bias.re);
  out.im = ad::add_channel_bias(out.im, bias.im);
  return out;
}

CVar complex_lstm(const CVar& x, const CVar& w, const CVar& u, const CVar& b) {
  ad::Var f_r_xr = ad::lstm_seq(x.re, w.re, u.re, b.re);
  ad::Var f_i_xi = ad::lstm_seq(x.im, w.im, u.im, b.im);
  ad::Var f_r_xi = ad::lstm_seq(x.im, w.re, u.re, b.re);
  ad::Var f_i_xr = ad::lstm_seq(x.re, w.im, u.im, b.im);
  return {ad::sub(f_r_xr, f_i_xi), ad::add(f_r_xi, f_i_xr)};
}

CVar complex_linear(const CVar& x, const CVar& w, const CVar& bias) {
  ad::Var rr = ad::matmul(x.re, w.re);
  ad::Var ii = ad::matmul(x.im, w.im);
  ad::Var ri = ad::matmul(x.re, w.im);
  ad::Var ir = ad::matmul(x.im, w.re);
  const int n = rr.dim(0);
  const int m = rr.dim(1);
  // bias broadcast down the rows as ones-column x bias-row
  ad::Var ones = ad::Var::constant({n, 1}, std::vector<double>(static_cast<size_t>(n), 1.0));
  ad::Var re = ad::add(ad::sub(rr, ii), ad::matmul(ones, ad::reshape(bias.re, {1, m})));
  ad::Var im = ad::add(ad::add(ri, ir), ad::matmul(ones, ad::reshape(bias.im, {1, m})));
  return {re, im};
}

CVar complex_batchnorm(const CVar& x, const CVar& gamma, const CVar& beta, double eps) {
  return {ad::instance_norm_affine(x.re, gamma.re, beta.re, eps),
          ad::instance_norm_affine(x.im, gamma.im, beta.im, eps)};
}

CVar complex_prelu(const CVar& x, const CVar& slope) {
  return {ad::prelu(x.re, slope.re), ad::prelu(x.im, slope.im)};
}

dsp::ComplexSpectrogram crm_apply(const dsp::ComplexSpectrogram& mask,
                                  const dsp::ComplexSpectrogram& noisy) {
  if (mask.bins != noisy.bins || mask.frames != noisy.frames)
    throw std::invalid_argument("crm_apply: shape mismatch");
  dsp::ComplexSpectrogram out = noisy;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = mask.data[i] * noisy.data[i];
  return out;
}

dsp::ComplexSpectrogram crm_compute(const dsp::ComplexSpectrogram& s_hat,
                                    const dsp::ComplexSpectrogram& noisy) {
  if (s_hat.bins != noisy.bins || s_hat.frames != noisy.frames)
    throw std::invalid_argument("crm_compute: shape mismatch");
  dsp::ComplexSpectrogram out = noisy;
  // |Y|^2 floored rather than shifted, so apply(compute(S,Y),Y) = S exactly
  // whenever |Y|^2 >= kCrmEps
  for (size_t i = 0; i < out.data.size(); ++i) {
    const auto y = noisy.data[i];
    const auto s = s_hat.data[i];
    const double denom =
        std::max(y.real() * y.real() + y.imag() * y.imag(), kCrmEps);
    out.data[i] = {(y.real() * s.real() + y.imag() * s.imag()) / denom,
                   (y.real() * s.imag() - y.imag() * s.real()) / denom};
  }
  return out;
}

}  // namespace silp::model
