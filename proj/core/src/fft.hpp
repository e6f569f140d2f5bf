#pragma once

// Internal radix-2 FFT kernels. Power-of-two sizes only; every transform
// config in this library validates that up front.

#include <complex>
#include <vector>

namespace silp::fft {

bool is_pow2(int n);

// In-place complex transform, unscaled. sign = -1 forward, +1 inverse.
void transform(std::complex<double>* a, int n, int sign);

// Real input of length n_real (zero-padded to nfft) -> one-sided bins
// re/im[k], k = 0..nfft/2. Forward convention X[k] = sum x[n] e^{-j2pi kn/N}.
void rfft(const double* x, int n_real, int nfft, double* re, double* im);

// One-sided bins -> real frame of length nfft via the hermitian extension
// (imaginary parts of DC and Nyquist do not contribute), scaled by 1/nfft.
void irfft(const double* re, const double* im, int nfft, double* out);

// Adjoint of rfft: g[n] = Re sum_{k<K} G[k] e^{+j2pi kn/N}, n < n_real.
void rfft_adjoint(const double* gre, const double* gim, int nfft, int n_real, double* gx);

// Adjoint of irfft: G[k] = (c_k / nfft) * RFFT(g)[k], c_k = 2 except at
// DC/Nyquist where c_k = 1 and the imaginary part is zero.
void irfft_adjoint(const double* g, int nfft, double* gre, double* gim);

}  // namespace silp::fft
