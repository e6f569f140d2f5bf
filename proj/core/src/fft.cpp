#include "fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace silp::fft {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void transform(std::complex<double>* a, int n, int sign) {
  if (!is_pow2(n)) throw std::invalid_argument("fft: size must be a power of two");
  // bit reversal
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

void rfft(const double* x, int n_real, int nfft, double* re, double* im) {
  std::vector<std::complex<double>> buf(static_cast<size_t>(nfft), {0.0, 0.0});
  for (int n = 0; n < n_real; ++n) buf[static_cast<size_t>(n)] = x[n];
  transform(buf.data(), nfft, -1);
  const int bins = nfft / 2 + 1;
  for (int k = 0; k < bins; ++k) {
    re[k] = buf[static_cast<size_t>(k)].real();
    im[k] = buf[static_cast<size_t>(k)].imag();
  }
}

void irfft(const double* re, const double* im, int nfft, double* out) {
  const int bins = nfft / 2 + 1;
  std::vector<std::complex<double>> buf(static_cast<size_t>(nfft));
  buf[0] = {re[0], 0.0};
  buf[static_cast<size_t>(nfft / 2)] = {re[nfft / 2], 0.0};
  for (int k = 1; k < bins - 1; ++k) {
    buf[static_cast<size_t>(k)] = {re[k], im[k]};
    buf[static_cast<size_t>(nfft - k)] = {re[k], -im[k]};
  }
  transform(buf.data(), nfft, +1);
  const double scale = 1.0 / nfft;
  for (int n = 0; n < nfft; ++n) out[n] = buf[static_cast<size_t>(n)].real() * scale;
}

void rfft_adjoint(const double* gre, const double* gim, int nfft, int n_real, double* gx) {
  const int bins = nfft / 2 + 1;
  std::vector<std::complex<double>> buf(static_cast<size_t>(nfft), {0.0, 0.0});
  for (int k = 0; k < bins; ++k) buf[static_cast<size_t>(k)] = {gre[k], gim[k]};
  transform(buf.data(), nfft, +1);  // unscaled inverse-direction sum
  for (int n = 0; n < n_real; ++n) gx[n] = buf[static_cast<size_t>(n)].real();
}

void irfft_adjoint(const double* g, int nfft, double* gre, double* gim) {
  const int bins = nfft / 2 + 1;
  std::vector<double> re(static_cast<size_t>(bins)), im(static_cast<size_t>(bins));
  rfft(g, nfft, nfft, re.data(), im.data());
  const double s = 1.0 / nfft;
  for (int k = 0; k < bins; ++k) {
    const double ck = (k == 0 || k == nfft / 2) ? 1.0 : 2.0;
    gre[k] = ck * s * re[k];
    gim[k] = (k == 0 || k == nfft / 2) ? 0.0 : ck * s * im[k];
  }
}

}  // namespace silp::fft
