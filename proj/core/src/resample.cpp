#include "resample.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace silp::resample {

namespace {

double bessel_i0(double x) {
  // power series; converges quickly for the beta values used here
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 32; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

int Kernel::output_length(int n_in) const {
  return static_cast<int>((static_cast<long long>(n_in) * up + down - 1) / down);
}

Kernel design(double from_rate, double to_rate) {
  const long long fr = std::llround(from_rate);
  const long long to = std::llround(to_rate);
  if (fr <= 0 || to <= 0) throw std::invalid_argument("resample: rates must be positive");
  const long long g = std::gcd(fr, to);
  Kernel k;
  k.up = static_cast<int>(to / g);
  k.down = static_cast<int>(fr / g);
  const int zc = 10;  // zero crossings per side
  const int half = zc * std::max(k.up, k.down);
  const int n = 2 * half + 1;
  k.delay = half;
  k.taps.resize(static_cast<size_t>(n));
  const double beta = 5.0;
  const double cutoff = 1.0 / std::max(k.up, k.down);
  const double i0b = bessel_i0(beta);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i - half);
    const double u = t / half;
    const double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0b;
    k.taps[static_cast<size_t>(i)] = k.up * cutoff * sinc(cutoff * t) * w;
  }
  return k;
}

std::vector<double> apply(std::span<const double> x, const Kernel& k) {
  const int n_in = static_cast<int>(x.size());
  const int n_out = k.output_length(n_in);
  const int n_taps = static_cast<int>(k.taps.size());
  std::vector<double> y(static_cast<size_t>(n_out), 0.0);
  for (int m = 0; m < n_out; ++m) {
    const long long center = static_cast<long long>(m) * k.down + k.delay;
    // x[j] contributes via tap index center - j*up
    long long j_lo = (center - (n_taps - 1) + k.up - 1) / k.up;
    long long j_hi = center / k.up;
    j_lo = std::max<long long>(j_lo, 0);
    j_hi = std::min<long long>(j_hi, n_in - 1);
    double acc = 0.0;
    for (long long j = j_lo; j <= j_hi; ++j)
      acc += x[static_cast<size_t>(j)] * k.taps[static_cast<size_t>(center - j * k.up)];
    y[static_cast<size_t>(m)] = acc;
  }
  return y;
}

ad::Var apply_graph(const ad::Var& x, const Kernel& k) {
  if (x.shape().size() != 1) throw std::invalid_argument("resample: 1-d input expected");
  const int n_in = static_cast<int>(x.numel());
  const int n_out = k.output_length(n_in);
  auto y = apply(x.values(), k);
  ad::Var out = ad::Var::leaf({n_out}, std::move(y), false);
  if (!x.needs_grad()) return out;
  // reuse the leaf but wire the adjoint by rebuilding as a proper node
  auto node = out.node();
  node->needs_grad = true;
  node->parents = {x.node()};
  Kernel kc = k;
  node->backprop = [kc, n_in, n_out](ad::Node& self) {
    ad::Node& px = *self.parents[0];
    px.ensure_grad();
    const int n_taps = static_cast<int>(kc.taps.size());
    for (int m = 0; m < n_out; ++m) {
      const double g = self.grad[static_cast<size_t>(m)];
      if (g == 0.0) continue;
      const long long center = static_cast<long long>(m) * kc.down + kc.delay;
      long long j_lo = (center - (n_taps - 1) + kc.up - 1) / kc.up;
      long long j_hi = center / kc.up;
      j_lo = std::max<long long>(j_lo, 0);
      j_hi = std::min<long long>(j_hi, n_in - 1);
      for (long long j = j_lo; j <= j_hi; ++j)
        px.grad[static_cast<size_t>(j)] += g * kc.taps[static_cast<size_t>(center - j * kc.up)];
    }
  };
  return out;
}

}  // namespace silp::resample
