#include "silp/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "test_util.hpp"

using namespace silp;
using ad::Var;

TEST_CASE("quadratic gradient is exact") {
  auto x = Var::leaf({4}, {1.0, -2.0, 3.0, 0.5}, true);
  auto loss = ad::sum(ad::square(x));
  ad::backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(x.grad()[i] == 2.0 * x.values()[i]);
}

TEST_CASE("elementwise ops match finite differences") {
  auto x = Var::leaf({6}, testutil::runif(6, 11, 0.2, 1.5), true);
  auto y = Var::leaf({6}, testutil::runif(6, 12, 0.2, 1.5), true);
  std::vector<Var> leaves{x, y};
  auto build = [&]() {
    auto a = ad::mul(ad::add(x, y), ad::sub(x, y));
    auto b = ad::div(ad::sigmoid(x), ad::add_scalar(ad::tanh_of(y), 2.0));
    auto c = ad::log_of(ad::add(ad::exp_of(ad::mul_scalar(x, 0.3)), ad::sqrt_of(y)));
    return ad::mean(ad::add(ad::add(a, b), c));
  };
  CHECK(testutil::grad_check(leaves, build) < 1e-7);
}

TEST_CASE("atan2 and wrap_angle gradients") {
  auto y = Var::leaf({5}, testutil::runif(5, 21, 0.3, 1.0), true);
  auto x = Var::leaf({5}, testutil::runif(5, 22, 0.3, 1.0), true);
  std::vector<Var> leaves{y, x};
  auto build = [&]() { return ad::sum(ad::wrap_angle(ad::atan2_of(y, x))); };
  CHECK(testutil::grad_check(leaves, build) < 1e-6);
}

TEST_CASE("wrap_angle maps to principal interval") {
  auto a = Var::leaf({4}, {0.2, std::numbers::pi + 0.2, -std::numbers::pi - 0.2, 7.0}, false);
  auto w = ad::wrap_angle(a);
  CHECK(w.values()[0] == doctest::Approx(0.2));
  CHECK(w.values()[1] == doctest::Approx(-std::numbers::pi + 0.2));
  CHECK(w.values()[2] == doctest::Approx(std::numbers::pi - 0.2));
  CHECK(w.values()[3] == doctest::Approx(7.0 - 2 * std::numbers::pi));
}

TEST_CASE("reductions and broadcasting") {
  auto x = Var::leaf({3, 4}, testutil::randn(12, 31), true);
  std::vector<Var> leaves{x};
  auto build = [&]() {
    auto mu = ad::mul_scalar(ad::sum_lastdim(x), 0.25);
    auto centered = ad::sub(x, ad::tile_lastdim(mu, 4));
    return ad::sum(ad::square(centered));
  };
  CHECK(testutil::grad_check(leaves, build) < 1e-7);
}

TEST_CASE("matmul gradient") {
  auto a = Var::leaf({3, 4}, testutil::randn(12, 41), true);
  auto b = Var::leaf({4, 2}, testutil::randn(8, 42), true);
  std::vector<Var> leaves{a, b};
  auto build = [&]() { return ad::sum(ad::square(ad::matmul(a, b))); };
  CHECK(testutil::grad_check(leaves, build) < 1e-7);
}

TEST_CASE("concat slice permute reverse") {
  auto a = Var::leaf({2, 3}, testutil::randn(6, 51), true);
  auto b = Var::leaf({2, 3}, testutil::randn(6, 52), true);
  std::vector<Var> leaves{a, b};
  auto build = [&]() {
    auto c = ad::concat2(0, a, b);                      // (4,3)
    auto s = ad::slice(c, 0, 1, 3);                     // (3,3)
    auto p = ad::permute3(ad::reshape(s, {3, 3, 1}), {1, 0, 2});
    auto r = ad::reverse_axis(p, 0);
    return ad::sum(ad::mul(r, r));
  };
  CHECK(testutil::grad_check(leaves, build) < 1e-7);
}

TEST_CASE("conv2d matches a naive triple loop") {
  const int cin = 2, cout = 3, f = 8, t = 5, kf = 3, kt = 2, sf = 2, pf = 1;
  auto x = Var::leaf({cin, f, t}, testutil::randn(cin * f * t, 61), true);
  auto w = Var::leaf({cout, cin, kf, kt}, testutil::randn(cout * cin * kf * kt, 62), true);
  auto y = ad::conv2d(x, w, sf, 1, pf);

  const int fo = (f + 2 * pf - kf) / sf + 1;
  REQUIRE(y.shape() == ad::Shape{cout, fo, t});
  // naive reference with causal time padding (kt-1 zeros on the left)
  for (int oc = 0; oc < cout; ++oc)
    for (int of = 0; of < fo; ++of)
      for (int ot = 0; ot < t; ++ot) {
        double acc = 0.0;
        for (int ic = 0; ic < cin; ++ic)
          for (int a = 0; a < kf; ++a)
            for (int b = 0; b < kt; ++b) {
              const int fi = of * sf + a - pf;
              const int ti = ot + b - (kt - 1);
              if (fi < 0 || fi >= f || ti < 0 || ti >= t) continue;
              acc += x.values()[(ic * f + fi) * t + ti] *
                     w.values()[((oc * cin + ic) * kf + a) * kt + b];
            }
        CHECK(y.values()[(oc * fo + of) * t + ot] == doctest::Approx(acc).epsilon(1e-12));
      }

  std::vector<Var> leaves{x, w};
  auto build = [&]() { return ad::sum(ad::square(ad::conv2d(x, w, sf, 1, pf))); };
  CHECK(testutil::grad_check(leaves, build) < 1e-6);
}

TEST_CASE("conv2d causality in time") {
  const int cin = 1, cout = 1, f = 4, t = 6, kf = 1, kt = 3;
  auto w = Var::leaf({cout, cin, kf, kt}, testutil::randn(3, 71), false);
  auto base = testutil::randn(f * t, 72);
  auto x1 = Var::leaf({cin, f, t}, base, false);
  auto perturbed = base;
  for (int fi = 0; fi < f; ++fi) perturbed[fi * t + 5] += 3.0;  // last frame only
  auto x2 = Var::leaf({cin, f, t}, perturbed, false);
  auto y1 = ad::conv2d(x1, w, 1, 1, 0);
  auto y2 = ad::conv2d(x2, w, 1, 1, 0);
  for (int fi = 0; fi < f; ++fi)
    for (int ti = 0; ti < 5; ++ti)
      CHECK(y1.values()[fi * t + ti] == y2.values()[fi * t + ti]);
}

TEST_CASE("conv_transpose2d inverts conv geometry and matches finite differences") {
  const int cin = 3, cout = 2, f = 4, t = 5, kf = 5, sf = 2, pf = 2, opf = 1;
  auto x = Var::leaf({cin, f, t}, testutil::randn(cin * f * t, 81), true);
  auto w = Var::leaf({cin, cout, kf, 1}, testutil::randn(cin * cout * kf, 82), true);
  auto y = ad::conv_transpose2d(x, w, sf, 1, pf, opf);
  REQUIRE(y.shape() == ad::Shape{cout, (f - 1) * sf - 2 * pf + kf + opf, t});
  REQUIRE(y.dim(1) == 2 * f);

  std::vector<Var> leaves{x, w};
  auto build = [&]() { return ad::sum(ad::square(ad::conv_transpose2d(x, w, sf, 1, pf, opf))); };
  CHECK(testutil::grad_check(leaves, build) < 1e-6);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x), y> == <x, conv_transpose(y)> for matching geometry
  const int cin = 2, cout = 3, f = 8, t = 4, kf = 5, sf = 2, pf = 2;
  auto xv = testutil::randn(cin * f * t, 91);
  auto wv = testutil::randn(cout * cin * kf, 92);
  auto x = Var::leaf({cin, f, t}, xv, false);
  auto w = Var::leaf({cout, cin, kf, 1}, wv, false);
  auto cx = ad::conv2d(x, w, sf, 1, pf);
  const int fo = cx.dim(1);
  auto yv = testutil::randn(cout * fo * t, 93);
  auto y = Var::leaf({cout, fo, t}, yv, false);
  // the transpose side reads the same packed weight with its own channel
  // convention: (op-in = cout, op-out = cin, kf, kt)
  auto w2 = Var::leaf({cout, cin, kf, 1}, wv, false);
  const int opf = f - ((fo - 1) * sf - 2 * pf + kf);
  auto ty = ad::conv_transpose2d(y, w2, sf, 1, pf, opf);
  REQUIRE(ty.shape() == x.shape());
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < cx.values().size(); ++i) lhs += cx.values()[i] * yv[i];
  for (size_t i = 0; i < xv.size(); ++i) rhs += xv[i] * ty.values()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("lstm_seq zero input with zero bias stays zero") {
  const int T = 4, B = 2, D = 3, H = 2;
  auto x = Var::zeros({T, B, D});
  auto w = Var::leaf({4 * H, D}, testutil::randn(4 * H * D, 101), false);
  auto u = Var::leaf({4 * H, H}, testutil::randn(4 * H * H, 102), false);
  auto b = Var::zeros({4 * H});
  auto h = ad::lstm_seq(x, w, u, b);
  for (double v : h.values()) CHECK(v == 0.0);
}

TEST_CASE("lstm_seq gradients match finite differences") {
  const int T = 3, B = 2, D = 3, H = 2;
  auto x = Var::leaf({T, B, D}, testutil::randn(T * B * D, 111, 0.5), true);
  auto w = Var::leaf({4 * H, D}, testutil::randn(4 * H * D, 112, 0.4), true);
  auto u = Var::leaf({4 * H, H}, testutil::randn(4 * H * H, 113, 0.4), true);
  auto b = Var::leaf({4 * H}, testutil::randn(4 * H, 114, 0.2), true);
  std::vector<Var> leaves{x, w, u, b};
  auto build = [&]() { return ad::sum(ad::square(ad::lstm_seq(x, w, u, b))); };
  CHECK(testutil::grad_check(leaves, build) < 1e-6);
}

TEST_CASE("lstm_seq matches an independent scalar-loop reference") {
  const int T = 2, B = 1, D = 2, H = 2;
  auto xv = testutil::randn(T * B * D, 121, 0.7);
  auto wv = testutil::randn(4 * H * D, 122, 0.5);
  auto uv = testutil::randn(4 * H * H, 123, 0.5);
  auto bv = testutil::randn(4 * H, 124, 0.3);
  auto x = Var::leaf({T, B, D}, xv, false);
  auto w = Var::leaf({4 * H, D}, wv, false);
  auto u = Var::leaf({4 * H, H}, uv, false);
  auto b = Var::leaf({4 * H}, bv, false);
  auto out = ad::lstm_seq(x, w, u, b);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> hprev(H, 0.0), cprev(H, 0.0);
  for (int t = 0; t < T; ++t) {
    std::vector<double> pre(4 * H, 0.0);
    for (int j = 0; j < 4 * H; ++j) {
      pre[j] = bv[j];
      for (int d = 0; d < D; ++d) pre[j] += wv[j * D + d] * xv[t * D + d];
      for (int hh = 0; hh < H; ++hh) pre[j] += uv[j * H + hh] * hprev[hh];
    }
    for (int j = 0; j < H; ++j) {
      const double ig = sig(pre[j]);
      const double fg = sig(pre[H + j]);
      const double gg = std::tanh(pre[2 * H + j]);
      const double og = sig(pre[3 * H + j]);
      const double c = fg * cprev[j] + ig * gg;
      const double h = og * std::tanh(c);
      cprev[j] = c;
      hprev[j] = h;
      CHECK(out.values()[t * H + j] == doctest::Approx(h).epsilon(1e-12));
    }
  }
}

TEST_CASE("signal ops: reflect pad, framing, overlap-add round structure") {
  auto x = Var::leaf({10}, testutil::randn(10, 131), true);
  std::vector<Var> leaves{x};
  auto build = [&]() {
    auto p = ad::reflect_pad(x, 3);
    auto fr = ad::gather_frames(p, {0, 4, 8}, 6);
    fr = ad::mul_rowvec(fr, {0.5, 1.0, 1.5, 1.5, 1.0, 0.5});
    auto s = ad::overlap_add(fr, 4, 16);
    s = ad::div_vec(s, std::vector<double>(16, 2.0));
    return ad::sum(ad::square(s));
  };
  CHECK(testutil::grad_check(leaves, build) < 1e-7);
}

TEST_CASE("rfft/irfft rows: values match a naive DFT and gradients are exact") {
  const int m = 2, n = 12, nfft = 16;
  auto x = Var::leaf({m, n}, testutil::randn(m * n, 141), true);
  auto packed = ad::rfft_rows(x, nfft);
  const int bins = nfft / 2 + 1;
  for (int r = 0; r < m; ++r)
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int j = 0; j < n; ++j) {
        const double ang = -2.0 * std::numbers::pi * k * j / nfft;
        re += x.values()[r * n + j] * std::cos(ang);
        im += x.values()[r * n + j] * std::sin(ang);
      }
      CHECK(packed.values()[r * 2 * bins + k] == doctest::Approx(re).epsilon(1e-10));
      CHECK(packed.values()[r * 2 * bins + bins + k] == doctest::Approx(im).epsilon(1e-10));
    }

  std::vector<Var> leaves{x};
  auto build = [&]() {
    auto X = ad::rfft_rows(x, nfft);
    auto back = ad::irfft_rows(X, nfft);
    return ad::sum(ad::square(back));
  };
  CHECK(testutil::grad_check(leaves, build) < 1e-8);

  // irfft(rfft(x)) recovers the zero-padded frame
  auto back = ad::irfft_rows(packed, nfft);
  for (int r = 0; r < m; ++r) {
    for (int j = 0; j < n; ++j)
      CHECK(back.values()[r * nfft + j] == doctest::Approx(x.values()[r * n + j]).epsilon(1e-11));
    for (int j = n; j < nfft; ++j)
      CHECK(back.values()[r * nfft + j] == doctest::Approx(0.0).scale(1).epsilon(1e-11));
  }
}

TEST_CASE("prelu and minimum") {
  auto x = Var::leaf({6}, {-2.0, -0.5, 0.1, 1.0, -1.5, 2.0}, true);
  auto slope = Var::leaf({1}, {0.25}, true);
  std::vector<Var> leaves{x, slope};
  auto build = [&]() { return ad::sum(ad::square(ad::prelu(x, slope))); };
  CHECK(testutil::grad_check(leaves, build) < 1e-7);

  auto a = Var::leaf({3}, {1.0, 5.0, -2.0}, false);
  auto b = Var::leaf({3}, {2.0, 4.0, -3.0}, false);
  auto mn = ad::minimum(a, b);
  CHECK(mn.values()[0] == 1.0);
  CHECK(mn.values()[1] == 4.0);
  CHECK(mn.values()[2] == -3.0);
}

TEST_CASE("backward rejects non-scalar and non-finite roots") {
  auto x = Var::leaf({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(ad::backward(x), std::invalid_argument);
  auto bad = ad::log_of(ad::add_scalar(ad::sum(ad::mul_scalar(x, 0.0)), -1.0));
  CHECK_THROWS_AS(ad::backward(bad), std::runtime_error);
}
