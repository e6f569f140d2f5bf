#include "silp/cues.hpp"

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "test_util.hpp"

using namespace silp;

namespace {

dsp::ComplexSpectrogram make_spec(int bins, int frames, uint64_t seed, double scale = 1.0) {
  dsp::ComplexSpectrogram s;
  s.bins = bins;
  s.frames = frames;
  s.signal_length = 0;
  auto re = testutil::randn(bins * frames, seed, scale);
  auto im = testutil::randn(bins * frames, seed + 1, scale);
  s.data.resize(re.size());
  for (size_t i = 0; i < re.size(); ++i) s.data[i] = {re[i], im[i]};
  return s;
}

}  // namespace

TEST_CASE("ild map basic values and symmetries") {
  auto l = make_spec(4, 3, 1);
  auto r = make_spec(4, 3, 3);

  SUBCASE("2:1 magnitude ratio gives +6.0206 dB") {
    dsp::ComplexSpectrogram a = l, b = l;
    for (auto& c : a.data) c = {2.0, 0.0};
    for (auto& c : b.data) c = {0.0, 1.0};
    auto m = cues::ild_map(a, b);
    for (double v : m.v) CHECK(v == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-7));
  }
  SUBCASE("identical channels give zero") {
    auto m = cues::ild_map(l, l);
    for (double v : m.v) CHECK(v == 0.0);
  }
  SUBCASE("swapping channels negates the map exactly") {
    auto m1 = cues::ild_map(l, r);
    auto m2 = cues::ild_map(r, l);
    for (size_t i = 0; i < m1.size(); ++i) CHECK(m1.v[i] == -m2.v[i]);
  }
  SUBCASE("shape mismatch raises") {
    auto small = make_spec(3, 3, 5);
    CHECK_THROWS_AS(cues::ild_map(l, small), std::invalid_argument);
  }
}

TEST_CASE("ipd map basic values and symmetries") {
  auto l = make_spec(5, 4, 11);
  auto r = make_spec(5, 4, 13);

  SUBCASE("arg(j / 1) is pi/2") {
    auto a = l, b = l;
    for (auto& c : a.data) c = {0.0, 1.0};
    for (auto& c : b.data) c = {1.0, 0.0};
    auto m = cues::ipd_map(a, b);
    for (double v : m.v) CHECK(v == doctest::Approx(std::numbers::pi / 2));
  }
  SUBCASE("identical channels give zero phase") {
    auto m = cues::ipd_map(l, l);
    for (double v : m.v) CHECK(v == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  }
  SUBCASE("conjugating both inputs negates the map") {
    auto lc = l, rc = r;
    for (auto& c : lc.data) c = std::conj(c);
    for (auto& c : rc.data) c = std::conj(c);
    auto m1 = cues::ipd_map(l, r);
    auto m2 = cues::ipd_map(lc, rc);
    for (size_t i = 0; i < m1.size(); ++i) CHECK(m1.v[i] == doctest::Approx(-m2.v[i]));
  }
}

TEST_CASE("ibm_single selects tiles within the threshold of each bin's peak") {
  // one frequency bin with energies {0, -10, -30} dB and T = 20
  dsp::ComplexSpectrogram s;
  s.bins = 1;
  s.frames = 3;
  s.data = {{1.0, 0.0},
            {std::pow(10.0, -0.5), 0.0},
            {std::pow(10.0, -1.5), 0.0}};
  auto m = cues::ibm_single(s, 20.0);
  CHECK(m.at(0, 0) == 1.0);
  CHECK(m.at(0, 1) == 1.0);
  CHECK(m.at(0, 2) == 0.0);
}

TEST_CASE("ibm_single constant-energy row is all ones; silent row all zeros") {
  dsp::ComplexSpectrogram s;
  s.bins = 2;
  s.frames = 4;
  s.data.assign(8, {0.5, 0.5});
  for (int l = 0; l < 4; ++l) s.at(1, l) = {0.0, 0.0};
  auto m = cues::ibm_single(s, 20.0);
  for (int l = 0; l < 4; ++l) {
    CHECK(m.at(0, l) == 1.0);
    CHECK(m.at(1, l) == 0.0);
  }
}

TEST_CASE("ibm_single equals an independent brute-force oracle") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto s = make_spec(8, 8, 1000 + seed * 7);
    const double threshold = 20.0;
    auto m = cues::ibm_single(s, threshold);
    // brute-force two-loop oracle straight from the definition
    for (int k = 0; k < 8; ++k) {
      double peak = -1e300;
      for (int l = 0; l < 8; ++l) {
        const double e = 10.0 * std::log10(std::norm(s.at(k, l)) + 1e-12);
        peak = std::max(peak, e);
      }
      for (int l = 0; l < 8; ++l) {
        const double e = 10.0 * std::log10(std::norm(s.at(k, l)) + 1e-12);
        const double expected = e > peak - threshold ? 1.0 : 0.0;
        CHECK(m.at(k, l) == expected);
      }
    }
  }
}

TEST_CASE("ibm_single is invariant to global scaling") {
  auto s = make_spec(6, 5, 77);
  auto scaled = s;
  for (auto& c : scaled.data) c *= 37.5;
  auto m1 = cues::ibm_single(s, 20.0);
  auto m2 = cues::ibm_single(scaled, 20.0);
  for (size_t i = 0; i < m1.size(); ++i) CHECK(m1.v[i] == m2.v[i]);
}

TEST_CASE("ibm_combine: Hadamard product, split bin and counts") {
  dsp::StftConfig cfg;  // 512-point FFT at 16 kHz

  SUBCASE("K_p for the 1500 Hz split is 48") {
    dsp::Grid ones(4, 4, 1.0);
    auto m = cues::ibm_combine(ones, ones, cfg, 1500.0);
    CHECK(m.split_bin == 48);
  }

  SUBCASE("all-ones left mask returns the right mask") {
    dsp::Grid ones(6, 4, 1.0);
    dsp::Grid right(6, 4);
    auto rv = testutil::runif(24, 91, 0.0, 1.0);
    for (size_t i = 0; i < rv.size(); ++i) right.v[i] = rv[i] > 0.5 ? 1.0 : 0.0;
    auto m = cues::ibm_combine(ones, right, cfg, 1500.0);
    for (size_t i = 0; i < right.size(); ++i) CHECK(m.mask.v[i] == right.v[i]);
  }

  SUBCASE("disjoint masks give an empty selection") {
    dsp::Grid a(4, 4), b(4, 4);
    for (int l = 0; l < 4; ++l) {
      a.at(0, l) = 1.0;
      b.at(1, l) = 1.0;
    }
    auto m = cues::ibm_combine(a, b, cfg, 1500.0);
    CHECK(m.n_ld == 0);
    CHECK(m.n_pd == 0);
    for (double v : m.mask.v) CHECK(v == 0.0);
  }

  SUBCASE("combine is idempotent and commutative; counts partition the mask") {
    dsp::Grid a(60, 5), b(60, 5);
    auto av = testutil::runif(300, 101, 0.0, 1.0);
    auto bv = testutil::runif(300, 102, 0.0, 1.0);
    for (size_t i = 0; i < av.size(); ++i) {
      a.v[i] = av[i] > 0.4 ? 1.0 : 0.0;
      b.v[i] = bv[i] > 0.4 ? 1.0 : 0.0;
    }
    auto mab = cues::ibm_combine(a, b, cfg, 1500.0);
    auto mba = cues::ibm_combine(b, a, cfg, 1500.0);
    auto maa = cues::ibm_combine(a, a, cfg, 1500.0);
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(mab.mask.v[i] == mba.mask.v[i]);
      CHECK(maa.mask.v[i] == a.v[i]);
    }
    long ones = 0;
    for (double v : mab.mask.v) ones += v != 0.0 ? 1 : 0;
    CHECK(mab.n_ld + mab.n_pd == ones);
  }
}
