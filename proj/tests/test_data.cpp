#include "silp/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "silp/wav.hpp"
#include "test_util.hpp"

using namespace silp;
namespace fs = std::filesystem;

namespace {

double power(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e / static_cast<double>(x.size());
}

// lag of the cross-correlation peak between two channels, in samples,
// refined by parabolic interpolation
double xcorr_peak_lag(const std::vector<double>& a, const std::vector<double>& b, int max_lag) {
  int best = 0;
  double best_v = -1e300;
  std::vector<double> r(static_cast<size_t>(2 * max_lag + 1));
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const long j = static_cast<long>(i) + lag;
      if (j < 0 || j >= static_cast<long>(b.size())) continue;
      acc += a[i] * b[static_cast<size_t>(j)];
    }
    r[static_cast<size_t>(lag + max_lag)] = acc;
    if (acc > best_v) {
      best_v = acc;
      best = lag;
    }
  }
  const int i = best + max_lag;
  if (i <= 0 || i >= 2 * max_lag) return best;
  const double y0 = r[static_cast<size_t>(i - 1)], y1 = r[static_cast<size_t>(i)],
               y2 = r[static_cast<size_t>(i + 1)];
  return best + 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2);
}

}  // namespace

TEST_CASE("synth_hrir symmetry and interaural delay") {
  SUBCASE("frontal source gives identical ears") {
    auto h = data::synth_hrir(0.0, 16000.0);
    CHECK(h.left == h.right);
  }

  SUBCASE("mirrored azimuth swaps the channels exactly") {
    for (double az : {15.0, 45.0, 80.0, 120.0}) {
      auto hp = data::synth_hrir(az, 16000.0);
      auto hn = data::synth_hrir(-az, 16000.0);
      CHECK(hp.left == hn.right);
      CHECK(hp.right == hn.left);
    }
  }

  SUBCASE("lateral source delay follows the spherical-head model") {
    const double fs = 48000.0;  // finer grid for the delay measurement
    auto h = data::synth_hrir(90.0, fs);
    const double itd_expected = 0.0875 / 343.0 * (std::numbers::pi / 2 + 1.0);
    CHECK(itd_expected == doctest::Approx(0.656e-3).epsilon(1e-2));
    // right ear leads for a source on the right
    const double lag = xcorr_peak_lag(h.left, h.right, 60);
    CHECK(lag * 1.0 / fs == doctest::Approx(itd_expected).epsilon(0.06));
    // and the far ear is attenuated
    CHECK(power(h.left) < power(h.right));
  }

  SUBCASE("azimuth out of range raises") {
    CHECK_THROWS_AS(data::synth_hrir(200.0, 16000.0), std::invalid_argument);
  }
}

TEST_CASE("hrir set loading, nearest lookup and round trip") {
  const auto dir = (fs::temp_directory_path() / "silp_hrir_test").string();
  fs::remove_all(dir);

  SUBCASE("nearest-azimuth rule") {
    data::HrirSet set = data::HrirSet::synthetic(16000.0, 90.0);  // {-180,-90,0,90}
    CHECK(set.size() == 4);
    CHECK(set.nearest(85.0).azimuth_deg == 90.0);
    CHECK(set.nearest(-4.0).azimuth_deg == 0.0);
    CHECK(set.nearest(179.0).azimuth_deg == -180.0);  // circular distance
  }

  SUBCASE("empty directory raises") {
    fs::create_directories(dir);
    CHECK_THROWS_AS(data::HrirSet::load(dir), std::runtime_error);
  }

  SUBCASE("save and reload reproduces responses within float32") {
    auto set = data::HrirSet::synthetic(16000.0, 45.0);
    set.save(dir);
    auto back = data::HrirSet::load(dir);
    REQUIRE(back.size() == set.size());
    for (double az : {-90.0, 0.0, 45.0}) {
      const auto& a = set.nearest(az);
      const auto& b = back.nearest(az);
      REQUIRE(a.left.size() == b.left.size());
      for (size_t i = 0; i < a.left.size(); ++i) {
        CHECK(b.left[i] == static_cast<double>(static_cast<float>(a.left[i])));
        CHECK(b.right[i] == static_cast<double>(static_cast<float>(a.right[i])));
      }
    }
  }
}

TEST_CASE("spatialize basics") {
  SUBCASE("unit impulse on both ears is the identity") {
    data::Hrir h;
    h.sample_rate = 16000.0;
    h.left = {1.0};
    h.right = {1.0};
    auto x = testutil::randn(200, 3);
    auto out = data::spatialize(x, h);
    for (size_t i = 0; i < x.size(); ++i) {
      CHECK(out.left[i] == x[i]);
      CHECK(out.right[i] == x[i]);
    }
  }

  SUBCASE("delayed scaled impulse shifts and scales") {
    data::Hrir h;
    h.sample_rate = 16000.0;
    h.left = {1.0};
    h.right.assign(11, 0.0);
    h.right[10] = 0.5;
    auto x = testutil::randn(100, 5);
    auto out = data::spatialize(x, h);
    for (size_t i = 10; i < x.size(); ++i)
      CHECK(out.right[i] == doctest::Approx(0.5 * x[i - 10]).epsilon(1e-12));
    for (int i = 0; i < 10; ++i) CHECK(out.right[static_cast<size_t>(i)] == 0.0);
  }

  SUBCASE("linearity") {
    auto h = data::synth_hrir(30.0, 16000.0);
    auto a = testutil::randn(400, 7);
    auto b = testutil::randn(400, 8);
    auto sum = a;
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += b[i];
    auto oa = data::spatialize(a, h);
    auto ob = data::spatialize(b, h);
    auto os = data::spatialize(sum, h);
    for (size_t i = 0; i < sum.size(); ++i)
      CHECK(os.left[i] == doctest::Approx(oa.left[i] + ob.left[i]).epsilon(1e-10));
  }

  SUBCASE("time invariance up to truncation") {
    auto h = data::synth_hrir(-50.0, 16000.0);
    auto x = testutil::randn(300, 9);
    std::vector<double> shifted(x.size(), 0.0);
    std::copy(x.begin(), x.end() - 17, shifted.begin() + 17);
    auto o1 = data::spatialize(x, h);
    auto o2 = data::spatialize(shifted, h);
    for (size_t i = 17; i < x.size(); ++i)
      CHECK(o2.left[i] == doctest::Approx(o1.left[i - 17]).epsilon(1e-10));
  }
}

TEST_CASE("isotropic noise field") {
  auto hrirs = data::HrirSet::synthetic(16000.0, 5.0);
  CHECK(hrirs.size() == 72);  // 360 / 5
  auto wgn = data::make_wgn();

  SUBCASE("interchannel power difference stays under 1 dB over 10 seeds") {
    double acc = 0.0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      auto v = data::isotropic_noise(0.5, *wgn, hrirs, 5.0, seed);
      acc += std::abs(10.0 * std::log10(power(v.left) / power(v.right)));
    }
    CHECK(acc / 10.0 < 1.0);
  }

  SUBCASE("unit mean broadband power and per-seed reproducibility") {
    auto v1 = data::isotropic_noise(0.5, *wgn, hrirs, 5.0, 42);
    auto v2 = data::isotropic_noise(0.5, *wgn, hrirs, 5.0, 42);
    CHECK(v1.left == v2.left);
    CHECK(0.5 * (power(v1.left) + power(v1.right)) == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("different seeds are nearly uncorrelated") {
    auto v1 = data::isotropic_noise(0.5, *wgn, hrirs, 5.0, 1);
    auto v2 = data::isotropic_noise(0.5, *wgn, hrirs, 5.0, 2);
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (size_t i = 0; i < v1.left.size(); ++i) {
      dot += v1.left[i] * v2.left[i];
      n1 += v1.left[i] * v1.left[i];
      n2 += v2.left[i] * v2.left[i];
    }
    CHECK(std::abs(dot / std::sqrt(n1 * n2)) < 0.1);
  }
}

TEST_CASE("speech-shaped noise matches the reference long-term spectrum") {
  const double fs = 16000.0;
  const auto ref = data::synth_speech(5, 62.0, fs);
  auto ssn = data::make_ssn(ref, fs);
  std::mt19937_64 rng(77);
  const auto draw = ssn->draw(static_cast<int>(8 * fs), rng);

  // Welch magnitude spectra of reference and output
  auto welch = [&](const std::vector<double>& x) {
    const int nfft = 512, hop = 256, bins = nfft / 2 + 1;
    std::vector<double> win(nfft), acc(bins, 0.0);
    for (int i = 0; i < nfft; ++i)
      win[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / nfft);
    int count = 0;
    std::vector<double> frame(nfft);
    for (size_t s = 0; s + nfft <= x.size(); s += hop) {
      for (int i = 0; i < nfft; ++i) frame[static_cast<size_t>(i)] = x[s + static_cast<size_t>(i)] * win[static_cast<size_t>(i)];
      // naive DFT magnitude via Goertzel-free direct sums is too slow here;
      // use the rfft through a tiny local helper: reuse autodiff op
      auto fr = silp::ad::Var::constant({1, nfft}, frame);
      auto packed = silp::ad::rfft_rows(fr, nfft);
      for (int k = 0; k < bins; ++k) {
        const double re = packed.values()[static_cast<size_t>(k)];
        const double im = packed.values()[static_cast<size_t>(bins + k)];
        acc[static_cast<size_t>(k)] += re * re + im * im;
      }
      ++count;
    }
    for (auto& v : acc) v = std::sqrt(v / count);
    return acc;
  };
  const auto ref_mag = welch(ref);
  const auto out_mag = welch(draw);

  // third-octave comparison, 100 Hz .. 7 kHz; overall gain normalized out
  double gain_num = 0.0, gain_den = 0.0;
  for (size_t k = 0; k < ref_mag.size(); ++k) {
    gain_num += out_mag[k];
    gain_den += ref_mag[k];
  }
  const double gain = gain_num / gain_den;
  for (double cf = 100.0; cf < 7000.0; cf *= std::pow(2.0, 1.0 / 3.0)) {
    const int klo = static_cast<int>(cf * std::pow(2.0, -1.0 / 6.0) * 512 / fs);
    const int khi = std::max(klo + 1, static_cast<int>(cf * std::pow(2.0, 1.0 / 6.0) * 512 / fs));
    double er = 0.0, eo = 0.0;
    for (int k = klo; k < khi && k < 257; ++k) {
      er += ref_mag[static_cast<size_t>(k)] * ref_mag[static_cast<size_t>(k)];
      eo += out_mag[static_cast<size_t>(k)] * out_mag[static_cast<size_t>(k)];
    }
    const double diff_db = 10.0 * std::log10(eo / (gain * gain * er));
    CHECK(std::abs(diff_db) < 3.0);
  }

  SUBCASE("deterministic given the rng seed") {
    std::mt19937_64 r1(5), r2(5);
    CHECK(ssn->draw(1000, r1) == ssn->draw(1000, r2));
  }

  SUBCASE("insufficient reference raises") {
    std::vector<double> brief(1000, 0.1);
    CHECK_THROWS_AS(data::make_ssn(brief, fs), std::invalid_argument);
  }
}

TEST_CASE("mix_at_snr hits its target exactly") {
  auto hrirs = data::HrirSet::synthetic(16000.0, 30.0);
  SUBCASE("sweep of random cases") {
    for (uint64_t seed = 0; seed < 25; ++seed) {
      auto mono = data::synth_speech(seed, 0.3, 16000.0);
      auto s = data::spatialize(mono, hrirs.nearest(-60.0 + 5.0 * seed));
      auto wgn = data::make_wgn();
      auto v = data::isotropic_noise(0.3, *wgn, hrirs, 30.0, seed + 100);
      const double target = -7.0 + 23.0 * (seed / 24.0);
      auto mix = data::mix_at_snr(s, v, target);
      CHECK(mix.achieved_snr_db == doctest::Approx(target).epsilon(1e-9));
      // re-measure from the artifacts: mixture minus speech is the noise
      dsp::BinauralWaveform resid;
      resid.left.resize(s.samples());
      resid.right.resize(s.samples());
      for (size_t i = 0; i < s.samples(); ++i) {
        resid.left[i] = mix.mixture.left[i] - s.left[i];
        resid.right[i] = mix.mixture.right[i] - s.right[i];
      }
      CHECK(data::mean_snr_db(s, resid) == doctest::Approx(target).epsilon(0).scale(1).epsilon(1e-6));
    }
  }

  SUBCASE("a +60 dB target leaves the speech essentially clean") {
    auto mono = data::synth_speech(3, 0.3, 16000.0);
    auto s = data::spatialize(mono, hrirs.nearest(0.0));
    auto wgn = data::make_wgn();
    auto v = data::isotropic_noise(0.3, *wgn, hrirs, 30.0, 9);
    auto mix = data::mix_at_snr(s, v, 60.0);
    double err = 0.0, ref = 0.0;
    for (size_t i = 0; i < s.samples(); ++i) {
      err += (mix.mixture.left[i] - s.left[i]) * (mix.mixture.left[i] - s.left[i]);
      ref += s.left[i] * s.left[i];
    }
    CHECK(err / ref < 1e-5);
  }

  SUBCASE("silent inputs raise") {
    dsp::BinauralWaveform zero;
    zero.left.assign(100, 0.0);
    zero.right.assign(100, 0.0);
    dsp::BinauralWaveform noise;
    noise.left = testutil::randn(100, 1);
    noise.right = testutil::randn(100, 2);
    CHECK_THROWS_AS(data::mix_at_snr(zero, noise, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(data::mix_at_snr(noise, zero, 0.0), std::invalid_argument);
  }
}

TEST_CASE("build_dataset: manifest contract and byte-identical rebuild") {
  const auto dir1 = (fs::temp_directory_path() / "silp_ds_a").string();
  const auto dir2 = (fs::temp_directory_path() / "silp_ds_b").string();
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  data::BuildConfig cfg;
  cfg.count = 10;
  cfg.duration_s = 0.3;
  cfg.seed = 99;
  cfg.out_dir = dir1;
  auto m1 = data::build_dataset(cfg);

  CHECK(m1.entries.size() == 10);
  for (const auto& e : m1.entries) {
    CHECK(e.azimuth_deg >= -90.0);
    CHECK(e.azimuth_deg <= 90.0);
    CHECK((e.noise_type == "wgn" || e.noise_type == "ssn"));
    CHECK(e.target_snr_db >= -7.0);
    CHECK(e.target_snr_db <= 16.0);
    CHECK(fs::exists(e.clean_path));
    CHECK(fs::exists(e.noisy_path));
  }

  SUBCASE("written SNR matches the manifest within 0.05 dB") {
    for (const auto& e : m1.entries) {
      auto cw = wav::read(e.clean_path);
      auto nw = wav::read(e.noisy_path);
      dsp::BinauralWaveform s{cw.channels[0], cw.channels[1], cw.sample_rate};
      dsp::BinauralWaveform resid;
      resid.left.resize(s.samples());
      resid.right.resize(s.samples());
      for (size_t i = 0; i < s.samples(); ++i) {
        resid.left[i] = nw.channels[0][i] - s.left[i];
        resid.right[i] = nw.channels[1][i] - s.right[i];
      }
      CHECK(data::mean_snr_db(s, resid) == doctest::Approx(e.target_snr_db).epsilon(0).scale(1).epsilon(0.05));
    }
  }

  SUBCASE("rebuild from the same seed is byte identical") {
    cfg.out_dir = dir2;
    auto m2 = data::build_dataset(cfg);
    REQUIRE(m2.entries.size() == m1.entries.size());
    for (size_t i = 0; i < m1.entries.size(); ++i) {
      auto read_bytes = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      };
      CHECK(read_bytes(m1.entries[i].clean_path) == read_bytes(m2.entries[i].clean_path));
      CHECK(read_bytes(m1.entries[i].noisy_path) == read_bytes(m2.entries[i].noisy_path));
    }
  }

  SUBCASE("manifest round trips through JSON") {
    auto loaded = data::DatasetManifest::load(dir1 + "/manifest.json");
    REQUIRE(loaded.entries.size() == m1.entries.size());
    CHECK(loaded.config.seed == cfg.seed);
    for (size_t i = 0; i < m1.entries.size(); ++i) {
      CHECK(loaded.entries[i].id == m1.entries[i].id);
      CHECK(loaded.entries[i].target_snr_db == m1.entries[i].target_snr_db);
      CHECK(loaded.entries[i].split == m1.entries[i].split);
    }
    CHECK(!loaded.split("train").empty());
    CHECK(!loaded.split("val").empty());
  }
}
