#include "silp/eval.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "silp/cues.hpp"
#include "silp/loss.hpp"
#include "silp/model.hpp"
#include "silp/wav.hpp"
#include "test_util.hpp"

using namespace silp;
namespace fs = std::filesystem;

namespace {

dsp::BinauralWaveform binaural_speech(uint64_t seed, double dur = 1.0) {
  auto hrirs = data::HrirSet::synthetic(16000.0, 30.0);
  auto mono = data::synth_speech(seed, dur, 16000.0);
  return data::spatialize(mono, hrirs.nearest(40.0));
}

dsp::BinauralWaveform add_noise(const dsp::BinauralWaveform& s, double snr_db, uint64_t seed) {
  auto hrirs = data::HrirSet::synthetic(16000.0, 30.0);
  auto wgn = data::make_wgn();
  auto v = data::isotropic_noise(static_cast<double>(s.samples()) / 16000.0, *wgn, hrirs, 30.0,
                                 seed);
  v.left.resize(s.samples());
  v.right.resize(s.samples());
  return data::mix_at_snr(s, v, snr_db).mixture;
}

}  // namespace

TEST_CASE("fw_segsnr reference cases") {
  auto s = data::synth_speech(3, 0.8, 16000.0);

  SUBCASE("identical signals sit at the upper clamp") {
    CHECK(eval::fw_segsnr(s, s, 16000.0) == doctest::Approx(35.0));
  }

  SUBCASE("a sign flip gives the per-band value of a 4x error energy") {
    // |S_j - X_j|^2 = 4 |S_j|^2 in every band, so each band reports
    // 10 log10(1/4) = -6.02 dB; this stays above the -10 dB clamp
    auto flipped = s;
    for (auto& v : flipped) v = -v;
    CHECK(eval::fw_segsnr(s, flipped, 16000.0) ==
          doctest::Approx(10.0 * std::log10(0.25)).epsilon(1e-6));
  }

  SUBCASE("overwhelming noise hits the lower clamp") {
    auto noisy = s;
    auto n = testutil::randn(static_cast<int>(s.size()), 5, 30.0);
    for (size_t i = 0; i < noisy.size(); ++i) noisy[i] += n[i];
    CHECK(eval::fw_segsnr(s, noisy, 16000.0) == doctest::Approx(-10.0).epsilon(1e-2));
  }

  SUBCASE("ideal-mask enhancement scores strictly higher than the mixture") {
    auto clean = binaural_speech(11);
    auto noisy = add_noise(clean, 0.0, 21);
    dsp::StftConfig cfg;
    auto y = dsp::stft(noisy.left, cfg);
    auto sc = dsp::stft(clean.left, cfg);
    auto enhanced = dsp::istft(model::crm_apply(model::crm_compute(sc, y), y));
    const double fw_enh = eval::fw_segsnr(clean.left, enhanced, 16000.0);
    const double fw_noisy = eval::fw_segsnr(clean.left, noisy.left, 16000.0);
    CHECK(fw_enh > fw_noisy);
  }

  SUBCASE("length mismatch raises") {
    std::vector<double> truncated(s.begin(), s.begin() + 100);
    CHECK_THROWS_AS(eval::fw_segsnr(s, truncated, 16000.0), std::invalid_argument);
  }
}

TEST_CASE("evaluate_pair contracts") {
  auto clean = binaural_speech(31);
  auto noisy = add_noise(clean, 3.0, 33);
  dsp::StftConfig cfg;

  SUBCASE("perfect enhancement") {
    auto rec = eval::evaluate_pair(clean, noisy, clean, cfg);
    CHECK(rec.ild_error_db == 0.0);
    CHECK(rec.ipd_error_rad == 0.0);
    CHECK(rec.stoi_left == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(rec.stoi_right == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(rec.dfw_left_db > 0.0);
    CHECK(rec.input_snr_db == doctest::Approx(3.0).epsilon(1e-6));
  }

  SUBCASE("no-op enhancement has exactly zero improvement") {
    auto rec = eval::evaluate_pair(clean, noisy, noisy, cfg);
    CHECK(rec.dfw_left_db == 0.0);
    CHECK(rec.dfw_right_db == 0.0);
  }

  SUBCASE("ideal-CRM output nulls the cue errors") {
    auto yl = dsp::stft(noisy.left, cfg);
    auto yr = dsp::stft(noisy.right, cfg);
    auto sl = dsp::stft(clean.left, cfg);
    auto sr = dsp::stft(clean.right, cfg);
    dsp::BinauralWaveform enhanced;
    enhanced.sample_rate = 16000.0;
    enhanced.left = dsp::istft(model::crm_apply(model::crm_compute(sl, yl), yl));
    enhanced.right = dsp::istft(model::crm_apply(model::crm_compute(sr, yr), yr));
    auto rec = eval::evaluate_pair(clean, noisy, enhanced, cfg);
    CHECK(rec.ild_error_db < 1e-6);
    CHECK(rec.ipd_error_rad < 1e-6);
  }
}

TEST_CASE("cue errors are invariant to common gain and common rotation") {
  auto clean = binaural_speech(41);
  auto noisy = add_noise(clean, 6.0, 43);
  dsp::StftConfig cfg;
  auto sl = dsp::stft(clean.left, cfg);
  auto sr = dsp::stft(clean.right, cfg);
  auto hl = dsp::stft(noisy.left, cfg);
  auto hr = dsp::stft(noisy.right, cfg);
  auto mask = cues::speech_mask(sl, sr, 20.0, 1500.0);
  const double ild0 = loss::ild_loss(sl, sr, hl, hr, mask);
  const double ipd0 = loss::ipd_loss(sl, sr, hl, hr, mask);

  auto hl2 = hl, hr2 = hr;
  for (auto& c : hl2.data) c *= 3.7;
  for (auto& c : hr2.data) c *= 3.7;
  CHECK(loss::ild_loss(sl, sr, hl2, hr2, mask) == doctest::Approx(ild0).epsilon(1e-6));

  const std::complex<double> rot = std::polar(1.0, 0.83);
  auto hl3 = hl, hr3 = hr;
  for (auto& c : hl3.data) c *= rot;
  for (auto& c : hr3.data) c *= rot;
  CHECK(loss::ipd_loss(sl, sr, hl3, hr3, mask) == doctest::Approx(ipd0).epsilon(1e-6));
}

TEST_CASE("dataset evaluation, aggregation and reports") {
  const auto dir = (fs::temp_directory_path() / "silp_eval_ds").string();
  fs::remove_all(dir);
  data::BuildConfig bc;
  bc.count = 4;
  bc.duration_s = 0.5;
  bc.out_dir = dir;
  bc.seed = 5;
  bc.noise_types = {"wgn"};
  bc.splits = {{"test", 1.0}};
  auto manifest = data::build_dataset(bc);

  dsp::StftConfig stft;
  model::ModelConfig mc;
  mc.encoder_channels = {2, 4};
  mc.lstm_layers = 2;
  mc.lstm_hidden = 4;
  mc.linear_features = 4 * 64;
  auto ckpt = model::init_parameters(mc, stft, 3);

  SUBCASE("identity mask leaves fwSegSNR unchanged") {
    eval::EvalOptions opts;
    opts.identity_mask = true;
    auto report = eval::evaluate_dataset(manifest, ckpt, opts);
    REQUIRE(report.records.size() == 4);
    for (const auto& r : report.records) {
      CHECK(std::abs(r.dfw_left_db) < 1e-3);
      CHECK(std::abs(r.dfw_right_db) < 1e-3);
    }
  }

  SUBCASE("records, aggregates and emission round trip") {
    auto report = eval::evaluate_dataset(manifest, ckpt, {});
    REQUIRE(report.records.size() == 4);
    // aggregates equal recomputation and are permutation invariant
    auto shuffled = report.records;
    std::swap(shuffled[0], shuffled[3]);
    auto agg2 = eval::aggregate(shuffled);
    REQUIRE(agg2.size() == report.aggregates.size());
    for (size_t i = 0; i < agg2.size(); ++i) {
      CHECK(agg2[i].count == report.aggregates[i].count);
      CHECK(agg2[i].dfw_db == doctest::Approx(report.aggregates[i].dfw_db).epsilon(1e-12));
    }
    int total = 0;
    for (const auto& a : report.aggregates) total += a.count;
    CHECK(total == 4);

    const auto rdir = dir + "/report";
    eval::emit_report(report, rdir);
    for (const char* f :
         {"report.csv", "report.json", "dfwsegsnr.svg", "ild_error.svg", "ipd_error.svg",
          "stoi.svg"}) {
      CHECK(fs::exists(fs::path(rdir) / f));
      CHECK(fs::file_size(fs::path(rdir) / f) > 0);
    }
    auto back = eval::load_report(rdir + "/report.json");
    REQUIRE(back.records.size() == report.records.size());
    for (size_t i = 0; i < back.records.size(); ++i) {
      CHECK(back.records[i].id == report.records[i].id);
      CHECK(back.records[i].ild_error_db ==
            doctest::Approx(report.records[i].ild_error_db).epsilon(1e-12));
    }
    // CSV has per-utterance rows plus aggregate rows
    std::ifstream csv(rdir + "/report.csv");
    std::string line;
    int utt = 0, agg = 0;
    while (std::getline(csv, line)) {
      if (line.rfind("utterance,", 0) == 0) ++utt;
      if (line.rfind("aggregate,", 0) == 0) ++agg;
    }
    CHECK(utt == 4);
    CHECK(agg == static_cast<int>(report.aggregates.size()));
  }
}
