#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "silp/cues.hpp"
#include "silp/eval.hpp"
#include "silp/loss.hpp"
#include "silp/model.hpp"
#include "silp/runtime.hpp"
#include "silp/wav.hpp"

namespace silp::eval {

PairRecord evaluate_pair(const dsp::BinauralWaveform& clean, const dsp::BinauralWaveform& noisy,
                         const dsp::BinauralWaveform& enhanced, const dsp::StftConfig& cfg,
                         const EvalOptions& opts) {
  clean.validate();
  noisy.validate();
  enhanced.validate();
  if (clean.samples() != noisy.samples() || clean.samples() != enhanced.samples())
    throw std::invalid_argument("evaluate_pair: length mismatch");

  PairRecord rec;
  {
    dsp::BinauralWaveform residual;
    residual.sample_rate = noisy.sample_rate;
    residual.left.resize(noisy.samples());
    residual.right.resize(noisy.samples());
    for (size_t i = 0; i < noisy.samples(); ++i) {
      residual.left[i] = noisy.left[i] - clean.left[i];
      residual.right[i] = noisy.right[i] - clean.right[i];
    }
    rec.input_snr_db = data::mean_snr_db(clean, residual);
  }

  rec.dfw_left_db = fw_segsnr(clean.left, enhanced.left, cfg.sample_rate) -
                    fw_segsnr(clean.left, noisy.left, cfg.sample_rate);
  rec.dfw_right_db = fw_segsnr(clean.right, enhanced.right, cfg.sample_rate) -
                     fw_segsnr(clean.right, noisy.right, cfg.sample_rate);

  const auto s_l = dsp::stft(clean.left, cfg);
  const auto s_r = dsp::stft(clean.right, cfg);
  const auto h_l = dsp::stft(enhanced.left, cfg);
  const auto h_r = dsp::stft(enhanced.right, cfg);
  const auto mask = cues::speech_mask(s_l, s_r, opts.ibm_threshold_db, opts.split_hz);
  rec.ild_error_db = loss::ild_loss(s_l, s_r, h_l, h_r, mask);
  rec.ipd_error_rad = loss::ipd_loss(s_l, s_r, h_l, h_r, mask);

  rec.stoi_left = loss::stoi(clean.left, enhanced.left, cfg.sample_rate);
  rec.stoi_right = loss::stoi(clean.right, enhanced.right, cfg.sample_rate);
  return rec;
}

std::vector<Aggregate> aggregate(const std::vector<PairRecord>& records) {
  std::map<long, Aggregate> buckets;
  for (const auto& r : records) {
    const long key = std::lround(r.snr_bucket_db);
    auto& a = buckets[key];
    a.snr_bucket_db = static_cast<double>(key);
    a.count += 1;
    a.dfw_db += 0.5 * (r.dfw_left_db + r.dfw_right_db);
    a.ild_error_db += r.ild_error_db;
    a.ipd_error_rad += r.ipd_error_rad;
    a.stoi += 0.5 * (r.stoi_left + r.stoi_right);
  }
  std::vector<Aggregate> out;
  for (auto& [key, a] : buckets) {
    a.dfw_db /= a.count;
    a.ild_error_db /= a.count;
    a.ipd_error_rad /= a.count;
    a.stoi /= a.count;
    out.push_back(a);
  }
  return out;
}

EvalReport evaluate_dataset(const data::DatasetManifest& manifest, const model::Checkpoint& ckpt,
                            const EvalOptions& opts, const std::string& split) {
  EvalReport report;
  auto leaves = model::MaskNet::make_leaves(ckpt, false);
  model::MaskNet net(ckpt.model, ckpt.stft);
  std::vector<const data::ManifestEntry*> selected;
  for (const auto& e : manifest.entries)
    if (split.empty() || e.split == split) selected.push_back(&e);
  report.records.resize(selected.size());
  runtime::parallel_for(static_cast<int64_t>(selected.size()), [&](int64_t idx) {
    const auto& e = *selected[static_cast<size_t>(idx)];
    auto cw = wav::read(e.clean_path);
    auto nw = wav::read(e.noisy_path);
    if (cw.channels.size() != 2 || nw.channels.size() != 2)
      throw std::runtime_error("evaluate_dataset: " + e.id + " is not stereo");
    dsp::BinauralWaveform clean{cw.channels[0], cw.channels[1], cw.sample_rate};
    dsp::BinauralWaveform noisy{nw.channels[0], nw.channels[1], nw.sample_rate};

    dsp::BinauralWaveform enhanced;
    enhanced.sample_rate = noisy.sample_rate;
    const auto spec_l = dsp::stft(noisy.left, ckpt.stft);
    const auto spec_r = dsp::stft(noisy.right, ckpt.stft);
    if (opts.identity_mask) {
      enhanced.left = dsp::istft(spec_l);
      enhanced.right = dsp::istft(spec_r);
    } else {
      auto fwd = net.forward(spec_l, spec_r, leaves);
      enhanced.left = dsp::istft(dsp::spec_values(model::MaskNet::apply_mask(fwd.mask_left, spec_l)));
      enhanced.right =
          dsp::istft(dsp::spec_values(model::MaskNet::apply_mask(fwd.mask_right, spec_r)));
    }

    auto rec = evaluate_pair(clean, noisy, enhanced, ckpt.stft, opts);
    rec.id = e.id;
    rec.snr_bucket_db = e.target_snr_db;
    report.records[static_cast<size_t>(idx)] = std::move(rec);
  });
  if (report.records.empty()) throw std::runtime_error("evaluate_dataset: no entries evaluated");
  report.aggregates = aggregate(report.records);
  return report;
}

}  // namespace silp::eval
