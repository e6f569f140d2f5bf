#include <chrono>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "silp/engine.hpp"
#include "silp/model.hpp"
#include "silp/wav.hpp"

namespace silp::engine {

namespace {

using Clock = std::chrono::steady_clock;

dsp::BinauralWaveform read_stereo(const std::string& path) {
  auto w = wav::read(path);
  if (w.channels.size() != 2) throw std::runtime_error("train: not a stereo file: " + path);
  return {w.channels[0], w.channels[1], w.sample_rate};
}

struct LoadedEntry {
  dsp::BinauralWaveform clean;
  dsp::BinauralWaveform noisy;
};

nlohmann::ordered_json breakdown_json(const loss::LossBreakdown& b) {
  return {{"total", b.total},
          {"snr", b.snr_term},
          {"stoi", b.stoi_term},
          {"ild", b.ild_term},
          {"ipd", b.ipd_term}};
}

}  // namespace

UtteranceLoss utterance_loss(const model::Checkpoint& ckpt, const dsp::BinauralWaveform& clean,
                             const dsp::BinauralWaveform& noisy, const loss::LossOptions& opts,
                             bool requires_grad) {
  model::MaskNet net(ckpt.model, ckpt.stft);
  const auto noisy_l = dsp::stft(noisy.left, ckpt.stft);
  const auto noisy_r = dsp::stft(noisy.right, ckpt.stft);
  const auto clean_l = dsp::stft(clean.left, ckpt.stft);
  const auto clean_r = dsp::stft(clean.right, ckpt.stft);

  UtteranceLoss out;
  out.leaves = model::MaskNet::make_leaves(ckpt, requires_grad);
  auto fwd = net.forward(noisy_l, noisy_r, out.leaves);
  auto shat_l = model::MaskNet::apply_mask(fwd.mask_left, noisy_l);
  auto shat_r = model::MaskNet::apply_mask(fwd.mask_right, noisy_r);
  out.graph = loss::composite_graph(clean, clean_l, clean_r, shat_l, shat_r, opts);
  return out;
}

TrainResult train(model::Checkpoint ckpt, const data::DatasetManifest& manifest,
                  const TrainConfig& cfg) {
  cfg.validate();
  const auto train_entries = manifest.split("train");
  const auto val_entries = manifest.split("val");
  if (train_entries.empty()) throw std::invalid_argument("train: empty train split");
  if (val_entries.empty()) throw std::invalid_argument("train: empty validation split");

  // keep waveforms resident; the corpus is desk-scale by design
  std::vector<LoadedEntry> train_data, val_data;
  for (const auto* e : train_entries)
    train_data.push_back({read_stereo(e->clean_path), read_stereo(e->noisy_path)});
  for (const auto* e : val_entries)
    val_data.push_back({read_stereo(e->clean_path), read_stereo(e->noisy_path)});

  std::ofstream log_file;
  if (!cfg.log_path.empty()) {
    log_file.open(cfg.log_path, std::ios::trunc);
    if (!log_file) throw std::runtime_error("train: cannot write log " + cfg.log_path);
  }

  EarlyStopper stopper(cfg.patience);
  MultiStepLr scheduler(cfg.learning_rate, cfg.scheduler);
  std::mt19937_64 shuffle_rng(ckpt.seed ^ cfg.seed ^ 0x7261696EULL);

  TrainResult result;
  result.best = ckpt;

  std::vector<size_t> order(train_data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    // seeded shuffle per epoch
    for (size_t i = order.size() - 1; i > 0; --i) {
      const size_t j = static_cast<size_t>((shuffle_rng() >> 11) % (i + 1));
      std::swap(order[i], order[j]);
    }

    LossMean train_mean;
    size_t cursor = 0;
    while (cursor < order.size()) {
      const size_t batch_end = std::min(cursor + static_cast<size_t>(cfg.batch_size), order.size());
      const double inv_batch = 1.0 / static_cast<double>(batch_end - cursor);
      std::vector<std::vector<double>> grads(2 * ckpt.tensors.size());
      for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
        grads[2 * i].assign(ckpt.tensors[i].re.size(), 0.0);
        grads[2 * i + 1].assign(ckpt.tensors[i].im.size(), 0.0);
      }
      for (; cursor < batch_end; ++cursor) {
        const auto& item = train_data[order[cursor]];
        auto ul = utterance_loss(ckpt, item.clean, item.noisy, cfg.loss, true);
        if (!std::isfinite(ul.graph.total.item()))
          throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
        ad::backward(ul.graph.total);
        train_mean.add(ul.graph.values());
        for (size_t li = 0; li < ul.leaves.size(); ++li) {
          if (!ul.leaves[li].has_grad()) continue;
          auto g = ul.leaves[li].grad();
          auto& acc = grads[li];
          for (size_t k = 0; k < acc.size(); ++k) acc[k] += inv_batch * g[k];
        }
      }
      adam_step(ckpt, grads, scheduler.lr());
    }

    LossMean val_mean;
    for (const auto& item : val_data) {
      auto ul = utterance_loss(ckpt, item.clean, item.noisy, cfg.loss, false);
      val_mean.add(ul.graph.values());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = train_mean.mean();
    rec.validation = val_mean.mean();
    rec.lr = scheduler.lr();
    rec.wall_s = std::chrono::duration<double>(Clock::now() - t0).count();
    result.log.push_back(rec);

    if (log_file) {
      nlohmann::ordered_json j;
      j["epoch"] = epoch;
      j["train"] = breakdown_json(rec.train);
      j["val"] = breakdown_json(rec.validation);
      j["lr"] = rec.lr;
      j["wall_s"] = rec.wall_s;
      j["weights"] = {{"alpha", cfg.loss.weights.alpha},
                      {"beta", cfg.loss.weights.beta},
                      {"gamma", cfg.loss.weights.gamma},
                      {"kappa", cfg.loss.weights.kappa}};
      log_file << j.dump() << "\n" << std::flush;
    }

    const double val = rec.validation.total;
    const bool improved = val < stopper.best();
    if (improved) {
      result.best = ckpt;
      result.best_epoch = epoch;
      result.best_validation = val;
    }
    const bool stop = stopper.update(val);
    scheduler.update(improved);
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace silp::engine
