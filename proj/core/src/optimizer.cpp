#include <cmath>
#include <limits>
#include <stdexcept>

#include "silp/engine.hpp"

namespace silp::engine {

namespace {

void ensure_moments(model::Checkpoint& ckpt) {
  if (ckpt.has_optimizer) return;
  ckpt.has_optimizer = true;
  ckpt.optimizer_step = 0;
  ckpt.opt_m.clear();
  ckpt.opt_v.clear();
  for (const auto& t : ckpt.tensors) {
    model::ParamTensor z;
    z.name = t.name;
    z.shape = t.shape;
    z.axes = t.axes;
    z.re.assign(t.re.size(), 0.0);
    z.im.assign(t.im.size(), 0.0);
    ckpt.opt_m.push_back(z);
    ckpt.opt_v.push_back(std::move(z));
  }
}

void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                 std::vector<double>& v, double lr, const AdamConfig& cfg, double bc1, double bc2) {
  for (size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(g[i])) throw std::runtime_error("adam_step: non-finite gradient");
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace

void adam_step(model::Checkpoint& ckpt, const std::vector<std::vector<double>>& grads, double lr,
               const AdamConfig& cfg) {
  if (grads.size() != 2 * ckpt.tensors.size())
    throw std::invalid_argument("adam_step: gradient count mismatch");
  ensure_moments(ckpt);
  ckpt.optimizer_step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(ckpt.optimizer_step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(ckpt.optimizer_step));
  for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
    auto& t = ckpt.tensors[i];
    if (grads[2 * i].size() != t.re.size() || grads[2 * i + 1].size() != t.im.size())
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + t.name);
    adam_update(t.re, grads[2 * i], ckpt.opt_m[i].re, ckpt.opt_v[i].re, lr, cfg, bc1, bc2);
    adam_update(t.im, grads[2 * i + 1], ckpt.opt_m[i].im, ckpt.opt_v[i].im, lr, cfg, bc1, bc2);
  }
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw std::invalid_argument("EarlyStopper: patience must be >= 1");
}

bool EarlyStopper::update(double validation_loss) {
  if (validation_loss < best_) {
    best_ = validation_loss;
    stagnant_ = 0;
  } else {
    ++stagnant_;
  }
  return stagnant_ >= patience_;
}

MultiStepLr::MultiStepLr(double initial_lr, SchedulerConfig cfg) : lr_(initial_lr), cfg_(cfg) {
  if (initial_lr <= 0) throw std::invalid_argument("MultiStepLr: learning rate must be > 0");
  if (!(cfg.factor > 0 && cfg.factor < 1))
    throw std::invalid_argument("MultiStepLr: decay factor must be in (0,1)");
  if (cfg.stagnation < 1) throw std::invalid_argument("MultiStepLr: stagnation must be >= 1");
}

void MultiStepLr::update(bool improved) {
  if (improved) {
    stagnant_ = 0;
    return;
  }
  if (++stagnant_ >= cfg_.stagnation) {
    lr_ *= cfg_.factor;
    stagnant_ = 0;
  }
}

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw std::invalid_argument("train: learning_rate must be > 0");
  if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(scheduler.factor > 0 && scheduler.factor < 1))
    throw std::invalid_argument("train: scheduler factor must be in (0,1)");
}

void LossMean::add(const loss::LossBreakdown& b) {
  sums.total += b.total;
  sums.snr_term += b.snr_term;
  sums.stoi_term += b.stoi_term;
  sums.ild_term += b.ild_term;
  sums.ipd_term += b.ipd_term;
  ++count;
}

loss::LossBreakdown LossMean::mean() const {
  if (count == 0) return {};
  const double inv = 1.0 / count;
  return {sums.total * inv, sums.snr_term * inv, sums.stoi_term * inv, sums.ild_term * inv,
          sums.ipd_term * inv};
}

}  // namespace silp::engine
