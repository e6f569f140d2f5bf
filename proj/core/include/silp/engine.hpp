#pragma once

// Optimization machinery: Adam updates over the checkpoint tensors,
// multi-step learning-rate scheduling driven by the validation loss, early
// stopping, the training loop, and the finite-difference verification
// harness.

#include <functional>
#include <string>
#include <vector>

#include "silp/checkpoint.hpp"
#include "silp/data.hpp"
#include "silp/loss.hpp"

namespace silp::engine {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Gradients aligned with MaskNet::make_leaves order: grads[2*i] is the real
// part of tensor i, grads[2*i+1] the imaginary part. Creates the moment
// state on first use; throws on non-finite gradients.
void adam_step(model::Checkpoint& ckpt, const std::vector<std::vector<double>>& grads, double lr,
               const AdamConfig& cfg = {});

// Strict-improvement early stopping.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);
  // Returns true when training should stop (stagnant epochs == patience).
  bool update(double validation_loss);
  double best() const { return best_; }
  int stagnant() const { return stagnant_; }

 private:
  int patience_;
  int stagnant_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct SchedulerConfig {
  double factor = 0.5;  // multiplier applied on stagnation
  int stagnation = 2;   // consecutive non-improving epochs before a step
};

// Multi-step decay on validation stagnation. Never increases the rate.
class MultiStepLr {
 public:
  MultiStepLr(double initial_lr, SchedulerConfig cfg);
  double lr() const { return lr_; }
  void update(bool improved);

 private:
  double lr_;
  SchedulerConfig cfg_;
  int stagnant_ = 0;
};

struct TrainConfig {
  double learning_rate = 0.001;
  SchedulerConfig scheduler;
  int max_epochs = 100;
  int patience = 3;
  int batch_size = 8;
  loss::LossOptions loss;
  uint64_t seed = 0;
  std::string log_path;  // newline-delimited JSON records when non-empty

  void validate() const;
};

struct LossMean {
  loss::LossBreakdown sums;  // running means after finalize()
  int count = 0;
  void add(const loss::LossBreakdown& b);
  loss::LossBreakdown mean() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  loss::LossBreakdown train;
  loss::LossBreakdown validation;
  double lr = 0.0;
  double wall_s = 0.0;
};

struct TrainResult {
  model::Checkpoint best;        // parameters at the best validation epoch
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_validation = 0.0;
  bool stopped_early = false;
};

// Minimizes the composite objective over the manifest's train split,
// evaluating the validation split after every epoch. Deterministic given
// (checkpoint seed, data, config).
TrainResult train(model::Checkpoint ckpt, const data::DatasetManifest& manifest,
                  const TrainConfig& cfg);

// Per-utterance loss (graph) for a clean/noisy pair under the checkpoint's
// configuration; exposed for the trainer and the toy experiments.
struct UtteranceLoss {
  loss::LossGraph graph;
  std::vector<ad::Var> leaves;
};
UtteranceLoss utterance_loss(const model::Checkpoint& ckpt, const dsp::BinauralWaveform& clean,
                             const dsp::BinauralWaveform& noisy, const loss::LossOptions& opts,
                             bool requires_grad);

// ---- gradient verification -------------------------------------------------

struct GradCheckReport {
  std::string component;
  double worst_rel_error = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Central finite differences against the recorded adjoints for the named
// component ("all" runs every check). Linear ops use a 1e-5 threshold,
// nonlinear ones 1e-3.
std::vector<GradCheckReport> grad_check(const std::string& component, uint64_t seed);

}  // namespace silp::engine
