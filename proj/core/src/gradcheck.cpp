#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "silp/engine.hpp"
#include "silp/model.hpp"

namespace silp::engine {

namespace {

double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

std::vector<double> randn(int n, uint64_t seed, double scale = 1.0) {
  std::mt19937_64 g(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (size_t i = 0; i < v.size(); i += 2) {
    const double u1 = std::max(uniform01(g), 1e-300);
    const double u2 = uniform01(g);
    const double r = std::sqrt(-2.0 * std::log(u1)) * scale;
    v[i] = r * std::cos(2.0 * 3.14159265358979323846 * u2);
    if (i + 1 < v.size()) v[i + 1] = r * std::sin(2.0 * 3.14159265358979323846 * u2);
  }
  return v;
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// worst relative error over every coordinate of every leaf
double check_full(std::vector<ad::Var>& leaves, const std::function<ad::Var()>& build, double h) {
  ad::zero_grad(leaves);
  ad::Var out = build();
  ad::backward(out);
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves)
    analytic.emplace_back(leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                          : std::vector<double>(leaf.numel(), 0.0));
  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto vals = leaves[li].mutable_values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = build().item();
      vals[i] = orig - h;
      const double fm = build().item();
      vals[i] = orig;
      worst = std::max(worst, rel_err(analytic[li][i], (fp - fm) / (2.0 * h)));
    }
  }
  return worst;
}

double check_sampled(std::vector<ad::Var>& leaves, const std::function<ad::Var()>& build,
                     int n_samples, uint64_t seed, double h) {
  ad::zero_grad(leaves);
  ad::Var out = build();
  ad::backward(out);
  std::vector<std::vector<double>> analytic;
  int64_t total = 0;
  for (auto& leaf : leaves) {
    analytic.emplace_back(leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                          : std::vector<double>(leaf.numel(), 0.0));
    total += leaf.numel();
  }
  std::mt19937_64 g(seed);
  double worst = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    int64_t flat = static_cast<int64_t>(uniform01(g) * static_cast<double>(total));
    flat = std::min(flat, total - 1);
    size_t li = 0;
    while (flat >= leaves[li].numel()) {
      flat -= leaves[li].numel();
      ++li;
    }
    auto vals = leaves[li].mutable_values();
    const double orig = vals[static_cast<size_t>(flat)];
    vals[static_cast<size_t>(flat)] = orig + h;
    const double fp = build().item();
    vals[static_cast<size_t>(flat)] = orig - h;
    const double fm = build().item();
    vals[static_cast<size_t>(flat)] = orig;
    worst = std::max(worst, rel_err(analytic[li][static_cast<size_t>(flat)], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

dsp::StftConfig small_cfg() { return {64, 48, 12, 16000.0}; }

model::CVar cvar(int r, int c, uint64_t seed, bool rg = true, double scale = 1.0) {
  return {ad::Var::leaf({r, c}, randn(r * c, seed, scale), rg),
          ad::Var::leaf({r, c}, randn(r * c, seed + 71, scale), rg)};
}

ad::Var sum_sq(const model::CVar& x) {
  return ad::add(ad::sum(ad::square(x.re)), ad::sum(ad::square(x.im)));
}

struct Check {
  std::string name;
  double threshold;
  std::function<double(uint64_t)> run;
};

std::vector<Check> build_checks() {
  std::vector<Check> checks;

  checks.push_back({"stft", 1e-5, [](uint64_t seed) {
    auto x = ad::Var::leaf({200}, randn(200, seed), true);
    std::vector<ad::Var> leaves{x};
    const auto w1 = randn(2 * small_cfg().bins() * dsp::frame_count(200, small_cfg()), seed + 1);
    auto build = [&]() {
      auto spec = dsp::stft_graph(x, small_cfg());
      auto packed = ad::concat2(0, spec.re, spec.im);
      return ad::weighted_sum(packed, w1);
    };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"istft", 1e-5, [](uint64_t seed) {
    const auto cfg = small_cfg();
    const int frames = dsp::frame_count(180, cfg);
    auto re = ad::Var::leaf({cfg.bins(), frames}, randn(cfg.bins() * frames, seed), true);
    auto im = ad::Var::leaf({cfg.bins(), frames}, randn(cfg.bins() * frames, seed + 3), true);
    std::vector<ad::Var> leaves{re, im};
    const auto w1 = randn(180, seed + 5);
    auto build = [&]() {
      dsp::SpecVar spec{re, im, cfg, 180};
      return ad::weighted_sum(dsp::istft_graph(spec), w1);
    };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"stft_istft_chain", 1e-5, [](uint64_t seed) {
    auto x = ad::Var::leaf({200}, randn(200, seed), true);
    std::vector<ad::Var> leaves{x};
    const auto w1 = randn(200, seed + 1);
    auto build = [&]() {
      return ad::weighted_sum(dsp::istft_graph(dsp::stft_graph(x, small_cfg())), w1);
    };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"snr", 1e-3, [](uint64_t seed) {
    const auto ref = randn(256, seed, 0.5);
    auto sh = ad::Var::leaf({256}, randn(256, seed + 1, 0.5), true);
    std::vector<ad::Var> leaves{sh};
    auto build = [&]() { return loss::snr_term_graph(ref, sh); };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"stoi", 1e-3, [](uint64_t seed) {
    auto clean = data::synth_speech(seed, 0.45, 16000.0);
    auto deg = clean;
    const auto noise = randn(static_cast<int>(deg.size()), seed + 2, 0.01);
    for (size_t i = 0; i < deg.size(); ++i) deg[i] += noise[i];
    auto sh = ad::Var::leaf({static_cast<int>(deg.size())}, deg, true);
    std::vector<ad::Var> leaves{sh};
    auto build = [&]() { return loss::stoi_graph(clean, sh, 16000.0); };
    return check_sampled(leaves, build, 40, seed + 9, 1e-5);
  }});

  auto cue_check = [](bool ild) {
    return [ild](uint64_t seed) {
      dsp::ComplexSpectrogram sl, sr;
      sl.bins = sr.bins = 8;
      sl.frames = sr.frames = 6;
      auto a = randn(48, seed + 11), b = randn(48, seed + 13), c = randn(48, seed + 17),
           d = randn(48, seed + 19);
      sl.data.resize(48);
      sr.data.resize(48);
      for (int i = 0; i < 48; ++i) {
        sl.data[static_cast<size_t>(i)] = {a[static_cast<size_t>(i)], b[static_cast<size_t>(i)]};
        sr.data[static_cast<size_t>(i)] = {c[static_cast<size_t>(i)], d[static_cast<size_t>(i)]};
      }
      cues::SpeechActivityMask m;
      m.mask = dsp::Grid(8, 6, 1.0);
      m.split_bin = 3;
      m.n_ld = 4 * 6;
      m.n_pd = 4 * 6;
      dsp::SpecVar hl{ad::Var::leaf({8, 6}, randn(48, seed + 23), true),
                      ad::Var::leaf({8, 6}, randn(48, seed + 29), true),
                      {}, 0};
      dsp::SpecVar hr{ad::Var::leaf({8, 6}, randn(48, seed + 31), true),
                      ad::Var::leaf({8, 6}, randn(48, seed + 37), true),
                      {}, 0};
      std::vector<ad::Var> leaves{hl.re, hl.im, hr.re, hr.im};
      auto build = [&]() {
        return ild ? loss::ild_term_graph(sl, sr, hl, hr, m)
                   : loss::ipd_term_graph(sl, sr, hl, hr, m);
      };
      return check_full(leaves, build, 1e-5);
    };
  };
  checks.push_back({"ild", 1e-3, cue_check(true)});
  checks.push_back({"ipd", 1e-3, cue_check(false)});

  checks.push_back({"complex_conv", 1e-3, [](uint64_t seed) {
    auto x = model::CVar{ad::Var::leaf({2, 8, 5}, randn(80, seed), true),
                         ad::Var::leaf({2, 8, 5}, randn(80, seed + 41), true)};
    auto w = model::CVar{ad::Var::leaf({3, 2, 5, 1}, randn(30, seed + 43, 0.4), true),
                         ad::Var::leaf({3, 2, 5, 1}, randn(30, seed + 47, 0.4), true)};
    auto b = model::CVar{ad::Var::leaf({3}, randn(3, seed + 53, 0.2), true),
                         ad::Var::leaf({3}, randn(3, seed + 59, 0.2), true)};
    std::vector<ad::Var> leaves{x.re, x.im, w.re, w.im, b.re, b.im};
    auto build = [&]() { return sum_sq(model::complex_conv2d(x, w, b, 2, 1, 2)); };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"complex_conv_transpose", 1e-3, [](uint64_t seed) {
    auto x = model::CVar{ad::Var::leaf({3, 4, 5}, randn(60, seed), true),
                         ad::Var::leaf({3, 4, 5}, randn(60, seed + 41), true)};
    auto w = model::CVar{ad::Var::leaf({3, 2, 5, 1}, randn(30, seed + 43, 0.4), true),
                         ad::Var::leaf({3, 2, 5, 1}, randn(30, seed + 47, 0.4), true)};
    auto b = model::CVar{ad::Var::leaf({2}, randn(2, seed + 53, 0.2), true),
                         ad::Var::leaf({2}, randn(2, seed + 59, 0.2), true)};
    std::vector<ad::Var> leaves{x.re, x.im, w.re, w.im, b.re, b.im};
    auto build = [&]() { return sum_sq(model::complex_conv_transpose2d(x, w, b, 2, 1, 2, 1)); };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"complex_batchnorm", 1e-3, [](uint64_t seed) {
    auto x = model::CVar{ad::Var::leaf({2, 4, 5}, randn(40, seed), true),
                         ad::Var::leaf({2, 4, 5}, randn(40, seed + 41), true)};
    auto g = model::CVar{ad::Var::leaf({2}, {1.1, 0.9}, true), ad::Var::leaf({2}, {0.8, 1.2}, true)};
    auto be = model::CVar{ad::Var::leaf({2}, {0.1, -0.2}, true), ad::Var::leaf({2}, {0.0, 0.3}, true)};
    std::vector<ad::Var> leaves{x.re, x.im, g.re, g.im, be.re, be.im};
    auto build = [&]() { return sum_sq(model::complex_batchnorm(x, g, be)); };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"complex_prelu", 1e-3, [](uint64_t seed) {
    auto x = model::CVar{ad::Var::leaf({1, 3, 4}, randn(12, seed), true),
                         ad::Var::leaf({1, 3, 4}, randn(12, seed + 41), true)};
    auto s = model::CVar{ad::Var::leaf({1}, {0.25}, true), ad::Var::leaf({1}, {0.3}, true)};
    std::vector<ad::Var> leaves{x.re, x.im, s.re, s.im};
    auto build = [&]() { return sum_sq(model::complex_prelu(x, s)); };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"complex_linear", 1e-3, [](uint64_t seed) {
    auto x = cvar(5, 4, seed);
    auto w = cvar(4, 3, seed + 101, true, 0.5);
    auto b = model::CVar{ad::Var::leaf({3}, randn(3, seed + 201, 0.2), true),
                         ad::Var::leaf({3}, randn(3, seed + 211, 0.2), true)};
    std::vector<ad::Var> leaves{x.re, x.im, w.re, w.im, b.re, b.im};
    auto build = [&]() { return sum_sq(model::complex_linear(x, w, b)); };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"complex_lstm", 1e-3, [](uint64_t seed) {
    const int T = 3, B = 1, D = 2, H = 2;
    auto x = model::CVar{ad::Var::leaf({T, B, D}, randn(T * B * D, seed, 0.6), true),
                         ad::Var::leaf({T, B, D}, randn(T * B * D, seed + 41, 0.6), true)};
    auto w = model::CVar{ad::Var::leaf({4 * H, D}, randn(4 * H * D, seed + 43, 0.4), true),
                         ad::Var::leaf({4 * H, D}, randn(4 * H * D, seed + 47, 0.4), true)};
    auto u = model::CVar{ad::Var::leaf({4 * H, H}, randn(4 * H * H, seed + 53, 0.4), true),
                         ad::Var::leaf({4 * H, H}, randn(4 * H * H, seed + 59, 0.4), true)};
    auto b = model::CVar{ad::Var::leaf({4 * H}, randn(4 * H, seed + 61, 0.2), true),
                         ad::Var::leaf({4 * H}, randn(4 * H, seed + 67, 0.2), true)};
    std::vector<ad::Var> leaves{x.re, x.im, w.re, w.im, u.re, u.im, b.re, b.im};
    auto build = [&]() { return sum_sq(model::complex_lstm(x, w, u, b)); };
    return check_full(leaves, build, 1e-4);
  }});

  checks.push_back({"composite_loss", 1e-3, [](uint64_t seed) {
    dsp::StftConfig cfg;
    dsp::BinauralWaveform clean;
    clean.left = data::synth_speech(seed + 1, 0.45, 16000.0);
    clean.right = data::synth_speech(seed + 2, 0.45, 16000.0);
    auto sl = dsp::stft(clean.left, cfg);
    auto sr = dsp::stft(clean.right, cfg);
    auto jitter = [&](const dsp::ComplexSpectrogram& base, uint64_t s2) {
      const int n = static_cast<int>(base.data.size());
      auto jr = randn(n, s2, 0.05), ji = randn(n, s2 + 7, 0.05);
      std::vector<double> re(static_cast<size_t>(n)), im(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        re[static_cast<size_t>(i)] = base.data[static_cast<size_t>(i)].real() + jr[static_cast<size_t>(i)];
        im[static_cast<size_t>(i)] = base.data[static_cast<size_t>(i)].imag() + ji[static_cast<size_t>(i)];
      }
      return dsp::SpecVar{ad::Var::leaf({base.bins, base.frames}, re, true),
                          ad::Var::leaf({base.bins, base.frames}, im, true), cfg,
                          base.signal_length};
    };
    auto hl = jitter(sl, seed + 100);
    auto hr = jitter(sr, seed + 200);
    std::vector<ad::Var> leaves{hl.re, hl.im, hr.re, hr.im};
    loss::LossOptions opts;
    auto build = [&]() { return loss::composite_graph(clean, sl, sr, hl, hr, opts).total; };
    return check_sampled(leaves, build, 24, seed + 5, 1e-5);
  }});

  checks.push_back({"toy_network", 1e-3, [](uint64_t seed) {
    dsp::StftConfig cfg;
    model::ModelConfig mc;
    mc.encoder_channels = {2, 4};
    mc.lstm_layers = 2;
    mc.lstm_hidden = 4;
    mc.linear_features = 4 * 64;
    mc.input_bins = 256;
    auto ckpt = model::init_parameters(mc, cfg, seed);
    dsp::BinauralWaveform clean;
    clean.left = data::synth_speech(seed + 1, 0.45, 16000.0);
    clean.right = data::synth_speech(seed + 2, 0.45, 16000.0);
    dsp::BinauralWaveform noisy = clean;
    const auto n1 = randn(static_cast<int>(clean.left.size()), seed + 3, 0.02);
    const auto n2 = randn(static_cast<int>(clean.left.size()), seed + 4, 0.02);
    for (size_t i = 0; i < noisy.left.size(); ++i) {
      noisy.left[i] += n1[i];
      noisy.right[i] += n2[i];
    }
    loss::LossOptions opts;
    std::vector<ad::Var> leaves;
    auto build = [&]() {
      auto ul = utterance_loss(ckpt, clean, noisy, opts, true);
      leaves = ul.leaves;
      return ul.graph.total;
    };
    // finite differences must perturb the checkpoint itself, so wrap build
    // to re-read parameters from ckpt each evaluation
    ad::Var out = build();
    ad::backward(out);
    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves)
      analytic.emplace_back(leaf.has_grad()
                                ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                : std::vector<double>(leaf.numel(), 0.0));
    int64_t total = 0;
    for (const auto& t : ckpt.tensors) total += 2 * t.numel();
    std::mt19937_64 g(seed + 6);
    double worst = 0.0;
    const double h = 1e-5;
    for (int s = 0; s < 24; ++s) {
      int64_t flat = static_cast<int64_t>(uniform01(g) * static_cast<double>(total));
      flat = std::min(flat, total - 1);
      size_t ti = 0;
      bool imag = false;
      int64_t rem = flat;
      for (; ti < ckpt.tensors.size(); ++ti) {
        const int64_t n = ckpt.tensors[ti].numel();
        if (rem < n) {
          imag = false;
          break;
        }
        rem -= n;
        if (rem < n) {
          imag = true;
          break;
        }
        rem -= n;
      }
      auto& vec = imag ? ckpt.tensors[ti].im : ckpt.tensors[ti].re;
      const double orig = vec[static_cast<size_t>(rem)];
      vec[static_cast<size_t>(rem)] = orig + h;
      const double fp = build().item();
      vec[static_cast<size_t>(rem)] = orig - h;
      const double fm = build().item();
      vec[static_cast<size_t>(rem)] = orig;
      const double an = analytic[2 * ti + (imag ? 1 : 0)][static_cast<size_t>(rem)];
      worst = std::max(worst, rel_err(an, (fp - fm) / (2.0 * h)));
    }
    return worst;
  }});

  return checks;
}

}  // namespace

std::vector<GradCheckReport> grad_check(const std::string& component, uint64_t seed) {
  std::vector<GradCheckReport> reports;
  bool matched = false;
  for (auto& c : build_checks()) {
    if (component != "all" && component != c.name) continue;
    matched = true;
    GradCheckReport r;
    r.component = c.name;
    r.threshold = c.threshold;
    r.worst_rel_error = c.run(seed);
    r.pass = r.worst_rel_error < c.threshold;
    reports.push_back(std::move(r));
  }
  if (!matched) throw std::invalid_argument("grad_check: unknown component " + component);
  return reports;
}

}  // namespace silp::engine
