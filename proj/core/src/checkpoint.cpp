#include "silp/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "model_layout.hpp"

namespace silp::model {

using json = nlohmann::ordered_json;

int ModelConfig::bottleneck_freq() const {
  int f = input_bins;
  for (int i = 0; i < depth(); ++i) f /= stride_freq;
  return f;
}

void ModelConfig::validate() const {
  if (encoder_channels.empty()) throw std::invalid_argument("model: encoder_channels empty");
  for (int c : encoder_channels)
    if (c <= 0) throw std::invalid_argument("model: encoder channel counts must be positive");
  if (kernel_freq <= 0 || kernel_time <= 0 || stride_freq <= 0)
    throw std::invalid_argument("model: kernel/stride must be positive");
  if (stride_time != 1) throw std::invalid_argument("model: time stride must be 1");
  if (lstm_hidden <= 0) throw std::invalid_argument("model: lstm_hidden must be positive");
  if (lstm_layers <= 0) throw std::invalid_argument("model: lstm_layers must be positive");
  if (bidirectional && lstm_layers % 2 != 0)
    throw std::invalid_argument(
        "model: a bidirectional stack pairs directional layers; lstm_layers must be even");
  int f = input_bins;
  for (int i = 0; i < depth(); ++i) {
    if (f % stride_freq != 0)
      throw std::invalid_argument("model: input_bins not divisible by stride_freq^depth");
    f /= stride_freq;
  }
  if (f <= 0) throw std::invalid_argument("model: encoder collapses the frequency axis");
  const int features = encoder_channels.back() * f;
  if (linear_features != features) {
    std::ostringstream os;
    os << "model: linear_features (" << linear_features << ") must equal C_last * F' = "
       << encoder_channels.back() << " * " << f << " = " << features;
    throw std::invalid_argument(os.str());
  }
}

int64_t ParamTensor::numel() const {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

int Checkpoint::find(const std::string& name) const {
  for (size_t i = 0; i < tensors.size(); ++i)
    if (tensors[i].name == name) return static_cast<int>(i);
  return -1;
}

int64_t Checkpoint::parameter_count() const {
  int64_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

namespace detail {

std::vector<TensorSpec> model_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<TensorSpec> specs;
  const int depth = cfg.depth();
  std::vector<int> ch{1};
  ch.insert(ch.end(), cfg.encoder_channels.begin(), cfg.encoder_channels.end());
  const int kf = cfg.kernel_freq, kt = cfg.kernel_time;
  const int h = cfg.lstm_hidden;

  auto uniform = [&](std::string name, std::vector<int> shape, std::vector<std::string> axes,
                     int fan_in) {
    specs.push_back({std::move(name), std::move(shape), std::move(axes),
                     1.0 / std::sqrt(static_cast<double>(fan_in)), 0.0, 0.0});
  };
  auto constant = [&](std::string name, std::vector<int> shape, std::vector<std::string> axes,
                      double re, double im) {
    specs.push_back({std::move(name), std::move(shape), std::move(axes), 0.0, re, im});
  };

  for (const char* ear : {"l", "r"})
    for (int i = 0; i < depth; ++i) {
      const std::string base = std::string("enc.") + ear + std::to_string(i);
      uniform(base + ".w", {ch[i + 1], ch[i], kf, kt}, {"out_ch", "in_ch", "freq", "time"},
              ch[i] * kf * kt);
      uniform(base + ".b", {ch[i + 1]}, {"out_ch"}, ch[i] * kf * kt);
      constant(base + ".bn.gamma", {ch[i + 1]}, {"ch"}, 1.0, 1.0);
      constant(base + ".bn.beta", {ch[i + 1]}, {"ch"}, 0.0, 0.0);
      constant(base + ".prelu", {1}, {"scalar"}, 0.25, 0.25);
    }

  const int levels = cfg.lstm_levels();
  const int dir_feat = cfg.bidirectional ? 2 * h : h;
  for (int level = 0; level < levels; ++level) {
    const int din = level == 0 ? 2 * cfg.encoder_channels.back() : dir_feat;
    const int n_dirs = cfg.bidirectional ? 2 : 1;
    for (int dir = 0; dir < n_dirs; ++dir) {
      const std::string base =
          "lstm" + std::to_string(level) + (dir == 0 ? ".fwd" : ".bwd");
      uniform(base + ".w", {4 * h, din}, {"gates", "in"}, h);
      uniform(base + ".u", {4 * h, h}, {"gates", "hidden"}, h);
      uniform(base + ".b", {4 * h}, {"gates"}, h);
    }
  }

  const int c_last = cfg.encoder_channels.back();
  uniform("proj.w", {dir_feat, 2 * c_last}, {"in", "out"}, dir_feat);
  uniform("proj.b", {2 * c_last}, {"out"}, dir_feat);

  for (const char* ear : {"l", "r"})
    for (int j = 0; j < depth; ++j) {
      const std::string base = std::string("dec.") + ear + std::to_string(j);
      const int cin = ch[depth - j];
      const int cout = ch[depth - j - 1];
      uniform(base + ".w", {cin, cout, kf, kt}, {"in_ch", "out_ch", "freq", "time"},
              cin * kf * kt);
      uniform(base + ".b", {cout}, {"out_ch"}, cin * kf * kt);
      if (j < depth - 1) {
        constant(base + ".bn.gamma", {cout}, {"ch"}, 1.0, 1.0);
        constant(base + ".bn.beta", {cout}, {"ch"}, 0.0, 0.0);
        constant(base + ".prelu", {1}, {"scalar"}, 0.25, 0.25);
      }
    }
  return specs;
}

}  // namespace detail

namespace {

// Fully specified uniform draw in [-s, s) from raw mt19937_64 output.
double draw_uniform(std::mt19937_64& g, double s) {
  const double u = static_cast<double>(g() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * s;
}

json config_json(const ModelConfig& m, const dsp::StftConfig& s, uint64_t seed) {
  json j;
  j["model"] = {{"encoder_channels", m.encoder_channels},
                {"kernel", {m.kernel_freq, m.kernel_time}},
                {"stride", {m.stride_freq, m.stride_time}},
                {"lstm_layers", m.lstm_layers},
                {"lstm_hidden", m.lstm_hidden},
                {"bidirectional", m.bidirectional},
                {"linear_features", m.linear_features},
                {"input_bins", m.input_bins}};
  j["stft"] = {{"fft_length", s.fft_length},
               {"window_length", s.window_length},
               {"hop_length", s.hop_length},
               {"sample_rate", s.sample_rate}};
  j["seed"] = seed;
  return j;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  m.kernel_freq = j.at("kernel").at(0).get<int>();
  m.kernel_time = j.at("kernel").at(1).get<int>();
  m.stride_freq = j.at("stride").at(0).get<int>();
  m.stride_time = j.at("stride").at(1).get<int>();
  m.lstm_layers = j.at("lstm_layers").get<int>();
  m.lstm_hidden = j.at("lstm_hidden").get<int>();
  m.bidirectional = j.at("bidirectional").get<bool>();
  m.linear_features = j.at("linear_features").get<int>();
  m.input_bins = j.at("input_bins").get<int>();
  return m;
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void append_f32(std::string& out, const std::vector<double>& v) {
  for (double d : v) {
    const float f = static_cast<float>(d);
    char raw[4];
    std::memcpy(raw, &f, 4);
    out.append(raw, 4);
  }
}

void read_f32(const char* p, size_t n, std::vector<double>& out) {
  out.resize(n);
  for (size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, p + 4 * i, 4);
    out[i] = static_cast<double>(f);
  }
}

}  // namespace

std::string config_hash(const ModelConfig& cfg, const dsp::StftConfig& stft) {
  const std::string canon = config_json(cfg, stft, 0).dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(canon)));
  return std::string(buf);
}

Checkpoint init_parameters(const ModelConfig& cfg, const dsp::StftConfig& stft, uint64_t seed) {
  cfg.validate();
  stft.validate();
  Checkpoint ckpt;
  ckpt.model = cfg;
  ckpt.stft = stft;
  ckpt.seed = seed;
  ckpt.config_hash = config_hash(cfg, stft);
  std::mt19937_64 g(seed);
  for (const auto& spec : detail::model_layout(cfg)) {
    ParamTensor t;
    t.name = spec.name;
    t.shape = spec.shape;
    t.axes = spec.axes;
    const auto n = static_cast<size_t>(t.numel());
    t.re.resize(n);
    t.im.resize(n);
    if (spec.init_scale > 0) {
      for (auto& v : t.re) v = draw_uniform(g, spec.init_scale);
      for (auto& v : t.im) v = draw_uniform(g, spec.init_scale);
    } else {
      std::fill(t.re.begin(), t.re.end(), spec.const_re);
      std::fill(t.im.begin(), t.im.end(), spec.const_im);
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void Checkpoint::save(const std::string& path) const {
  json header;
  header["format"] = 1;
  header["config"] = config_json(model, stft, seed);
  header["config_hash"] = config_hash;
  header["optimizer"] = {{"present", has_optimizer}, {"step", optimizer_step}};
  json dir = json::array();
  int64_t offset = 0;
  for (const auto& t : tensors) {
    dir.push_back({{"name", t.name}, {"shape", t.shape}, {"axes", t.axes}, {"offset", offset}});
    offset += 2 * t.numel() * 4;
  }
  header["tensors"] = dir;

  std::string payload;
  for (const auto& t : tensors) {
    append_f32(payload, t.re);
    append_f32(payload, t.im);
  }
  if (has_optimizer) {
    for (const auto& t : opt_m) {
      append_f32(payload, t.re);
      append_f32(payload, t.im);
    }
    for (const auto& t : opt_v) {
      append_f32(payload, t.re);
      append_f32(payload, t.im);
    }
  }

  const std::string head = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write("SILPCKPT", 8);
  const uint32_t hlen = static_cast<uint32_t>(head.size());
  char raw[4];
  for (int i = 0; i < 4; ++i) raw[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
  f.write(raw, 4);
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || bytes.compare(0, 8, "SILPCKPT") != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i)
    hlen |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  if (bytes.size() < 12 + hlen) throw std::runtime_error("checkpoint: truncated header");
  const json header = json::parse(bytes.substr(12, hlen));
  if (header.at("format").get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported format version");

  Checkpoint ckpt;
  const json& cfg = header.at("config");
  ckpt.model = model_from_json(cfg.at("model"));
  ckpt.stft.fft_length = cfg.at("stft").at("fft_length").get<int>();
  ckpt.stft.window_length = cfg.at("stft").at("window_length").get<int>();
  ckpt.stft.hop_length = cfg.at("stft").at("hop_length").get<int>();
  ckpt.stft.sample_rate = cfg.at("stft").at("sample_rate").get<double>();
  ckpt.seed = cfg.at("seed").get<uint64_t>();
  ckpt.config_hash = header.at("config_hash").get<std::string>();
  ckpt.has_optimizer = header.at("optimizer").at("present").get<bool>();
  ckpt.optimizer_step = header.at("optimizer").at("step").get<int64_t>();

  const char* p = bytes.data() + 12 + hlen;
  const char* end = bytes.data() + bytes.size();
  auto take = [&](ParamTensor& t) {
    const auto n = static_cast<size_t>(t.numel());
    if (p + 8 * n > end) throw std::runtime_error("checkpoint: truncated payload");
    read_f32(p, n, t.re);
    read_f32(p + 4 * n, n, t.im);
    p += 8 * n;
  };
  for (const auto& e : header.at("tensors")) {
    ParamTensor t;
    t.name = e.at("name").get<std::string>();
    t.shape = e.at("shape").get<std::vector<int>>();
    t.axes = e.at("axes").get<std::vector<std::string>>();
    take(t);
    ckpt.tensors.push_back(std::move(t));
  }
  if (ckpt.has_optimizer) {
    for (const auto& base : ckpt.tensors) {
      ParamTensor t;
      t.name = base.name;
      t.shape = base.shape;
      t.axes = base.axes;
      take(t);
      ckpt.opt_m.push_back(std::move(t));
    }
    for (const auto& base : ckpt.tensors) {
      ParamTensor t;
      t.name = base.name;
      t.shape = base.shape;
      t.axes = base.axes;
      take(t);
      ckpt.opt_v.push_back(std::move(t));
    }
  }
  return ckpt;
}

}  // namespace silp::model
