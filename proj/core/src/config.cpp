#include "silp/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace silp::config {

using json = nlohmann::ordered_json;

namespace {

json default_json() {
  const FullConfig d;
  json j;
  j["stft"] = {{"fft_length", d.stft.fft_length},
               {"window_length", d.stft.window_length},
               {"hop_length", d.stft.hop_length},
               {"sample_rate", d.stft.sample_rate}};
  j["model"] = {{"encoder_channels", d.model.encoder_channels},
                {"kernel", {d.model.kernel_freq, d.model.kernel_time}},
                {"stride", {d.model.stride_freq, d.model.stride_time}},
                {"lstm_layers", d.model.lstm_layers},
                {"lstm_hidden", d.model.lstm_hidden},
                {"bidirectional", d.model.bidirectional},
                {"linear_features", d.model.linear_features},
                {"input_bins", d.model.input_bins}};
  j["loss"] = {{"alpha", d.train.loss.weights.alpha},
               {"beta", d.train.loss.weights.beta},
               {"gamma", d.train.loss.weights.gamma},
               {"kappa", d.train.loss.weights.kappa},
               {"ibm_threshold_db", d.train.loss.ibm_threshold_db},
               {"split_hz", d.train.loss.split_hz}};
  j["train"] = {{"learning_rate", d.train.learning_rate},
                {"max_epochs", d.train.max_epochs},
                {"patience", d.train.patience},
                {"batch_size", d.train.batch_size},
                {"scheduler", {{"factor", d.train.scheduler.factor},
                               {"stagnation", d.train.scheduler.stagnation}}},
                {"seed", d.train.seed}};
  j["seed"] = d.seed;
  return j;
}

// Recursively checks `value` against the default tree: unknown keys and
// type category mismatches are collected, known scalars overwrite defaults.
void merge_checked(json& base, const json& value, const std::string& path,
                   std::vector<std::string>& errors) {
  if (!value.is_object()) {
    errors.push_back(path.empty() ? "top level must be an object"
                                  : path + ": expected an object");
    return;
  }
  for (const auto& [key, val] : value.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) {
      errors.push_back("unknown key: " + p);
      continue;
    }
    json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, val, p, errors);
    } else if (slot.is_array()) {
      if (!val.is_array()) {
        errors.push_back(p + ": expected an array");
        continue;
      }
      slot = val;
    } else if (slot.is_boolean()) {
      if (!val.is_boolean()) {
        errors.push_back(p + ": expected a boolean");
        continue;
      }
      slot = val;
    } else if (slot.is_number()) {
      if (!val.is_number()) {
        errors.push_back(p + ": expected a number");
        continue;
      }
      slot = val;
    } else {
      slot = val;
    }
  }
}

json parse_scalar(const std::string& text) {
  // try JSON first (numbers, booleans, arrays); fall back to a string
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

void apply_override(json& base, const std::string& kv, std::vector<std::string>& errors) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) {
    errors.push_back("override must be key=value: " + kv);
    return;
  }
  const std::string path = kv.substr(0, eq);
  const json value = parse_scalar(kv.substr(eq + 1));
  json* slot = &base;
  std::string walked;
  size_t pos = 0;
  while (true) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    walked = walked.empty() ? key : walked + "." + key;
    if (!slot->contains(key)) {
      errors.push_back("unknown key: " + walked);
      return;
    }
    slot = &(*slot)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  if (slot->is_object()) {
    errors.push_back(walked + ": cannot assign to a section");
    return;
  }
  if (slot->is_number() && !value.is_number()) {
    errors.push_back(walked + ": expected a number");
    return;
  }
  if (slot->is_boolean() && !value.is_boolean()) {
    errors.push_back(walked + ": expected a boolean");
    return;
  }
  *slot = value;
}

FullConfig from_json(const json& j, std::vector<std::string>& errors) {
  FullConfig c;
  c.stft.fft_length = j["stft"]["fft_length"].get<int>();
  c.stft.window_length = j["stft"]["window_length"].get<int>();
  c.stft.hop_length = j["stft"]["hop_length"].get<int>();
  c.stft.sample_rate = j["stft"]["sample_rate"].get<double>();
  c.model.encoder_channels = j["model"]["encoder_channels"].get<std::vector<int>>();
  c.model.kernel_freq = j["model"]["kernel"][0].get<int>();
  c.model.kernel_time = j["model"]["kernel"][1].get<int>();
  c.model.stride_freq = j["model"]["stride"][0].get<int>();
  c.model.stride_time = j["model"]["stride"][1].get<int>();
  c.model.lstm_layers = j["model"]["lstm_layers"].get<int>();
  c.model.lstm_hidden = j["model"]["lstm_hidden"].get<int>();
  c.model.bidirectional = j["model"]["bidirectional"].get<bool>();
  c.model.linear_features = j["model"]["linear_features"].get<int>();
  c.model.input_bins = j["model"]["input_bins"].get<int>();
  c.train.loss.weights.alpha = j["loss"]["alpha"].get<double>();
  c.train.loss.weights.beta = j["loss"]["beta"].get<double>();
  c.train.loss.weights.gamma = j["loss"]["gamma"].get<double>();
  c.train.loss.weights.kappa = j["loss"]["kappa"].get<double>();
  c.train.loss.ibm_threshold_db = j["loss"]["ibm_threshold_db"].get<double>();
  c.train.loss.split_hz = j["loss"]["split_hz"].get<double>();
  c.train.learning_rate = j["train"]["learning_rate"].get<double>();
  c.train.max_epochs = j["train"]["max_epochs"].get<int>();
  c.train.patience = j["train"]["patience"].get<int>();
  c.train.batch_size = j["train"]["batch_size"].get<int>();
  c.train.scheduler.factor = j["train"]["scheduler"]["factor"].get<double>();
  c.train.scheduler.stagnation = j["train"]["scheduler"]["stagnation"].get<int>();
  c.train.seed = j["train"]["seed"].get<uint64_t>();
  c.seed = j["seed"].get<uint64_t>();

  // domain validation, reported with key names
  auto guard = [&](const std::function<void()>& f, const std::string& key) {
    try {
      f();
    } catch (const std::exception& e) {
      errors.push_back(key + ": " + e.what());
    }
  };
  guard([&] { c.stft.validate(); }, "stft");
  guard([&] { c.model.validate(); }, "model");
  guard([&] { c.train.validate(); }, "train");
  if (c.train.learning_rate <= 0) errors.push_back("train.learning_rate: must be positive");
  return c;
}

}  // namespace

FullConfig defaults() {
  std::vector<std::string> errors;
  auto c = from_json(default_json(), errors);
  return c;
}

FullConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json base = default_json();
  std::vector<std::string> errors;
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    json user;
    try {
      user = json::parse(f, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
    }
    if (user.is_null()) user = json::object();
    merge_checked(base, user, "", errors);
  }
  for (const auto& kv : overrides) apply_override(base, kv, errors);

  FullConfig c;
  if (errors.empty()) c = from_json(base, errors);
  if (!errors.empty()) {
    std::ostringstream os;
    os << "config: " << errors.size() << " violation(s):";
    for (const auto& e : errors) os << "\n  - " << e;
    throw std::invalid_argument(os.str());
  }
  return c;
}

std::string echo(const FullConfig& cfg) {
  json j = default_json();
  j["stft"] = {{"fft_length", cfg.stft.fft_length},
               {"window_length", cfg.stft.window_length},
               {"hop_length", cfg.stft.hop_length},
               {"sample_rate", cfg.stft.sample_rate}};
  j["model"] = {{"encoder_channels", cfg.model.encoder_channels},
                {"kernel", {cfg.model.kernel_freq, cfg.model.kernel_time}},
                {"stride", {cfg.model.stride_freq, cfg.model.stride_time}},
                {"lstm_layers", cfg.model.lstm_layers},
                {"lstm_hidden", cfg.model.lstm_hidden},
                {"bidirectional", cfg.model.bidirectional},
                {"linear_features", cfg.model.linear_features},
                {"input_bins", cfg.model.input_bins}};
  j["loss"] = {{"alpha", cfg.train.loss.weights.alpha},
               {"beta", cfg.train.loss.weights.beta},
               {"gamma", cfg.train.loss.weights.gamma},
               {"kappa", cfg.train.loss.weights.kappa},
               {"ibm_threshold_db", cfg.train.loss.ibm_threshold_db},
               {"split_hz", cfg.train.loss.split_hz}};
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"max_epochs", cfg.train.max_epochs},
                {"patience", cfg.train.patience},
                {"batch_size", cfg.train.batch_size},
                {"scheduler", {{"factor", cfg.train.scheduler.factor},
                               {"stagnation", cfg.train.scheduler.stagnation}}},
                {"seed", cfg.train.seed}};
  j["seed"] = cfg.seed;
  return j.dump(2);
}

}  // namespace silp::config
