#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "silp/data.hpp"
#include "silp/runtime.hpp"
#include "silp/wav.hpp"

namespace silp::data {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

uint64_t entry_seed(uint64_t seed, uint64_t index) {
  // splitmix64 over the combined stream id
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double mean_snr_db(const dsp::BinauralWaveform& speech, const dsp::BinauralWaveform& noise) {
  auto power = [](const std::vector<double>& x) {
    double e = 0.0;
    for (double v : x) e += v * v;
    return e;
  };
  const double sl = power(speech.left), sr = power(speech.right);
  const double nl = power(noise.left), nr = power(noise.right);
  if (sl <= 0 || sr <= 0 || nl <= 0 || nr <= 0)
    throw std::invalid_argument("mean_snr_db: silent input");
  return 5.0 * std::log10((sl * sr) / (nl * nr));
}

MixResult mix_at_snr(const dsp::BinauralWaveform& speech, const dsp::BinauralWaveform& noise,
                     double target_mean_snr_db) {
  speech.validate();
  noise.validate();
  if (speech.samples() != noise.samples())
    throw std::invalid_argument("mix_at_snr: length mismatch");
  auto power = [](const std::vector<double>& x) {
    double e = 0.0;
    for (double v : x) e += v * v;
    return e;
  };
  const double sl = power(speech.left), sr = power(speech.right);
  const double nl = power(noise.left), nr = power(noise.right);
  if (sl <= 0 || sr <= 0) throw std::invalid_argument("mix_at_snr: silent speech");
  if (nl <= 0 || nr <= 0) throw std::invalid_argument("mix_at_snr: silent noise");

  // mean SNR = 5 log10(sl*sr / (g^4 nl*nr)) = target  =>  closed-form g
  const double g = std::pow(sl * sr / (nl * nr * std::pow(10.0, target_mean_snr_db / 5.0)), 0.25);

  MixResult out;
  out.noise_scale = g;
  out.mixture.sample_rate = speech.sample_rate;
  out.mixture.left.resize(speech.samples());
  out.mixture.right.resize(speech.samples());
  for (size_t i = 0; i < speech.samples(); ++i) {
    out.mixture.left[i] = speech.left[i] + g * noise.left[i];
    out.mixture.right[i] = speech.right[i] + g * noise.right[i];
  }
  out.achieved_snr_db = 5.0 * std::log10((sl * sr) / (g * g * nl * g * g * nr));
  return out;
}

std::vector<const ManifestEntry*> DatasetManifest::split(const std::string& tag) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == tag) out.push_back(&e);
  return out;
}

namespace {

json config_to_json(const BuildConfig& c) {
  json j;
  j["out_dir"] = c.out_dir;
  j["count"] = c.count;
  j["duration_s"] = c.duration_s;
  j["sample_rate"] = c.sample_rate;
  j["noise_types"] = c.noise_types;
  j["snr_min_db"] = c.snr_min_db;
  j["snr_max_db"] = c.snr_max_db;
  j["azimuth_min_deg"] = c.azimuth_min_deg;
  j["azimuth_max_deg"] = c.azimuth_max_deg;
  json splits = json::array();
  for (const auto& [tag, frac] : c.splits) splits.push_back({{"tag", tag}, {"fraction", frac}});
  j["splits"] = splits;
  j["hrir_spacing_deg"] = c.hrir_spacing_deg;
  j["speech_dir"] = c.speech_dir;
  j["hrir_dir"] = c.hrir_dir;
  j["seed"] = c.seed;
  return j;
}

BuildConfig config_from_json(const json& j) {
  BuildConfig c;
  c.out_dir = j.at("out_dir").get<std::string>();
  c.count = j.at("count").get<int>();
  c.duration_s = j.at("duration_s").get<double>();
  c.sample_rate = j.at("sample_rate").get<double>();
  c.noise_types = j.at("noise_types").get<std::vector<std::string>>();
  c.snr_min_db = j.at("snr_min_db").get<double>();
  c.snr_max_db = j.at("snr_max_db").get<double>();
  c.azimuth_min_deg = j.at("azimuth_min_deg").get<double>();
  c.azimuth_max_deg = j.at("azimuth_max_deg").get<double>();
  c.splits.clear();
  for (const auto& s : j.at("splits"))
    c.splits.emplace_back(s.at("tag").get<std::string>(), s.at("fraction").get<double>());
  c.hrir_spacing_deg = j.at("hrir_spacing_deg").get<double>();
  c.speech_dir = j.at("speech_dir").get<std::string>();
  c.hrir_dir = j.at("hrir_dir").get<std::string>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& g, double lo, double hi) { return lo + (hi - lo) * uniform01(g); }

}  // namespace

void DatasetManifest::save(const std::string& path) const {
  json j;
  j["version"] = 1;
  j["config"] = config_to_json(config);
  json arr = json::array();
  for (const auto& e : entries)
    arr.push_back({{"id", e.id},
                   {"clean", e.clean_path},
                   {"noisy", e.noisy_path},
                   {"azimuth_deg", e.azimuth_deg},
                   {"distance_m", e.distance_m},
                   {"noise_type", e.noise_type},
                   {"target_snr_db", e.target_snr_db},
                   {"split", e.split},
                   {"seed", e.seed}});
  j["entries"] = arr;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("manifest: cannot write " + path);
  f << j.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot open " + path);
  json j = json::parse(f);
  DatasetManifest m;
  m.config = config_from_json(j.at("config"));
  for (const auto& e : j.at("entries")) {
    ManifestEntry me;
    me.id = e.at("id").get<std::string>();
    me.clean_path = e.at("clean").get<std::string>();
    me.noisy_path = e.at("noisy").get<std::string>();
    me.azimuth_deg = e.at("azimuth_deg").get<double>();
    me.distance_m = e.at("distance_m").get<double>();
    me.noise_type = e.at("noise_type").get<std::string>();
    me.target_snr_db = e.at("target_snr_db").get<double>();
    me.split = e.at("split").get<std::string>();
    me.seed = e.at("seed").get<uint64_t>();
    m.entries.push_back(std::move(me));
  }
  return m;
}

DatasetManifest build_dataset(const BuildConfig& cfg) {
  if (cfg.count <= 0) throw std::invalid_argument("build_dataset: count must be positive");
  if (cfg.out_dir.empty()) throw std::invalid_argument("build_dataset: out_dir required");
  if (cfg.noise_types.empty()) throw std::invalid_argument("build_dataset: no noise types");

  fs::create_directories(fs::path(cfg.out_dir) / "clean");
  fs::create_directories(fs::path(cfg.out_dir) / "noisy");

  const HrirSet hrirs = cfg.hrir_dir.empty()
                            ? HrirSet::synthetic(cfg.sample_rate, cfg.hrir_spacing_deg)
                            : HrirSet::load(cfg.hrir_dir);

  // user corpus, if any
  std::vector<std::string> speech_files;
  if (!cfg.speech_dir.empty()) {
    for (const auto& e : fs::directory_iterator(cfg.speech_dir))
      if (e.path().extension() == ".wav") speech_files.push_back(e.path().string());
    std::sort(speech_files.begin(), speech_files.end());
    if (speech_files.empty())
      throw std::runtime_error("build_dataset: no .wav files in " + cfg.speech_dir);
  }

  std::vector<std::unique_ptr<NoiseSource>> sources;
  for (const auto& t : cfg.noise_types) sources.push_back(make_noise_source(t, cfg.sample_rate));

  // deterministic split assignment over a seeded shuffle
  std::vector<int> order(static_cast<size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) order[static_cast<size_t>(i)] = i;
  std::mt19937_64 shuffle_rng(entry_seed(cfg.seed, 0xA11));
  for (int i = cfg.count - 1; i > 0; --i) {
    const int j = static_cast<int>(uniform01(shuffle_rng) * (i + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  std::vector<std::string> split_of(static_cast<size_t>(cfg.count));
  {
    size_t pos = 0;
    double acc = 0.0;
    for (size_t si = 0; si < cfg.splits.size(); ++si) {
      acc += cfg.splits[si].second;
      const size_t until = si + 1 == cfg.splits.size()
                               ? static_cast<size_t>(cfg.count)
                               : static_cast<size_t>(std::lround(acc * cfg.count));
      for (; pos < until && pos < static_cast<size_t>(cfg.count); ++pos)
        split_of[static_cast<size_t>(order[pos])] = cfg.splits[si].first;
    }
  }

  DatasetManifest manifest;
  manifest.config = cfg;
  manifest.entries.resize(static_cast<size_t>(cfg.count));

  const int n = static_cast<int>(std::lround(cfg.duration_s * cfg.sample_rate));
  runtime::parallel_for(cfg.count, [&](int64_t idx) {
    const int i = static_cast<int>(idx);
    const uint64_t eseed = entry_seed(cfg.seed, static_cast<uint64_t>(i));
    std::mt19937_64 rng(eseed);

    ManifestEntry e;
    char id[16];
    std::snprintf(id, sizeof(id), "utt_%04d", i);
    e.id = id;
    e.seed = eseed;
    e.split = split_of[static_cast<size_t>(i)];
    e.azimuth_deg = uniform(rng, cfg.azimuth_min_deg, cfg.azimuth_max_deg);
    e.distance_m = uniform01(rng) < 0.5 ? 0.8 : 3.0;
    const size_t noise_idx = static_cast<size_t>(uniform01(rng) * sources.size());
    e.noise_type = cfg.noise_types[std::min(noise_idx, sources.size() - 1)];
    e.target_snr_db = uniform(rng, cfg.snr_min_db, cfg.snr_max_db);

    // clean source material
    std::vector<double> mono;
    if (speech_files.empty()) {
      mono = synth_speech(entry_seed(eseed, 1), cfg.duration_s, cfg.sample_rate);
    } else {
      const auto w = wav::read(speech_files[static_cast<size_t>(i) % speech_files.size()]);
      mono = w.channels[0];
      mono.resize(static_cast<size_t>(n), 0.0);
    }

    // spatialize; distance maps to gain and delay in the synthetic model
    auto s = spatialize(mono, hrirs.nearest(e.azimuth_deg));
    const double dist_gain = 0.8 / e.distance_m;
    for (auto& v : s.left) v *= dist_gain;
    for (auto& v : s.right) v *= dist_gain;

    const auto& source = *sources[std::min(noise_idx, sources.size() - 1)];
    auto v = isotropic_noise(cfg.duration_s, source, hrirs, cfg.hrir_spacing_deg,
                             entry_seed(eseed, 2));
    auto mixed = mix_at_snr(s, v, e.target_snr_db);

    e.clean_path = (fs::path(cfg.out_dir) / "clean" / (e.id + std::string(".wav"))).string();
    e.noisy_path = (fs::path(cfg.out_dir) / "noisy" / (e.id + std::string(".wav"))).string();
    wav::write(e.clean_path, wav::make_stereo(s.left, s.right, cfg.sample_rate));
    wav::write(e.noisy_path,
               wav::make_stereo(mixed.mixture.left, mixed.mixture.right, cfg.sample_rate));
    manifest.entries[static_cast<size_t>(i)] = std::move(e);
  });

  manifest.save((fs::path(cfg.out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace silp::data
