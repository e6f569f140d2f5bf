// silp: binaural speech enhancement toolkit.
//
// Subcommands: synth (dataset synthesis), train, enhance, eval, gradcheck,
// plot. Every artifact records the seed and resolved configuration that
// produced it, so outputs can be regenerated exactly.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "silp/config.hpp"
#include "silp/engine.hpp"
#include "silp/eval.hpp"
#include "silp/model.hpp"
#include "silp/runtime.hpp"
#include "silp/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

bool g_json_logs = false;

void log_line(const std::string& event, const ordered_json& fields) {
  if (g_json_logs) {
    ordered_json j = fields;
    j["event"] = event;
    std::cout << j.dump() << "\n";
  } else {
    std::cout << event;
    for (const auto& [k, v] : fields.items()) std::cout << " " << k << "=" << v.dump();
    std::cout << "\n";
  }
}

std::string default_out_dir() {
  const char* env = std::getenv("SILP_OUT_DIR");
  return env ? env : "out";
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    out.push_back(csv.substr(pos, comma == std::string::npos ? comma : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int cmd_synth(const std::string& out_dir, int count, double duration, double sample_rate,
              const std::string& noise_csv, double snr_min, double snr_max,
              const std::string& splits_csv, uint64_t seed, const std::string& speech_dir,
              const std::string& hrir_dir, double spacing) {
  silp::data::BuildConfig cfg;
  cfg.out_dir = out_dir;
  cfg.count = count;
  cfg.duration_s = duration;
  cfg.sample_rate = sample_rate;
  cfg.noise_types = split_list(noise_csv);
  cfg.snr_min_db = snr_min;
  cfg.snr_max_db = snr_max;
  cfg.seed = seed;
  cfg.speech_dir = speech_dir;
  cfg.hrir_dir = hrir_dir;
  cfg.hrir_spacing_deg = spacing;
  cfg.splits.clear();
  for (const auto& part : split_list(splits_csv)) {
    const auto colon = part.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("--splits expects tag:fraction pairs, got " + part);
    cfg.splits.emplace_back(part.substr(0, colon), std::stod(part.substr(colon + 1)));
  }
  const auto manifest = silp::data::build_dataset(cfg);
  log_line("synth.done", {{"entries", manifest.entries.size()},
                          {"manifest", (fs::path(out_dir) / "manifest.json").string()},
                          {"seed", seed}});
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& out_path,
              const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& loss_kind, const std::string& log_path, long seed_flag) {
  auto cfg = silp::config::load_config(config_path, overrides);
  if (seed_flag >= 0) {
    cfg.seed = static_cast<uint64_t>(seed_flag);
    cfg.train.seed = cfg.seed;
  }
  if (loss_kind == "snr") {
    cfg.train.loss.weights = {1.0, 0.0, 0.0, 0.0};
  } else if (loss_kind != "silp") {
    throw std::invalid_argument("--loss must be silp or snr");
  }
  const auto manifest = silp::data::DatasetManifest::load(data_path);
  auto ckpt = silp::model::init_parameters(cfg.model, cfg.stft, cfg.seed);
  silp::engine::TrainConfig tc = cfg.train;
  tc.log_path = log_path;

  log_line("train.start", {{"entries", manifest.entries.size()},
                           {"parameters", ckpt.parameter_count()},
                           {"seed", cfg.seed},
                           {"loss", loss_kind}});
  auto result = silp::engine::train(std::move(ckpt), manifest, tc);
  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  result.best.save(out_path);
  {  // resolved-config echo beside the checkpoint
    std::ofstream f(out_path + ".config.json", std::ios::trunc);
    f << silp::config::echo(cfg) << "\n";
  }
  log_line("train.done", {{"best_epoch", result.best_epoch},
                          {"best_validation", result.best_validation},
                          {"epochs_run", result.log.size()},
                          {"stopped_early", result.stopped_early},
                          {"checkpoint", out_path}});
  return 0;
}

int cmd_enhance(const std::string& model_path, const std::string& in_path,
                const std::string& out_path) {
  const auto ckpt = silp::model::Checkpoint::load(model_path);
  auto w = silp::wav::read(in_path);
  silp::dsp::BinauralWaveform noisy;
  noisy.sample_rate = w.sample_rate;
  noisy.left = w.channels[0];
  noisy.right = w.channels.size() > 1 ? w.channels[1] : w.channels[0];
  if (w.sample_rate != ckpt.stft.sample_rate)
    throw std::runtime_error("enhance: input sample rate does not match the model");
  auto enhanced = silp::model::MaskNet::enhance(ckpt, noisy);
  silp::wav::write(out_path, silp::wav::make_stereo(enhanced.left, enhanced.right,
                                                    enhanced.sample_rate, w.format));
  log_line("enhance.done",
           {{"in", in_path}, {"out", out_path}, {"samples", enhanced.left.size()}});
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& model_path,
             const std::string& report_dir, const std::string& split, bool identity_mask) {
  const auto manifest = silp::data::DatasetManifest::load(data_path);
  const auto ckpt = silp::model::Checkpoint::load(model_path);
  silp::eval::EvalOptions opts;
  opts.identity_mask = identity_mask;
  const auto report = silp::eval::evaluate_dataset(manifest, ckpt, opts, split);
  silp::eval::emit_report(report, report_dir);
  for (const auto& a : report.aggregates)
    log_line("eval.bucket", {{"snr_db", a.snr_bucket_db},
                             {"count", a.count},
                             {"dfw_db", a.dfw_db},
                             {"ild_error_db", a.ild_error_db},
                             {"ipd_error_rad", a.ipd_error_rad},
                             {"stoi", a.stoi}});
  log_line("eval.done", {{"records", report.records.size()}, {"report", report_dir}});
  return 0;
}

int cmd_gradcheck(const std::string& component, uint64_t seed) {
  const auto reports = silp::engine::grad_check(component, seed);
  bool all_pass = true;
  std::printf("%-24s %14s %12s %6s\n", "component", "worst_rel_err", "threshold", "pass");
  for (const auto& r : reports) {
    std::printf("%-24s %14.3e %12.0e %6s\n", r.component.c_str(), r.worst_rel_error, r.threshold,
                r.pass ? "yes" : "NO");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_plot(const std::string& report_path, const std::string& out_dir) {
  auto report = silp::eval::load_report(report_path);
  report.aggregates = silp::eval::aggregate(report.records);
  silp::eval::emit_report(report, out_dir);
  log_line("plot.done", {{"out", out_dir}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"silp: binaural speech enhancement toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_flag("--json", g_json_logs, "machine-readable log lines");
  app.add_option("--threads", threads, "worker threads (0 = hardware)");

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize a binaural dataset");
  std::string out_dir = default_out_dir();
  int count = 200;
  double duration = 0.5, sample_rate = 16000.0, snr_min = -7.0, snr_max = 16.0, spacing = 5.0;
  std::string noise_csv = "wgn,ssn", splits_csv = "train:0.85,val:0.15";
  std::string speech_dir, hrir_dir;
  uint64_t synth_seed = 0;
  synth->add_option("--out", out_dir, "output directory");
  synth->add_option("--count", count, "number of utterances");
  synth->add_option("--duration", duration, "utterance length in seconds");
  synth->add_option("--sample-rate", sample_rate, "sample rate in Hz");
  synth->add_option("--noise", noise_csv, "comma list: wgn|ssn|file:<path>");
  synth->add_option("--snr-min", snr_min, "mean-SNR range lower edge (dB)");
  synth->add_option("--snr-max", snr_max, "mean-SNR range upper edge (dB)");
  synth->add_option("--splits", splits_csv, "tag:fraction pairs");
  synth->add_option("--seed", synth_seed, "dataset seed");
  synth->add_option("--speech-dir", speech_dir, "WAV corpus (default: built-in generator)");
  synth->add_option("--hrir-dir", hrir_dir, "azi_<deg>.wav set (default: spherical head)");
  synth->add_option("--spacing", spacing, "isotropic source spacing in degrees");

  // train
  auto* train = app.add_subcommand("train", "train an enhancement model");
  std::string data_path, ckpt_out = default_out_dir() + "/model.silp", config_path, train_log,
              loss_kind = "silp";
  std::vector<std::string> overrides;
  long train_seed = -1;
  train->add_option("--data", data_path, "dataset manifest")->required();
  train->add_option("--out", ckpt_out, "checkpoint output path");
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--set", overrides, "override key=value (repeatable)");
  train->add_option("--loss", loss_kind, "silp (four-term) or snr (alpha only)");
  train->add_option("--log", train_log, "training log (newline-delimited JSON)");
  train->add_option("--seed", train_seed, "seed override");

  // enhance
  auto* enhance = app.add_subcommand("enhance", "enhance a stereo WAV");
  std::string model_path, in_path, out_path;
  enhance->add_option("--model", model_path, "checkpoint")->required();
  enhance->add_option("--in", in_path, "noisy input WAV")->required();
  enhance->add_option("--out", out_path, "enhanced output WAV")->required();

  // eval
  auto* evalc = app.add_subcommand("eval", "evaluate a model over a manifest");
  std::string eval_data, eval_model, report_dir = default_out_dir() + "/report", eval_split;
  bool identity_mask = false;
  evalc->add_option("--data", eval_data, "dataset manifest")->required();
  evalc->add_option("--model", eval_model, "checkpoint")->required();
  evalc->add_option("--report", report_dir, "report output directory");
  evalc->add_option("--split", eval_split, "restrict to one split tag");
  evalc->add_flag("--identity-mask", identity_mask, "bypass the network (mask = 1)");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string component = "all";
  uint64_t gc_seed = 7;
  gradcheck->add_option("--component", component, "component name or 'all'");
  gradcheck->add_option("--seed", gc_seed, "seed");

  // plot
  auto* plot = app.add_subcommand("plot", "re-emit tables and plots from a report.json");
  std::string plot_report, plot_out = default_out_dir() + "/report";
  plot->add_option("--report", plot_report, "report.json path")->required();
  plot->add_option("--out", plot_out, "output directory");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) silp::runtime::set_threads(threads);

  try {
    if (*synth)
      return cmd_synth(out_dir, count, duration, sample_rate, noise_csv, snr_min, snr_max,
                       splits_csv, synth_seed, speech_dir, hrir_dir, spacing);
    if (*train)
      return cmd_train(data_path, ckpt_out, config_path, overrides, loss_kind, train_log,
                       train_seed);
    if (*enhance) return cmd_enhance(model_path, in_path, out_path);
    if (*evalc) return cmd_eval(eval_data, eval_model, report_dir, eval_split, identity_mask);
    if (*gradcheck) return cmd_gradcheck(component, gc_seed);
    if (*plot) return cmd_plot(plot_report, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
