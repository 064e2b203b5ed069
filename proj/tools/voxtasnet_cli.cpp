// voxtasnet: stereo singing-voice cancellation engine and evaluation tools.
//
// Exit codes: 0 success, 1 domain error (bad audio, config, weights, data),
// 2 usage error (unknown flag, missing argument).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "voxtasnet/voxtasnet.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

vtn::Model open_model(const std::string& weights, const std::string& config_path) {
  if (config_path.empty()) return vtn::load_model(weights);
  const vtn::ModelConfig cfg = vtn::load_config(config_path);
  return vtn::load_model(weights, &cfg);
}

std::string db(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct SeparateArgs {
  std::string model, input, output, config, format = "float32";
  bool streaming = false;
  std::size_t block = 4096;
};

int run_separate(const SeparateArgs& a) {
  const vtn::Model model = open_model(a.model, a.config);
  const vtn::AudioClip mix = vtn::read_wav(a.input);
  if (mix.channels() != 2) {
    throw vtn::ShapeError("input '" + a.input + "' has " + std::to_string(mix.channels()) +
                          " channel(s); a stereo (2-channel) file is required");
  }
  if (mix.sample_rate() != model.config().sample_rate) {
    throw vtn::RateError("input '" + a.input + "' is " + std::to_string(mix.sample_rate()) + " Hz; the model runs at " +
                         std::to_string(model.config().sample_rate) + " Hz and no resampling is done");
  }
  vtn::AudioClip out;
  if (a.streaming) {
    const std::size_t la = model.lookahead_samples();
    std::cerr << "streaming: block " << a.block << " samples, look-ahead " << la << " samples ("
              << 1000.0 * static_cast<double>(la) / model.config().sample_rate << " ms)\n";
    out = vtn::run_streaming(model, mix, a.block);
  } else {
    out = model.forward_offline(mix);
  }
  vtn::write_wav(a.output, out, a.format == "int16" ? vtn::SampleFormat::Int16 : vtn::SampleFormat::Float32);
  return kOk;
}

struct EvalArgs {
  std::string model, dataset, report, config;
  double window = 1.5, hop = 0.75;
  bool mono = false, streaming = false, loss = false, no_filter = false;
  std::size_t block = 4096;
  unsigned threads = 1;
  vtn::SilenceOptions silence;
};

int run_eval(const EvalArgs& a) {
  const vtn::Model model = open_model(a.model, a.config);
  const auto entries = vtn::scan_dataset(a.dataset);

  std::vector<vtn::TrackEntry> selected = entries;
  std::vector<std::pair<std::string, double>> filtered;
  std::vector<std::pair<std::string, std::string>> unreadable;
  if (!a.no_filter) {
    const auto f = vtn::filter_dataset(entries, a.silence);
    selected = f.kept;
    for (const auto& [e, r] : f.removed) filtered.emplace_back(e.id, r);
    for (const auto& [e, why] : f.failed) unreadable.emplace_back(e.id, why);
  }
  if (selected.empty()) {
    throw vtn::EmptyInput("dataset '" + a.dataset + "' has no tracks left to evaluate" +
                          (a.no_filter ? "" : " after silence filtering"));
  }

  vtn::Separator sep = a.streaming ? vtn::streaming_separator(model, a.block) : vtn::offline_separator(model);
  if (a.mono) sep = vtn::mono_emulation(sep);

  vtn::EvalOptions opt;
  opt.window_s = a.window;
  opt.hop_s = a.hop;
  opt.mono_emulation = a.mono;
  opt.streaming = a.streaming;
  opt.block = a.block;
  opt.compute_loss = a.loss;
  opt.threads = a.threads;
  vtn::EvalReport report = vtn::evaluate(sep, selected, opt, model.config().sample_rate);
  report.filtered = filtered;
  for (auto& u : unreadable) report.failures.push_back(u);
  std::sort(report.failures.begin(), report.failures.end());
  report.config["model_config_hash"] = vtn::config_hash(model.config());
  report.config["silence_filter"] = a.no_filter ? nlohmann::ordered_json(nullptr)
                                                : nlohmann::ordered_json{{"threshold_dbfs", a.silence.threshold_dbfs},
                                                                         {"frame_ms", a.silence.frame_ms},
                                                                         {"max_silent", a.silence.max_silent}};
  vtn::write_report(a.report, report);

  const auto& mono = report.aggregates.at("si_sdr_mono");
  const auto& ssa = report.aggregates.at("ssa_si_sdr");
  std::cout << "tracks evaluated: " << report.rows.size() << ", skipped: " << report.failures.size()
            << ", filtered: " << report.filtered.size() << "\n";
  std::cout << "SI-SDR^mono (dB): " << db(mono.mean) << " +- " << db(mono.std) << "\n";
  std::cout << "SSA_SI-SDR (dB): " << db(ssa.mean) << " +- " << db(ssa.std) << "\n";
  return kOk;
}

int run_budget(const std::string& config_path) {
  const vtn::ModelConfig cfg = config_path.empty() ? vtn::ModelConfig::reference() : vtn::load_config(config_path);
  const vtn::BudgetReport b = vtn::budget(cfg);
  std::printf("receptive_field_s %.4f\n", b.receptive_field_s);
  std::printf("lookahead_s %.4f\n", b.lookahead_s);
  std::printf("param_count %zu\n", b.param_count);
  std::printf("receptive_field_frames %zu\n", b.receptive_field_frames);
  std::printf("receptive_field_samples %zu\n", b.receptive_field_samples);
  std::printf("lookahead_frames %zu\n", b.lookahead_frames);
  std::printf("lookahead_samples %zu\n", b.lookahead_samples);
  return kOk;
}

int run_filter(const std::string& dataset, const vtn::SilenceOptions& opt) {
  const auto entries = vtn::scan_dataset(dataset);
  const auto r = vtn::filter_dataset(entries, opt);
  std::printf("# silence: frame %.1f ms, threshold %.1f dBFS, max silent %.3f\n", opt.frame_ms, opt.threshold_dbfs,
              opt.max_silent);
  for (const auto& [e, ratio] : r.ratios) {
    std::printf("%s %s %.4f\n", ratio > opt.max_silent ? "removed" : "kept", e.id.c_str(), ratio);
  }
  for (const auto& [e, why] : r.failed) std::printf("unreadable %s %s\n", e.id.c_str(), why.c_str());
  std::printf("# kept %zu removed %zu unreadable %zu\n", r.kept.size(), r.removed.size(), r.failed.size());
  return kOk;
}

int run_loss(const std::string& a_path, const std::string& b_path, double tw, double sw) {
  const vtn::AudioClip a = vtn::read_wav(a_path);
  const vtn::AudioClip b = vtn::read_wav(b_path);
  vtn::LossConfig cfg;
  cfg.time_weight = tw;
  cfg.spec_weight = sw;
  const vtn::LossValue v = vtn::loss_components(a, b, cfg);
  std::printf("time %.9g\n", v.time);
  std::printf("spectral %.9g\n", v.spectral);
  std::printf("combined %.9g\n", v.combined);
  return kOk;
}

int run_init(const std::string& config_path, std::uint64_t seed, const std::string& output) {
  const vtn::ModelConfig cfg = config_path.empty() ? vtn::ModelConfig::reference() : vtn::load_config(config_path);
  vtn::save_weights(output, vtn::random_init(cfg, seed));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxtasnet: streaming stereo singing-voice cancellation"};
  app.require_subcommand(1);

  SeparateArgs sep;
  auto* separate = app.add_subcommand("separate", "Estimate the accompaniment of a stereo mix");
  separate->add_option("--model", sep.model, "Weight container (VTNW)")->required();
  separate->add_option("--input", sep.input, "Stereo WAV mix")->required();
  separate->add_option("--output", sep.output, "Output WAV path")->required();
  separate->add_option("--config", sep.config, "Model config (JSON); defaults to the one embedded in the weights");
  separate->add_flag("--streaming", sep.streaming, "Run block-by-block through the streaming engine");
  separate->add_option("--block", sep.block, "Streaming push size in samples")->capture_default_str()->check(CLI::PositiveNumber);
  separate->add_option("--format", sep.format, "Output sample format")->capture_default_str()->check(CLI::IsMember({"float32", "int16"}));

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a model on a MUSDB-style dataset");
  eval->add_option("--model", ev.model, "Weight container (VTNW)")->required();
  eval->add_option("--dataset", ev.dataset, "Directory with one sub-directory per track")->required();
  eval->add_option("--report", ev.report, "Report output path (JSON)")->required();
  eval->add_option("--config", ev.config, "Model config (JSON)");
  eval->add_option("--window", ev.window, "SSA frame length in seconds")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--hop", ev.hop, "SSA hop in seconds")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_flag("--mono-emulation", ev.mono, "Process each channel independently");
  eval->add_flag("--streaming", ev.streaming, "Separate through the streaming engine");
  eval->add_option("--block", ev.block, "Streaming push size in samples")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_flag("--loss", ev.loss, "Also report the combined time/spectral L1 loss");
  eval->add_flag("--no-filter", ev.no_filter, "Skip the vocal-silence track filter");
  eval->add_option("--silence-threshold", ev.silence.threshold_dbfs, "Silent frame RMS threshold (dBFS)")->capture_default_str();
  eval->add_option("--frame-ms", ev.silence.frame_ms, "Silence analysis frame (ms)")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--max-silent", ev.silence.max_silent, "Remove tracks silent for more than this fraction")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval->add_option("--threads", ev.threads, "Tracks evaluated in parallel")->capture_default_str()->check(CLI::PositiveNumber);

  std::string budget_config;
  auto* budget = app.add_subcommand("budget", "Print receptive field, look-ahead and parameter count");
  budget->add_option("--config", budget_config, "Model config (JSON); reference config if omitted");

  std::string filter_dataset;
  vtn::SilenceOptions filter_opt;
  auto* filter = app.add_subcommand("filter", "Apply the vocal-silence filter to a dataset");
  filter->add_option("--dataset", filter_dataset, "Directory with one sub-directory per track")->required();
  filter->add_option("--silence-threshold", filter_opt.threshold_dbfs, "Silent frame RMS threshold (dBFS)")->capture_default_str();
  filter->add_option("--frame-ms", filter_opt.frame_ms, "Analysis frame (ms)")->capture_default_str()->check(CLI::PositiveNumber);
  filter->add_option("--max-silent", filter_opt.max_silent, "Remove tracks silent for more than this fraction")->capture_default_str()->check(CLI::Range(0.0, 1.0));

  std::string loss_a, loss_b;
  double time_weight = 0.875, spec_weight = 0.125;
  auto* loss = app.add_subcommand("loss", "Time-domain, multi-resolution spectral and combined L1 between two WAVs");
  loss->add_option("--a", loss_a, "First WAV")->required();
  loss->add_option("--b", loss_b, "Second WAV")->required();
  loss->add_option("--time-weight", time_weight, "Weight of the time-domain term")->capture_default_str();
  loss->add_option("--spec-weight", spec_weight, "Weight of the spectral term")->capture_default_str();

  std::string init_config, init_output;
  std::uint64_t init_seed = 42;
  auto* init = app.add_subcommand("init", "Write randomly initialised weights");
  init->add_option("--config", init_config, "Model config (JSON); reference config if omitted");
  init->add_option("--seed", init_seed, "Random seed")->capture_default_str();
  init->add_option("--output", init_output, "Weight container path")->required();

  std::string config_output;
  auto* config = app.add_subcommand("config", "Write the reference model config");
  config->add_option("--output", config_output, "Config path (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*separate) return run_separate(sep);
    if (*eval) return run_eval(ev);
    if (*budget) return run_budget(budget_config);
    if (*filter) return run_filter(filter_dataset, filter_opt);
    if (*loss) return run_loss(loss_a, loss_b, time_weight, spec_weight);
    if (*init) return run_init(init_config, init_seed, init_output);
    if (*config) {
      vtn::save_config(config_output, vtn::ModelConfig::reference());
      return kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return kUsageError;
}
