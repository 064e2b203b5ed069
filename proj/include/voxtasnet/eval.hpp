#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "voxtasnet/audio.hpp"
#include "voxtasnet/dataset.hpp"
#include "voxtasnet/error.hpp"
#include "voxtasnet/loss.hpp"
#include "voxtasnet/metrics.hpp"
#include "voxtasnet/model.hpp"
#include "voxtasnet/streaming.hpp"

namespace vtn {

// Stereo mix -> stereo accompaniment estimate.
using Separator = std::function<AudioClip(const AudioClip&)>;

inline Separator offline_separator(const Model& model) {
  return [model](const AudioClip& mix) { return model.forward_offline(mix); };
}

inline AudioClip run_streaming(const Model& model, const AudioClip& mix, std::size_t block) {
  if (block == 0) throw ConfigError("streaming block size must be positive");
  if (mix.channels() != 2) throw ShapeError("streaming: stereo input required");
  Stream stream(model);
  AudioClip out(2, mix.frames(), mix.sample_rate());
  std::size_t at = 0;
  auto append = [&](const AudioClip& part) {
    for (std::size_t c = 0; c < 2; ++c) std::copy(part.channel(c).begin(), part.channel(c).end(), out.channel(c).begin() + static_cast<std::ptrdiff_t>(at));
    at += part.frames();
  };
  for (std::size_t start = 0; start < mix.frames(); start += block) {
    const std::size_t len = std::min(block, mix.frames() - start);
    append(stream.push(mix.channel(0).subspan(start, len), mix.channel(1).subspan(start, len)));
  }
  append(stream.close());
  return out;
}

inline Separator streaming_separator(const Model& model, std::size_t block) {
  return [model, block](const AudioClip& mix) {
    if (mix.sample_rate() != model.config().sample_rate) {
      throw RateError("input sample rate " + std::to_string(mix.sample_rate()) + " Hz differs from model rate " +
                      std::to_string(model.config().sample_rate) + " Hz");
    }
    return run_streaming(model, mix, block);
  };
}

// Mono view of a stereo separator: each channel is processed on its own as a
// dual-mono signal and only the matching output channel is kept, so no
// information crosses between left and right.
inline Separator mono_emulation(Separator stereo) {
  return [stereo = std::move(stereo)](const AudioClip& mix) {
    if (mix.channels() != 2) throw ShapeError("mono emulation: stereo input required");
    AudioClip out(2, mix.frames(), mix.sample_rate());
    for (std::size_t c = 0; c < 2; ++c) {
      const std::vector<float> ch(mix.channel(c).begin(), mix.channel(c).end());
      const AudioClip est = stereo(AudioClip({ch, ch}, mix.sample_rate()));
      if (est.channels() != 2 || est.frames() != mix.frames()) throw ShapeError("mono emulation: separator changed the shape");
      std::copy(est.channel(c).begin(), est.channel(c).end(), out.channel(c).begin());
    }
    return out;
  };
}

struct EvalOptions {
  double window_s = 1.5;
  double hop_s = 0.75;
  bool compute_loss = false;
  LossConfig loss;
  unsigned threads = 1;
  // Echoed into the report only; the caller builds the separator accordingly.
  bool mono_emulation = false;
  bool streaming = false;
  std::size_t block = 4096;
};

struct TrackResult {
  std::string id;
  double si_sdr = 0.0;  // both channels as one signal
  double si_sdr_left = 0.0;
  double si_sdr_right = 0.0;
  std::optional<double> ssa;  // empty when no frame was valid
  std::size_t ssa_valid_frames = 0;
  std::size_t ssa_skipped_frames = 0;
  std::optional<LossValue> loss;
};

struct Aggregate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;      // finite values used
  std::size_t non_finite = 0;  // +/-inf sentinels left out
};

struct EvalReport {
  std::vector<TrackResult> rows;  // sorted by track id
  std::vector<std::pair<std::string, std::string>> failures;
  std::vector<std::pair<std::string, double>> filtered;  // removed by the silence filter
  std::map<std::string, Aggregate> aggregates;
  nlohmann::ordered_json config;
};

// Mean and population standard deviation over the finite values.
inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  double sum = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++a.count;
    } else {
      ++a.non_finite;
    }
  }
  if (a.count == 0) return a;
  a.mean = sum / static_cast<double>(a.count);
  double sq = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) sq += (v - a.mean) * (v - a.mean);
  }
  a.std = std::sqrt(sq / static_cast<double>(a.count));
  return a;
}

inline std::map<std::string, Aggregate> aggregate_rows(const std::vector<TrackResult>& rows) {
  std::vector<double> stereo, mono, ssa_values, loss_values;
  for (const auto& r : rows) {
    stereo.push_back(r.si_sdr);
    mono.push_back(r.si_sdr_left);
    mono.push_back(r.si_sdr_right);
    if (r.ssa) ssa_values.push_back(*r.ssa);
    if (r.loss) loss_values.push_back(r.loss->combined);
  }
  std::map<std::string, Aggregate> out;
  out["si_sdr"] = aggregate(stereo);
  out["si_sdr_mono"] = aggregate(mono);
  out["ssa_si_sdr"] = aggregate(ssa_values);
  if (!loss_values.empty()) out["combined_loss"] = aggregate(loss_values);
  return out;
}

inline TrackResult evaluate_track(const Separator& separator, const TrackEntry& entry, const EvalOptions& opt,
                                  int expected_rate) {
  const AudioClip mix = load_stem(entry, "mixture");
  const AudioClip reference = build_accompaniment(entry);
  if (mix.channels() != 2) throw ShapeError("track '" + entry.id + "': mixture must be stereo");
  require_same_shape(mix, reference, ("track '" + entry.id + "' mixture vs accompaniment").c_str());
  if (expected_rate > 0 && mix.sample_rate() != expected_rate) {
    throw RateError("track '" + entry.id + "': sample rate " + std::to_string(mix.sample_rate()) + " Hz, model expects " +
                    std::to_string(expected_rate) + " Hz");
  }
  const AudioClip estimate = separator(mix);
  require_same_shape(estimate, reference, ("track '" + entry.id + "' estimate").c_str());

  TrackResult r;
  r.id = entry.id;
  r.si_sdr = si_sdr_stereo(estimate, reference);
  std::tie(r.si_sdr_left, r.si_sdr_right) = si_sdr_mono_channels(estimate, reference);
  const FrameGrid grid = FrameGrid::for_seconds(mix.frames(), mix.sample_rate(), opt.window_s, opt.hop_s);
  try {
    const SsaResult s = ssa(estimate, reference, grid);
    r.ssa = s.value;
    r.ssa_valid_frames = s.valid_frames;
    r.ssa_skipped_frames = s.skipped_frames;
  } catch (const NoValidFrames&) {
    r.ssa_valid_frames = 0;
    r.ssa_skipped_frames = grid.count;
  }
  if (opt.compute_loss) r.loss = loss_components(estimate, reference, opt.loss);
  return r;
}

// Evaluates every entry; per-track failures are recorded and skipped.
inline EvalReport evaluate(const Separator& separator, const std::vector<TrackEntry>& entries, const EvalOptions& opt,
                           int expected_rate = 0) {
  std::vector<std::optional<TrackResult>> results(entries.size());
  std::vector<std::string> errors(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        results[i] = evaluate_track(separator, entries[i], opt, expected_rate);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(entries.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  EvalReport report;
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return entries[a].id < entries[b].id; });
  for (std::size_t i : order) {
    if (results[i]) {
      report.rows.push_back(std::move(*results[i]));
    } else {
      report.failures.emplace_back(entries[i].id, errors[i]);
    }
  }
  report.aggregates = aggregate_rows(report.rows);
  report.config = {{"window_s", opt.window_s}, {"hop_s", opt.hop_s}, {"mono_emulation", opt.mono_emulation},
                   {"streaming", opt.streaming}, {"compute_loss", opt.compute_loss}};
  if (opt.streaming) report.config["block"] = opt.block;
  if (opt.compute_loss) {
    report.config["loss"] = {{"time_weight", opt.loss.time_weight},
                             {"spec_weight", opt.loss.spec_weight},
                             {"window_lengths_s", opt.loss.window_lengths_s}};
  }
  return report;
}

// +/-inf are written as the strings "+inf"/"-inf", missing values as null.
inline nlohmann::ordered_json db_json(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  return v;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "voxtasnet-eval-report";
  j["version"] = 1;
  j["config"] = report.config;
  j["tracks"] = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json row;
    row["id"] = r.id;
    row["si_sdr"] = db_json(r.si_sdr);
    row["si_sdr_left"] = db_json(r.si_sdr_left);
    row["si_sdr_right"] = db_json(r.si_sdr_right);
    row["ssa_si_sdr"] = r.ssa ? db_json(*r.ssa) : ordered_json(nullptr);
    row["ssa_valid_frames"] = r.ssa_valid_frames;
    row["ssa_skipped_frames"] = r.ssa_skipped_frames;
    if (r.loss) row["loss"] = {{"time", r.loss->time}, {"spectral", r.loss->spectral}, {"combined", r.loss->combined}};
    j["tracks"].push_back(std::move(row));
  }
  j["skipped_tracks"] = ordered_json::array();
  for (const auto& [id, why] : report.failures) j["skipped_tracks"].push_back({{"id", id}, {"reason", why}});
  j["filtered_tracks"] = ordered_json::array();
  for (const auto& [id, ratio] : report.filtered) j["filtered_tracks"].push_back({{"id", id}, {"silence_ratio", ratio}});
  std::size_t skipped_frames = 0;
  for (const auto& r : report.rows) skipped_frames += r.ssa_skipped_frames;
  j["skipped_frames_total"] = skipped_frames;
  j["aggregate"] = ordered_json::object();
  for (const auto& [name, a] : report.aggregates) {
    j["aggregate"][name] = {{"mean", db_json(a.mean)}, {"std", db_json(a.std)}, {"count", a.count}, {"non_finite", a.non_finite}};
  }
  return j;
}

inline void write_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open report '" + path + "' for writing");
  out << report_to_json(report).dump(2) << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace vtn
