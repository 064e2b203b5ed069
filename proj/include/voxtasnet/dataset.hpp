#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "voxtasnet/audio.hpp"
#include "voxtasnet/error.hpp"
#include "voxtasnet/wav.hpp"

namespace vtn {

// Silence criterion of the track filter. Not a published constant; reported
// alongside every filter/eval result so numbers stay interpretable.
struct SilenceOptions {
  double threshold_dbfs = -60.0;  // frame RMS below this counts as silent
  double frame_ms = 100.0;
  double max_silent = 0.5;  // tracks silent for more than this fraction are removed
};

// Fraction of frames whose RMS (mean square over all channels) is below the
// threshold. A trailing partial frame counts if it spans at least half a frame.
inline double silence_ratio(const AudioClip& clip, const SilenceOptions& opt = {}) {
  if (clip.frames() == 0) throw EmptyInput("silence_ratio: empty clip");
  const auto frame = static_cast<std::size_t>(std::lround(opt.frame_ms * 1e-3 * clip.sample_rate()));
  if (frame == 0) throw ConfigError("silence_ratio: frame length rounds to zero samples");
  const double floor_ms = std::pow(10.0, opt.threshold_dbfs / 10.0);

  std::size_t total = 0, silent = 0;
  for (std::size_t start = 0; start < clip.frames(); start += frame) {
    const std::size_t len = std::min(frame, clip.frames() - start);
    if (len < frame && 2 * len < frame) break;
    double energy = 0.0;
    for (std::size_t c = 0; c < clip.channels(); ++c) {
      auto x = clip.channel(c).subspan(start, len);
      for (float v : x) energy += static_cast<double>(v) * v;
    }
    const double mean_square = energy / static_cast<double>(len * clip.channels());
    ++total;
    if (mean_square < floor_ms) ++silent;
  }
  if (total == 0) {
    // Clip shorter than half a frame: judge it as one frame.
    double energy = 0.0;
    for (float v : clip.data()) energy += static_cast<double>(v) * v;
    return energy / static_cast<double>(clip.data().size()) < floor_ms ? 1.0 : 0.0;
  }
  return static_cast<double>(silent) / static_cast<double>(total);
}

inline const std::vector<std::string>& stem_names() {
  static const std::vector<std::string> names{"mixture", "vocals", "bass", "drums", "other"};
  return names;
}

// One track directory: mixture.wav plus vocals/bass/drums/other stems.
struct TrackEntry {
  std::string id;
  std::filesystem::path dir;
  std::map<std::string, std::filesystem::path> paths;  // stem name -> file
  double duration_s = 0.0;                             // from the mixture header, 0 if unreadable
  int sample_rate = 0;

  std::filesystem::path path(const std::string& stem) const {
    auto it = paths.find(stem);
    return it != paths.end() ? it->second : dir / (stem + ".wav");
  }
};

// Lists track directories in id order. Missing files are left for the
// consumers to report per track.
inline std::vector<TrackEntry> scan_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset directory '" + root.string() + "' is not readable");
  std::vector<TrackEntry> out;
  for (fs::directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec)) {
    if (!it->is_directory()) continue;
    TrackEntry e;
    e.id = it->path().filename().string();
    e.dir = it->path();
    for (const auto& stem : stem_names()) {
      const auto p = e.dir / (stem + ".wav");
      if (fs::exists(p)) e.paths[stem] = p;
    }
    if (e.paths.count("mixture")) {
      try {
        const WavInfo info = read_wav_info(e.paths["mixture"].string());
        e.sample_rate = info.sample_rate;
        e.duration_s = static_cast<double>(info.frames) / info.sample_rate;
      } catch (const Error&) {
        // reported when the track is evaluated
      }
    }
    out.push_back(std::move(e));
  }
  if (ec) throw IoError("cannot list dataset directory '" + root.string() + "': " + ec.message());
  std::sort(out.begin(), out.end(), [](const TrackEntry& a, const TrackEntry& b) { return a.id < b.id; });
  return out;
}

inline AudioClip load_stem(const TrackEntry& entry, const std::string& stem) {
  const auto p = entry.path(stem);
  if (!std::filesystem::exists(p)) throw MissingStem("track '" + entry.id + "': missing " + stem + ".wav");
  return read_wav(p.string());
}

// Accompaniment = bass + drums + other.
inline AudioClip build_accompaniment(const StemSet& stems) { return stems.sum({"bass", "drums", "other"}); }

inline AudioClip build_accompaniment(const TrackEntry& entry) {
  StemSet stems;
  for (const char* name : {"bass", "drums", "other"}) stems.add(name, load_stem(entry, name));
  return build_accompaniment(stems);
}

struct FilterResult {
  std::vector<TrackEntry> kept;
  std::vector<std::pair<TrackEntry, double>> ratios;  // silence ratio of every readable track
  std::vector<std::pair<TrackEntry, double>> removed;
  std::vector<std::pair<TrackEntry, std::string>> failed;
};

// Keeps tracks whose vocal stem is silent for at most max_silent of its duration.
inline FilterResult filter_dataset(const std::vector<TrackEntry>& entries, const SilenceOptions& opt = {}) {
  FilterResult r;
  for (const auto& e : entries) {
    double ratio = 0.0;
    try {
      ratio = silence_ratio(load_stem(e, "vocals"), opt);
    } catch (const Error& err) {
      r.failed.emplace_back(e, err.what());
      continue;
    }
    r.ratios.emplace_back(e, ratio);
    if (ratio > opt.max_silent) {
      r.removed.emplace_back(e, ratio);
    } else {
      r.kept.push_back(e);
    }
  }
  return r;
}

}  // namespace vtn
