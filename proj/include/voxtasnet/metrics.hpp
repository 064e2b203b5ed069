#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxtasnet/audio.hpp"
#include "voxtasnet/error.hpp"

namespace vtn {

inline constexpr double kPerfectDb = std::numeric_limits<double>::infinity();

// Scale-invariant SDR in dB. alpha = <e, r> / |r|^2 projects the estimate on
// the reference; a zero residual gives +inf, a zero projection gives -inf.
template <std::floating_point T>
double si_sdr(std::span<const T> estimate, std::span<const T> reference) {
  if (estimate.size() != reference.size()) throw ShapeError("si_sdr: estimate and reference differ in length");
  if (reference.empty()) throw ShapeError("si_sdr: empty signals");
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += static_cast<double>(estimate[i]) * static_cast<double>(reference[i]);
    ref_energy += static_cast<double>(reference[i]) * static_cast<double>(reference[i]);
  }
  if (ref_energy == 0.0) throw DegenerateReference("si_sdr: reference is all zeros");
  const double alpha = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * static_cast<double>(reference[i]);
    const double e = static_cast<double>(estimate[i]) - t;
    target += t * t;
    residual += e * e;
  }
  if (residual == 0.0) return kPerfectDb;
  if (target == 0.0) return -kPerfectDb;
  return 10.0 * std::log10(target / residual);
}

inline double si_sdr(const std::vector<float>& e, const std::vector<float>& r) {
  return si_sdr(std::span<const float>(e), std::span<const float>(r));
}
inline double si_sdr(const std::vector<double>& e, const std::vector<double>& r) {
  return si_sdr(std::span<const double>(e), std::span<const double>(r));
}

// Windows [n*hop, n*hop + window) for n < count; trailing partial windows are dropped.
struct FrameGrid {
  std::size_t window = 0;
  std::size_t hop = 0;
  std::size_t count = 0;

  static FrameGrid for_length(std::size_t length, std::size_t window, std::size_t hop) {
    if (window == 0 || hop == 0) throw ShapeError("FrameGrid: window and hop must be positive");
    if (length < window) {
      throw TooShort("signal of " + std::to_string(length) + " samples is shorter than the " + std::to_string(window) +
                     "-sample window");
    }
    return {window, hop, (length - window) / hop + 1};
  }

  static FrameGrid for_seconds(std::size_t length, int rate, double window_s, double hop_s) {
    return for_length(length, static_cast<std::size_t>(std::lround(window_s * rate)),
                      static_cast<std::size_t>(std::lround(hop_s * rate)));
  }
};

// Reference frames quieter than this mean power are not scored.
inline constexpr double kSilenceFloorPower = 1e-10;

struct FrameSeries {
  std::vector<double> values;  // NaN where skipped
  std::vector<bool> skipped;
  FrameGrid grid;
};

// Applies `metric` to every frame of the grid. Frames with a silent reference
// are marked skipped. Any callable (estimate span, reference span) -> dB works.
template <std::floating_point T, typename Metric>
FrameSeries framewise(Metric&& metric, std::span<const T> estimate, std::span<const T> reference, const FrameGrid& grid) {
  if (estimate.size() != reference.size()) throw ShapeError("framewise: estimate and reference differ in length");
  if (reference.size() < grid.window) throw TooShort("framewise: signal shorter than the window");
  if (grid.count == 0 || (grid.count - 1) * grid.hop + grid.window > reference.size()) {
    throw ShapeError("framewise: grid does not fit the signal");
  }
  FrameSeries out;
  out.grid = grid;
  out.values.assign(grid.count, std::numeric_limits<double>::quiet_NaN());
  out.skipped.assign(grid.count, false);
  for (std::size_t n = 0; n < grid.count; ++n) {
    const auto ref = reference.subspan(n * grid.hop, grid.window);
    double power = 0.0;
    for (T v : ref) power += static_cast<double>(v) * static_cast<double>(v);
    if (power / static_cast<double>(grid.window) < kSilenceFloorPower) {
      out.skipped[n] = true;
      continue;
    }
    out.values[n] = metric(estimate.subspan(n * grid.hop, grid.window), ref);
  }
  return out;
}

template <std::floating_point T>
FrameSeries framewise_si_sdr(std::span<const T> estimate, std::span<const T> reference, const FrameGrid& grid) {
  return framewise([](std::span<const T> e, std::span<const T> r) { return si_sdr(e, r); }, estimate, reference, grid);
}

// Per-frame left/right values of a dB metric and their absolute difference.
struct MetricSeries {
  std::vector<double> left, right, delta;  // delta is NaN on invalid frames
  std::vector<bool> valid;
  FrameGrid grid;
  std::size_t skipped = 0;
};

struct SsaResult {
  double value = 0.0;
  std::size_t valid_frames = 0;
  std::size_t skipped_frames = 0;
  MetricSeries series;
};

// Stereo separation asymmetry: mean over frames of |M_left(n) - M_right(n)|.
// A frame counts only if both channels have a non-silent reference and a
// finite metric value.
template <std::floating_point T, typename Metric>
SsaResult ssa(std::span<const T> est_left, std::span<const T> est_right, std::span<const T> ref_left,
              std::span<const T> ref_right, const FrameGrid& grid, Metric&& metric) {
  const FrameSeries l = framewise(metric, est_left, ref_left, grid);
  const FrameSeries r = framewise(metric, est_right, ref_right, grid);
  SsaResult out;
  auto& s = out.series;
  s.grid = grid;
  s.left = l.values;
  s.right = r.values;
  s.delta.assign(grid.count, std::numeric_limits<double>::quiet_NaN());
  s.valid.assign(grid.count, false);
  double sum = 0.0;
  for (std::size_t n = 0; n < grid.count; ++n) {
    const bool ok = !l.skipped[n] && !r.skipped[n] && std::isfinite(l.values[n]) && std::isfinite(r.values[n]);
    if (!ok) {
      ++s.skipped;
      continue;
    }
    s.valid[n] = true;
    s.delta[n] = std::abs(l.values[n] - r.values[n]);
    sum += s.delta[n];
    ++out.valid_frames;
  }
  out.skipped_frames = s.skipped;
  if (out.valid_frames == 0) throw NoValidFrames("ssa: every frame is silent or perfectly reconstructed");
  out.value = sum / static_cast<double>(out.valid_frames);
  return out;
}

template <std::floating_point T>
SsaResult ssa_si_sdr(std::span<const T> est_left, std::span<const T> est_right, std::span<const T> ref_left,
                     std::span<const T> ref_right, const FrameGrid& grid) {
  return ssa(est_left, est_right, ref_left, ref_right, grid,
             [](std::span<const T> e, std::span<const T> r) { return si_sdr(e, r); });
}

inline void require_stereo_pair(const AudioClip& estimate, const AudioClip& reference, const char* what) {
  if (estimate.channels() != 2 || reference.channels() != 2) throw ShapeError(std::string(what) + ": stereo inputs required");
  if (estimate.frames() != reference.frames()) throw ShapeError(std::string(what) + ": estimate and reference differ in length");
}

inline SsaResult ssa(const AudioClip& estimate, const AudioClip& reference, const FrameGrid& grid) {
  require_stereo_pair(estimate, reference, "ssa");
  return ssa_si_sdr(estimate.channel(0), estimate.channel(1), reference.channel(0), reference.channel(1), grid);
}

// SI-SDR over the whole signal, per channel.
inline std::pair<double, double> si_sdr_mono_channels(const AudioClip& estimate, const AudioClip& reference) {
  require_stereo_pair(estimate, reference, "si_sdr_mono_channels");
  return {si_sdr(estimate.channel(0), reference.channel(0)), si_sdr(estimate.channel(1), reference.channel(1))};
}

// SI-SDR with both channels concatenated into one signal.
inline double si_sdr_stereo(const AudioClip& estimate, const AudioClip& reference) {
  require_same_shape(estimate, reference, "si_sdr_stereo");
  return si_sdr(estimate.data(), reference.data());
}

}  // namespace vtn
