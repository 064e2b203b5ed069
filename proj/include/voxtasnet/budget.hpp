#pragma once

#include <cstddef>

#include "voxtasnet/config.hpp"

namespace vtn {

struct BudgetReport {
  double receptive_field_s = 0.0;
  double lookahead_s = 0.0;
  std::size_t param_count = 0;

  std::size_t receptive_field_frames = 0;  // separator span in encoder frames
  std::size_t lookahead_frames = 0;        // future encoder frames needed by the separator
  std::size_t receptive_field_samples = 0;
  std::size_t lookahead_samples = 0;  // streaming latency
};

// Look-ahead of a single layer in frames: the right half of its symmetric padding.
inline std::size_t layer_lookahead_frames(const ModelConfig& cfg, const LayerPlan& layer) {
  return layer.causal ? 0 : (cfg.separator.kernel - 1) * layer.dilation / 2;
}

// Separator look-ahead in frames plus the encoder window converted to samples:
// an output sample can only be finalised once the last encoder window that
// overlaps it has been filled, which costs L - 1 samples on top of the frames.
inline std::size_t lookahead_samples(const ModelConfig& cfg) {
  std::size_t frames = 0;
  for (const auto& layer : layer_plan(cfg)) frames += layer_lookahead_frames(cfg, layer);
  return frames * cfg.encoder.stride + cfg.encoder.kernel - 1;
}

// Closed-form parameter count; independent of tensor_specs() so the two can check each other.
inline std::size_t count_parameters(const ModelConfig& cfg) {
  const std::size_t n = cfg.encoder.embed_dim, l = cfg.encoder.kernel;
  const std::size_t b = cfg.separator.channels, p = cfg.separator.kernel;
  std::size_t layers = 0;
  for (auto x : cfg.separator.layers_per_group) layers += x;
  const std::size_t encoder = 3 * l * n + n;
  const std::size_t decoder = 3 * l * n + 1;
  const std::size_t front = 2 * (2 * n) + (2 * n) * b + b;          // input norm + bottleneck
  const std::size_t block = 2 * (b * b + b) + (b * p + b) + 2 * b + 4 * b;  // 2 pointwise, depthwise, 2 PReLU, 2 norms
  const std::size_t back = b + b * (2 * n) + 2 * n;                // PReLU + mask conv
  return encoder + decoder + front + layers * block + back;
}

inline BudgetReport budget(const ModelConfig& cfg) {
  cfg.validate();
  BudgetReport r;
  const std::size_t s = cfg.encoder.stride, l = cfg.encoder.kernel;
  std::size_t span = 1, future = 0;
  for (const auto& layer : layer_plan(cfg)) {
    span += (cfg.separator.kernel - 1) * layer.dilation;
    future += layer_lookahead_frames(cfg, layer);
  }
  r.receptive_field_frames = span;
  r.lookahead_frames = future;
  // Frames overlapping one output sample in the decoder's overlap-add.
  const std::size_t overlap = (l + s - 1) / s;
  r.receptive_field_samples = (span - 1 + overlap - 1) * s + l;
  r.lookahead_samples = lookahead_samples(cfg);
  r.receptive_field_s = static_cast<double>(r.receptive_field_samples) / cfg.sample_rate;
  r.lookahead_s = static_cast<double>(r.lookahead_samples) / cfg.sample_rate;
  r.param_count = count_parameters(cfg);
  return r;
}

}  // namespace vtn
