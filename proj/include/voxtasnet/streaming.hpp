#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "voxtasnet/audio.hpp"
#include "voxtasnet/error.hpp"
#include "voxtasnet/model.hpp"
#include "voxtasnet/ops.hpp"

namespace vtn {

namespace stream_detail {

// y = W x + b with W stored [in x out]; per output the sum runs over inputs in
// order, matching ops::conv1d for a 1x1 kernel.
inline void pointwise(std::span<const float> w_t, std::span<const float> bias, std::span<const float> x,
                      std::span<float> y) {
  const std::size_t out = y.size();
  std::fill(y.begin(), y.end(), 0.0f);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float xi = x[i];
    const float* w = w_t.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) y[o] += w[o] * xi;
  }
  for (std::size_t o = 0; o < out; ++o) y[o] += bias[o];
}

inline void prelu(std::span<float> x, std::span<const float> slopes) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = ops::detail::prelu_value(x[i], slopes[i]);
}

inline void cumulative_norm(std::span<float> x, ops::detail::CumulativeStats& stats, std::span<const float> gain,
                            std::span<const float> bias) {
  for (float v : x) stats.add(v);
  const auto [mean, inv_std] = stats.moments(ops::kNormEps);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = ops::detail::normalize_value(x[i], mean, inv_std, gain[i], bias[i]);
}

}  // namespace stream_detail

// Block-by-block execution of a Model with latency equal to its look-ahead.
//
// Input is consumed one encoder hop (S samples) at a time. Each completed hop
// yields one encoder frame, which runs through the separator; symmetric
// (non-causal) layers hold frames back by their right padding, so masks leave
// the separator lookahead_frames behind the encoder. Decoded frames are
// overlap-added and samples are released as soon as the latency contract
// permits: after every call, samples_out == max(0, samples_in - lookahead).
//
// A Stream shares ownership of the model's parameters and allocates all of
// its buffers up front. One caller at a time.
class Stream {
 public:
  explicit Stream(const Model& model) : model_(model) {
    const auto& cfg = model_.config();
    n_ = cfg.encoder.embed_dim;
    l_ = cfg.encoder.kernel;
    s_ = cfg.encoder.stride;
    b_ = cfg.separator.channels;
    lookahead_ = model_.lookahead_samples();
    const auto& p = model_.params();

    std::size_t delay = 0;
    for (const auto& blk : p.blocks) {
      Layer layer;
      layer.params = &blk;
      layer.context = (cfg.separator.kernel - 1) * blk.plan.dilation;
      layer.delay = blk.depthwise_spec.right_pad();
      layer.dw_ring.assign((layer.context + 1) * b_, 0.0f);
      layer.res_ring.assign((layer.delay + 1) * b_, 0.0f);
      delay += layer.delay;
      layers_.push_back(std::move(layer));
    }
    separator_delay_ = delay;

    window_.assign(2 * l_, 0.0f);
    emb_ring_.assign((separator_delay_ + 1) * 2 * n_, 0.0f);
    stacked_.assign(2 * n_, 0.0f);
    mask_.assign(2 * n_, 0.0f);
    work_a_.assign(b_, 0.0f);
    work_b_.assign(b_, 0.0f);
    work_c_.assign(b_, 0.0f);
    decoded_.assign(2 * l_, 0.0f);
    ola_.assign(2 * l_, 0.0f);
    fifo_.assign(2 * 2 * s_, 0.0f);
  }

  std::size_t lookahead_samples() const { return lookahead_; }
  std::uint64_t samples_in() const { return samples_in_; }
  std::uint64_t samples_out() const { return samples_out_; }
  bool closed() const { return closed_; }

  // Bytes held by the stream's buffers and running statistics.
  std::size_t footprint_bytes() const {
    std::size_t floats = window_.capacity() + emb_ring_.capacity() + stacked_.capacity() + mask_.capacity() +
                         work_a_.capacity() + work_b_.capacity() + work_c_.capacity() + decoded_.capacity() +
                         ola_.capacity() + fifo_.capacity();
    std::size_t stats = 1;
    for (const auto& layer : layers_) {
      floats += layer.dw_ring.capacity() + layer.res_ring.capacity();
      stats += 2;
    }
    return floats * sizeof(float) + stats * sizeof(ops::detail::CumulativeStats);
  }

  // Feeds one block of stereo samples; returns the samples that became final.
  AudioClip push(std::span<const float> left, std::span<const float> right) {
    if (closed_) throw StateError("push on a closed stream");
    if (left.size() != right.size()) throw ShapeError("push: left and right blocks differ in length");
    return consume(left, right, left.size(), true);
  }

  AudioClip push(const AudioClip& block) {
    if (closed_) throw StateError("push on a closed stream");
    if (block.channels() != 2) throw ShapeError("push: stereo block required");
    if (block.sample_rate() != model_.config().sample_rate) {
      throw RateError("push: block sample rate " + std::to_string(block.sample_rate()) + " Hz differs from model rate " +
                      std::to_string(model_.config().sample_rate) + " Hz");
    }
    return push(block.channel(0), block.channel(1));
  }

  // Flushes the last lookahead samples, treating unseen future input as silence.
  AudioClip close() {
    if (closed_) throw StateError("stream already closed");
    closed_ = true;
    if (samples_in_ == 0) return AudioClip(2, 0, model_.config().sample_rate);
    return consume({}, {}, lookahead_, false);
  }

 private:
  struct Layer {
    const BlockParams* params = nullptr;
    std::size_t context = 0;  // (P - 1) * dilation
    std::size_t delay = 0;    // frames held back (right padding)
    std::vector<float> dw_ring;
    std::vector<float> res_ring;
    ops::detail::CumulativeStats norm_in, norm_mid;
    std::uint64_t frames_in = 0;
  };

  // Counts `count` samples as input; real samples come from left/right, the
  // end-of-stream padding is zeros and does not advance samples_in.
  AudioClip consume(std::span<const float> left, std::span<const float> right, std::size_t count, bool real) {
    const std::uint64_t in_after = samples_in_ + (real ? count : 0);
    const std::uint64_t target = in_after > lookahead_ ? in_after - lookahead_ : 0;
    const std::uint64_t out_total = closed_ ? samples_in_ : target;
    AudioClip out(2, static_cast<std::size_t>(out_total - samples_out_), model_.config().sample_rate);
    std::size_t written = 0;

    std::uint64_t fed = samples_in_;
    for (std::size_t i = 0; i < count; ++i) {
      window_[l_ - s_ + hop_fill_] = real ? left[i] : 0.0f;
      window_[l_ + l_ - s_ + hop_fill_] = real ? right[i] : 0.0f;
      ++fed;
      if (++hop_fill_ == s_) {
        process_frame();
        hop_fill_ = 0;
        std::memmove(window_.data(), window_.data() + s_, (l_ - s_) * sizeof(float));
        std::memmove(window_.data() + l_, window_.data() + l_ + s_, (l_ - s_) * sizeof(float));
        const std::uint64_t allowed = closed_ ? out_total : (fed > lookahead_ ? fed - lookahead_ : 0);
        written += drain(out, written, allowed);
      }
    }
    if (real) samples_in_ = in_after;
    written += drain(out, written, out_total);
    if (samples_out_ != out_total) throw StateError("stream: latency contract violated (internal error)");
    return out;
  }

  // Moves finished samples into `out` until samples_out reaches `allowed`.
  std::size_t drain(AudioClip& out, std::size_t at, std::uint64_t allowed) {
    std::size_t moved = 0;
    while (samples_out_ < allowed && fifo_size_ > 0) {
      out.at(0, at + moved) = fifo_[fifo_head_];
      out.at(1, at + moved) = fifo_[fifo_cap() + fifo_head_];
      fifo_head_ = (fifo_head_ + 1) % fifo_cap();
      --fifo_size_;
      ++samples_out_;
      ++moved;
    }
    return moved;
  }

  std::size_t fifo_cap() const { return 2 * s_; }

  void process_frame() {
    const auto& p = model_.params();
    const std::uint64_t f = frames_encoded_++;

    // Encoder: same accumulation order as ops::conv2d (kernel row, then tap).
    const float* w = p.enc_w->ptr();
    for (std::size_t k = 0; k < n_; ++k) {
      for (std::size_t h = 0; h < 2; ++h) {
        double acc = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(h + r) - 1;
          if (src < 0 || src > 1) continue;
          const float* x = window_.data() + static_cast<std::size_t>(src) * l_;
          const float* wk = w + (k * 3 + r) * l_;
          for (std::size_t q = 0; q < l_; ++q) acc += static_cast<double>(wk[q]) * static_cast<double>(x[q]);
        }
        const double b = p.enc_b.empty() ? 0.0 : static_cast<double>(p.enc_b[k]);
        stacked_[h * n_ + k] = static_cast<float>(acc + b);
      }
    }
    std::copy(stacked_.begin(), stacked_.end(), emb_ring_.begin() + static_cast<std::ptrdiff_t>((f % (separator_delay_ + 1)) * 2 * n_));

    // Separator front end.
    stream_detail::cumulative_norm(stacked_, input_norm_, p.in_norm_g, p.in_norm_b);
    std::span<float> x(work_a_);
    stream_detail::pointwise(p.bottleneck_t, p.bottleneck_b, stacked_, x);

    for (auto& layer : layers_) {
      if (!run_layer(layer, x)) return;
    }

    // Mask for frame g = f - separator_delay.
    const std::uint64_t g = frames_masked_++;
    stream_detail::prelu(x, p.out_prelu);
    stream_detail::pointwise(p.mask_t, p.mask_b, x, mask_);
    const float* emb = emb_ring_.data() + (g % (separator_delay_ + 1)) * 2 * n_;
    for (std::size_t i = 0; i < 2 * n_; ++i) mask_[i] = emb[i] * ops::detail::sigmoid_value(mask_[i]);
    decode_frame(g);
  }

  // Runs one S-Conv block on frame x (in place). Returns false while the
  // block is still filling its look-ahead.
  bool run_layer(Layer& layer, std::span<float>& x) {
    const BlockParams& bp = *layer.params;
    const std::uint64_t j = layer.frames_in++;
    std::copy(x.begin(), x.end(), layer.res_ring.begin() + static_cast<std::ptrdiff_t>((j % (layer.delay + 1)) * b_));

    std::span<float> u(work_b_);
    stream_detail::pointwise(bp.pw_in_t, bp.pw_in_b, x, u);
    stream_detail::prelu(u, bp.prelu_in);
    stream_detail::cumulative_norm(u, layer.norm_in, bp.norm_in_g, bp.norm_in_b);
    const std::size_t slots = layer.context + 1;
    std::copy(u.begin(), u.end(), layer.dw_ring.begin() + static_cast<std::ptrdiff_t>((j % slots) * b_));
    if (j < layer.delay) return false;

    // Depthwise taps over frames j - context .. j; frames before the start are
    // the zero-initialised slots, like the offline left padding.
    const std::size_t taps = bp.dw_w->dim(2);
    const std::size_t dil = bp.plan.dilation;
    for (std::size_t c = 0; c < b_; ++c) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < taps; ++k) {
        const std::uint64_t back = (taps - 1 - k) * dil;
        const std::size_t slot = static_cast<std::size_t>((j + slots - back % slots) % slots);
        acc += bp.dw_w->at(c, 0, k) * layer.dw_ring[slot * b_ + c];
      }
      u[c] = acc + bp.dw_b[c];
    }
    stream_detail::prelu(u, bp.prelu_mid);
    stream_detail::cumulative_norm(u, layer.norm_mid, bp.norm_mid_g, bp.norm_mid_b);

    std::span<float> y(work_c_);
    stream_detail::pointwise(bp.pw_out_t, bp.pw_out_b, u, y);
    const std::uint64_t t = j - layer.delay;
    const float* res = layer.res_ring.data() + (t % (layer.delay + 1)) * b_;
    for (std::size_t c = 0; c < b_; ++c) y[c] = y[c] + res[c];
    // The block output becomes the next block's input.
    std::swap(work_a_, work_c_);
    x = std::span<float>(work_a_);
    return true;
  }

  void decode_frame(std::uint64_t g) {
    const auto& p = model_.params();
    // Transposed conv of one frame: output row h gathers embedding rows ih
    // through kernel row r = h - ih + 1.
    std::fill(decoded_.begin(), decoded_.end(), 0.0f);
    const float* w = p.dec_w->ptr();
    for (std::size_t k = 0; k < n_; ++k) {
      for (std::size_t ih = 0; ih < 2; ++ih) {
        const float v = mask_[ih * n_ + k];
        for (std::size_t h = 0; h < 2; ++h) {
          const std::size_t r = h + 1 - ih;
          const float* wk = w + (k * 3 + r) * l_;
          float* dst = decoded_.data() + h * l_;
          for (std::size_t q = 0; q < l_; ++q) dst[q] += v * wk[q];
        }
      }
    }
    for (std::size_t h = 0; h < 2; ++h) {
      float* acc = ola_.data() + h * l_;
      const float* src = decoded_.data() + h * l_;
      for (std::size_t q = 0; q < l_; ++q) acc[q] += src[q];
    }
    // Positions [g*S - (L - S), g*S + S) are covered; the first S are final.
    const std::int64_t first = static_cast<std::int64_t>(g * s_) - static_cast<std::int64_t>(l_ - s_);
    for (std::size_t q = 0; q < s_; ++q) {
      if (first + static_cast<std::int64_t>(q) < 0) continue;
      if (fifo_size_ == fifo_cap()) throw StateError("stream: output buffer overflow (internal error)");
      const std::size_t slot = (fifo_head_ + fifo_size_) % fifo_cap();
      fifo_[slot] = ola_[q] + p.dec_b[0];
      fifo_[fifo_cap() + slot] = ola_[l_ + q] + p.dec_b[0];
      ++fifo_size_;
    }
    for (std::size_t h = 0; h < 2; ++h) {
      float* acc = ola_.data() + h * l_;
      std::memmove(acc, acc + s_, (l_ - s_) * sizeof(float));
      std::fill(acc + (l_ - s_), acc + l_, 0.0f);
    }
  }

  Model model_;
  std::size_t n_ = 0, l_ = 0, s_ = 0, b_ = 0;
  std::size_t lookahead_ = 0;
  std::size_t separator_delay_ = 0;

  std::vector<Layer> layers_;
  std::vector<float> window_;    // [2 x L] current encoder window
  std::vector<float> emb_ring_;  // (delay + 1) stacked embeddings awaiting their masks
  std::vector<float> stacked_, mask_;
  std::vector<float> work_a_, work_b_, work_c_;
  std::vector<float> decoded_, ola_;  // [2 x L]
  std::vector<float> fifo_;           // [2 x 2S] finished samples
  ops::detail::CumulativeStats input_norm_;

  std::size_t hop_fill_ = 0;
  std::size_t fifo_head_ = 0, fifo_size_ = 0;
  std::uint64_t frames_encoded_ = 0, frames_masked_ = 0;
  std::uint64_t samples_in_ = 0, samples_out_ = 0;
  bool closed_ = false;
};

inline Stream open_stream(const Model& model) { return Stream(model); }

}  // namespace vtn
