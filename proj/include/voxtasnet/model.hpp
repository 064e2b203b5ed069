#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "voxtasnet/audio.hpp"
#include "voxtasnet/budget.hpp"
#include "voxtasnet/config.hpp"
#include "voxtasnet/error.hpp"
#include "voxtasnet/ops.hpp"
#include "voxtasnet/tensor.hpp"
#include "voxtasnet/weights.hpp"

namespace vtn {

struct ForwardOptions {
  // Test hook: replace the estimated masks by ones, leaving encoder -> decoder.
  bool unit_mask = false;
};

// Parameters of one S-Conv block. Pointers alias tensors owned by the model's WeightStore.
struct BlockParams {
  LayerPlan plan;
  ops::ConvSpec depthwise_spec;
  const Tensor* pw_in_w = nullptr;
  std::span<const float> pw_in_b, prelu_in, norm_in_g, norm_in_b;
  const Tensor* dw_w = nullptr;
  std::span<const float> dw_b, prelu_mid, norm_mid_g, norm_mid_b;
  const Tensor* pw_out_w = nullptr;
  std::span<const float> pw_out_b;
  // [in x out] copies of the pointwise weights for frame-at-a-time execution.
  std::vector<float> pw_in_t, pw_out_t;
};

struct ModelParams {
  const Tensor* enc_w = nullptr;
  std::span<const float> enc_b;
  std::span<const float> in_norm_g, in_norm_b;
  const Tensor* bottleneck_w = nullptr;
  std::span<const float> bottleneck_b;
  std::vector<BlockParams> blocks;
  std::span<const float> out_prelu;
  const Tensor* mask_w = nullptr;
  std::span<const float> mask_b;
  const Tensor* dec_w = nullptr;
  std::span<const float> dec_b;
  std::vector<float> bottleneck_t, mask_t;
};

namespace model_detail {

inline std::vector<float> transpose_pointwise(const Tensor& w) {
  const std::size_t out = w.dim(0), in = w.dim(1);
  std::vector<float> t(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) t[i * out + o] = w.at(o, i, 0);
  return t;
}

}  // namespace model_detail

// Encoder (2D conv over the stereo x time plane) -> separator (stack of S-Conv
// blocks producing sigmoid masks) -> masking -> decoder (transposed 2D conv).
// Immutable once built; copies share the same parameters.
class Model {
 public:
  static Model build(const ModelConfig& cfg, WeightStore weights) {
    cfg.validate();
    validate_weights(weights, cfg);
    weights.config = cfg;
    weights.config_hash = config_hash(cfg);
    return Model(std::make_shared<Impl>(cfg, std::move(weights)));
  }

  static Model random(const ModelConfig& cfg, std::uint64_t seed) { return build(cfg, random_init(cfg, seed)); }

  const ModelConfig& config() const { return impl_->cfg; }
  const WeightStore& weights() const { return impl_->store; }
  const ModelParams& params() const { return impl_->p; }
  std::size_t lookahead_samples() const { return impl_->lookahead; }

  // Stereo mix in, stereo accompaniment estimate of the same length out.
  AudioClip forward_offline(const AudioClip& mix, const ForwardOptions& opt = {}) const {
    const auto& cfg = impl_->cfg;
    const auto& p = impl_->p;
    if (mix.channels() != 2) {
      throw ShapeError("forward: stereo input required, got " + std::to_string(mix.channels()) + " channel(s)");
    }
    if (mix.sample_rate() != cfg.sample_rate) {
      throw RateError("forward: input sample rate " + std::to_string(mix.sample_rate()) + " Hz differs from model rate " +
                      std::to_string(cfg.sample_rate) + " Hz");
    }
    const std::size_t l = cfg.encoder.kernel, s = cfg.encoder.stride, n = cfg.encoder.embed_dim;
    if (mix.frames() < l) {
      throw ShapeError("forward: input has " + std::to_string(mix.frames()) + " samples, fewer than the encoder kernel (" +
                       std::to_string(l) + ")");
    }
    // Right-pad by the look-ahead so every input sample gets a finished output;
    // frame f covers samples [f*S - (L - S), f*S + S).
    const std::size_t t = mix.frames();
    const std::size_t frames = (t + impl_->lookahead) / s;
    const std::size_t width = (frames - 1) * s + l;
    const std::size_t offset = l - s;

    Tensor enc_in({1, 2, width});
    for (std::size_t h = 0; h < 2; ++h) {
      auto src = mix.channel(h);
      for (std::size_t i = 0; i < t && i + offset < width; ++i) enc_in.at(0, h, i + offset) = src[i];
    }
    const Tensor emb = ops::conv2d(enc_in, *p.enc_w, p.enc_b, {1, s}, {1, 0});  // [N x 2 x F]

    // Stack the two embeddings: row h*N + n.
    Tensor stacked({2 * n, frames});
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t f = 0; f < frames; ++f) stacked.at(h * n + k, f) = emb.at(k, h, f);

    Tensor masked = stacked;
    if (!opt.unit_mask) {
      const Tensor mask = separate(stacked);
      for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= mask[i];
    }

    Tensor dec_in({n, 2, frames});
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t f = 0; f < frames; ++f) dec_in.at(k, h, f) = masked.at(h * n + k, f);
    const Tensor dec = ops::conv2d_transposed(dec_in, *p.dec_w, p.dec_b, {1, s}, {1, 0});  // [1 x 2 x width]

    AudioClip out(2, t, cfg.sample_rate);
    for (std::size_t h = 0; h < 2; ++h) {
      auto dst = out.channel(h);
      for (std::size_t i = 0; i < t; ++i) dst[i] = dec.at(0, h, i + offset);
    }
    return out;
  }

  // Separator on a stacked embedding [2N x F]; returns masks of the same shape.
  Tensor separate(const Tensor& stacked) const {
    const auto& p = impl_->p;
    Tensor x = ops::cumulative_layer_norm(stacked, p.in_norm_g, p.in_norm_b);
    x = ops::conv1d(x, *p.bottleneck_w, p.bottleneck_b, ops::ConvSpec{});
    for (const auto& blk : p.blocks) {
      Tensor y = ops::conv1d(x, *blk.pw_in_w, blk.pw_in_b, ops::ConvSpec{});
      y = ops::prelu(y, blk.prelu_in);
      y = ops::cumulative_layer_norm(y, blk.norm_in_g, blk.norm_in_b);
      y = ops::conv1d(y, *blk.dw_w, blk.dw_b, blk.depthwise_spec);
      y = ops::prelu(y, blk.prelu_mid);
      y = ops::cumulative_layer_norm(y, blk.norm_mid_g, blk.norm_mid_b);
      y = ops::conv1d(y, *blk.pw_out_w, blk.pw_out_b, ops::ConvSpec{});
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] + x[i];
      x = std::move(y);
    }
    x = ops::prelu(x, p.out_prelu);
    x = ops::conv1d(x, *p.mask_w, p.mask_b, ops::ConvSpec{});
    return ops::sigmoid(x);
  }

 private:
  struct Impl {
    Impl(const ModelConfig& c, WeightStore w) : cfg(c), store(std::move(w)), lookahead(vtn::lookahead_samples(c)) {
      auto flat = [this](const std::string& name) { return store.get(name).data(); };
      p.enc_w = &store.get("encoder.weight");
      p.enc_b = flat("encoder.bias");
      p.in_norm_g = flat("separator.input_norm.gain");
      p.in_norm_b = flat("separator.input_norm.bias");
      p.bottleneck_w = &store.get("separator.bottleneck.weight");
      p.bottleneck_b = flat("separator.bottleneck.bias");
      p.bottleneck_t = model_detail::transpose_pointwise(*p.bottleneck_w);
      const auto plan = layer_plan(cfg);
      for (std::size_t i = 0; i < plan.size(); ++i) {
        const std::string pre = "separator.blocks." + std::to_string(i) + ".";
        BlockParams b;
        b.plan = plan[i];
        b.depthwise_spec = ops::ConvSpec{cfg.separator.kernel, plan[i].dilation,
                                         plan[i].causal ? ops::Padding::Causal : ops::Padding::Symmetric, 1,
                                         cfg.separator.channels};
        b.pw_in_w = &store.get(pre + "pointwise_in.weight");
        b.pw_in_b = flat(pre + "pointwise_in.bias");
        b.prelu_in = flat(pre + "prelu_in.slope");
        b.norm_in_g = flat(pre + "norm_in.gain");
        b.norm_in_b = flat(pre + "norm_in.bias");
        b.dw_w = &store.get(pre + "depthwise.weight");
        b.dw_b = flat(pre + "depthwise.bias");
        b.prelu_mid = flat(pre + "prelu_mid.slope");
        b.norm_mid_g = flat(pre + "norm_mid.gain");
        b.norm_mid_b = flat(pre + "norm_mid.bias");
        b.pw_out_w = &store.get(pre + "pointwise_out.weight");
        b.pw_out_b = flat(pre + "pointwise_out.bias");
        b.pw_in_t = model_detail::transpose_pointwise(*b.pw_in_w);
        b.pw_out_t = model_detail::transpose_pointwise(*b.pw_out_w);
        p.blocks.push_back(std::move(b));
      }
      p.out_prelu = flat("separator.output_prelu.slope");
      p.mask_w = &store.get("separator.mask.weight");
      p.mask_b = flat("separator.mask.bias");
      p.mask_t = model_detail::transpose_pointwise(*p.mask_w);
      p.dec_w = &store.get("decoder.weight");
      p.dec_b = flat("decoder.bias");
    }
    Impl(const Impl&) = delete;
    Impl& operator=(const Impl&) = delete;

    ModelConfig cfg;
    WeightStore store;
    std::size_t lookahead;
    ModelParams p;
  };

  explicit Model(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<const Impl> impl_;
};

struct RandomInit {
  std::uint64_t seed = 0;
};

inline Model build_model(const ModelConfig& cfg, WeightStore weights) { return Model::build(cfg, std::move(weights)); }
inline Model build_model(const ModelConfig& cfg, RandomInit init) { return Model::random(cfg, init.seed); }

inline void save_weights(const Model& model, const std::string& path) { save_weights(path, model.weights()); }

// Loads a weight container; the config comes from the file's manifest unless one is given.
inline Model load_model(const std::string& weights_path, const ModelConfig* cfg_override = nullptr) {
  WeightStore store = load_weights(weights_path);
  if (cfg_override) return Model::build(*cfg_override, std::move(store));
  if (!store.config) throw WeightError(weights_path + ": no embedded config; pass one explicitly");
  const ModelConfig cfg = *store.config;
  return Model::build(cfg, std::move(store));
}

}  // namespace vtn
