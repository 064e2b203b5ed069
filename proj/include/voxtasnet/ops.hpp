#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "voxtasnet/error.hpp"
#include "voxtasnet/tensor.hpp"

// Numeric primitives of the network. All convolutions are cross-correlations.
// Every output element is accumulated in float, starting from zero, in a fixed
// order (input channel, then kernel row, then tap) and the bias is added last;
// the streaming engine relies on this order to reproduce offline results.
namespace vtn::ops {

enum class Padding { Causal, Symmetric };

struct ConvSpec {
  std::size_t kernel_size = 1;
  std::size_t dilation = 1;
  Padding padding = Padding::Causal;
  std::size_t stride = 1;
  std::size_t groups = 1;

  std::size_t total_pad() const { return (kernel_size - 1) * dilation; }
  // Symmetric padding puts the odd frame on the left.
  std::size_t left_pad() const { return padding == Padding::Causal ? total_pad() : (total_pad() + 1) / 2; }
  std::size_t right_pad() const { return padding == Padding::Causal ? 0 : total_pad() / 2; }
};

struct Stride2 {
  std::size_t h = 1, w = 1;
};
struct Pad2 {
  std::size_t h = 0, w = 0;
};

namespace detail {

inline void check_bias(std::span<const float> bias, std::size_t channels, const char* what) {
  if (!bias.empty() && bias.size() != channels) {
    throw ShapeError(std::string(what) + ": bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(channels));
  }
}

inline float prelu_value(float x, float slope) { return x >= 0.0f ? x : slope * x; }

inline float sigmoid_value(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Running statistics of a cumulative layer norm: all channels of all frames seen so far.
struct CumulativeStats {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::uint64_t count = 0;

  void add(float x) {
    const double v = x;
    sum += v;
    sum_sq += v * v;
    ++count;
  }

  // (mean, 1/sqrt(var + eps)) of everything added so far.
  std::pair<double, double> moments(double eps) const {
    const double n = static_cast<double>(count);
    const double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    if (var < 0.0) var = 0.0;
    return {mean, 1.0 / std::sqrt(var + eps)};
  }
};

inline float normalize_value(float x, double mean, double inv_std, float gain, float bias) {
  return static_cast<float>((x - mean) * inv_std) * gain + bias;
}

}  // namespace detail

// input [C_in x T], weights [C_out x C_in/groups x K] -> [C_out x T'].
inline Tensor conv1d(const Tensor& input, const Tensor& weights, std::span<const float> bias, const ConvSpec& spec) {
  require_rank(input, 2, "conv1d input");
  require_rank(weights, 3, "conv1d weights");
  if (spec.kernel_size == 0 || spec.dilation == 0 || spec.stride == 0 || spec.groups == 0) {
    throw ShapeError("conv1d: kernel size, dilation, stride and groups must be positive");
  }
  const std::size_t cin = input.dim(0), t_in = input.dim(1);
  const std::size_t cout = weights.dim(0), k = spec.kernel_size, g = spec.groups;
  if (cin % g != 0 || cout % g != 0) throw ShapeError("conv1d: channels not divisible by groups");
  const std::size_t cin_g = cin / g, cout_g = cout / g;
  if (weights.dim(1) != cin_g || weights.dim(2) != k) {
    throw ShapeError("conv1d: weights " + shape_str(weights.shape()) + " do not match input channels " +
                     std::to_string(cin) + ", groups " + std::to_string(g) + ", kernel " + std::to_string(k));
  }
  detail::check_bias(bias, cout, "conv1d");

  const std::size_t lp = spec.left_pad(), rp = spec.right_pad();
  const std::size_t padded = t_in + lp + rp;
  const std::size_t span = spec.total_pad() + 1;
  if (padded < span) throw ShapeError("conv1d: input shorter than the dilated kernel");
  const std::size_t t_out = (padded - span) / spec.stride + 1;

  Tensor xpad({cin, padded});
  for (std::size_t c = 0; c < cin; ++c) {
    auto src = input.row(c);
    std::copy(src.begin(), src.end(), xpad.row(c).begin() + static_cast<std::ptrdiff_t>(lp));
  }

  Tensor out({cout, t_out});
  for (std::size_t oc = 0; oc < cout; ++oc) {
    float* o = out.row(oc).data();
    const std::size_t group = oc / cout_g;
    for (std::size_t icg = 0; icg < cin_g; ++icg) {
      const float* x = xpad.row(group * cin_g + icg).data();
      for (std::size_t tap = 0; tap < k; ++tap) {
        const float w = weights.at(oc, icg, tap);
        const float* xs = x + tap * spec.dilation;
        if (spec.stride == 1) {
          for (std::size_t t = 0; t < t_out; ++t) o[t] += w * xs[t];
        } else {
          for (std::size_t t = 0; t < t_out; ++t) o[t] += w * xs[t * spec.stride];
        }
      }
    }
    if (!bias.empty()) {
      for (std::size_t t = 0; t < t_out; ++t) o[t] += bias[oc];
    }
  }
  return out;
}

// Depthwise conv (groups == channels) followed by a 1x1 pointwise conv.
// dw_weights [C x 1 x K], pw_weights [C_out x C x 1].
inline Tensor depthwise_separable(const Tensor& input, const Tensor& dw_weights, std::span<const float> dw_bias,
                                  const Tensor& pw_weights, std::span<const float> pw_bias, ConvSpec spec) {
  require_rank(input, 2, "depthwise_separable input");
  if (spec.groups != input.dim(0)) {
    throw ShapeError("depthwise_separable: depthwise groups (" + std::to_string(spec.groups) +
                     ") must equal channels (" + std::to_string(input.dim(0)) + ")");
  }
  Tensor depth = conv1d(input, dw_weights, dw_bias, spec);
  return conv1d(depth, pw_weights, pw_bias, ConvSpec{});
}

// input [C x H x W], weights [O x C x KH x KW] -> [O x H' x W'], zero padding.
inline Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const float> bias, Stride2 stride, Pad2 pad) {
  require_rank(input, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t o = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  if (weights.dim(1) != c) {
    throw ShapeError("conv2d: weights " + shape_str(weights.shape()) + " expect " + std::to_string(weights.dim(1)) +
                     " input channels, got " + std::to_string(c));
  }
  if (stride.h == 0 || stride.w == 0) throw ShapeError("conv2d: stride must be positive");
  if (h + 2 * pad.h < kh || w + 2 * pad.w < kw) throw ShapeError("conv2d: input smaller than kernel");
  detail::check_bias(bias, o, "conv2d");
  const std::size_t oh = (h + 2 * pad.h - kh) / stride.h + 1;
  const std::size_t ow = (w + 2 * pad.w - kw) / stride.w + 1;

  Tensor out({o, oh, ow});
  std::vector<double> acc(ow);
  for (std::size_t oc = 0; oc < o; ++oc) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t r = 0; r < kh; ++r) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride.h + r) - static_cast<std::ptrdiff_t>(pad.h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const float* x = input.ptr() + (ic * h + static_cast<std::size_t>(iy)) * w;
          const float* wk = weights.ptr() + ((oc * c + ic) * kh + r) * kw;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * stride.w) - static_cast<std::ptrdiff_t>(pad.w);
            double a = acc[ox];
            for (std::size_t q = 0; q < kw; ++q) {
              const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(q);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              a += static_cast<double>(wk[q]) * static_cast<double>(x[ix]);
            }
            acc[ox] = a;
          }
        }
      }
      const double b = bias.empty() ? 0.0 : static_cast<double>(bias[oc]);
      float* y = out.ptr() + (oc * oh + oy) * ow;
      for (std::size_t ox = 0; ox < ow; ++ox) y[ox] = static_cast<float>(acc[ox] + b);
    }
  }
  return out;
}

// Adjoint of conv2d: input [C x H x W], weights [C x O x KH x KW] -> [O x H' x W'],
// H' = (H - 1) * stride.h - 2 * pad.h + KH (same for W).
inline Tensor conv2d_transposed(const Tensor& input, const Tensor& weights, std::span<const float> bias, Stride2 stride,
                                Pad2 pad) {
  require_rank(input, 3, "conv2d_transposed input");
  require_rank(weights, 4, "conv2d_transposed weights");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t o = weights.dim(1), kh = weights.dim(2), kw = weights.dim(3);
  if (weights.dim(0) != c) {
    throw ShapeError("conv2d_transposed: weights " + shape_str(weights.shape()) + " expect " +
                     std::to_string(weights.dim(0)) + " input channels, got " + std::to_string(c));
  }
  if (stride.h == 0 || stride.w == 0) throw ShapeError("conv2d_transposed: stride must be positive");
  const std::ptrdiff_t full_h = static_cast<std::ptrdiff_t>((h - 1) * stride.h + kh);
  const std::ptrdiff_t full_w = static_cast<std::ptrdiff_t>((w - 1) * stride.w + kw);
  const std::ptrdiff_t oh = full_h - 2 * static_cast<std::ptrdiff_t>(pad.h);
  const std::ptrdiff_t ow = full_w - 2 * static_cast<std::ptrdiff_t>(pad.w);
  if (h == 0 || w == 0 || oh <= 0 || ow <= 0) throw ShapeError("conv2d_transposed: padding removes the whole output");
  detail::check_bias(bias, o, "conv2d_transposed");

  const std::size_t plane = static_cast<std::size_t>(oh * ow);
  std::vector<double> acc(o * plane, 0.0);
  for (std::size_t ic = 0; ic < c; ++ic) {
    for (std::size_t iy = 0; iy < h; ++iy) {
      for (std::size_t ix = 0; ix < w; ++ix) {
        const double x = input.at(ic, iy, ix);
        for (std::size_t oc = 0; oc < o; ++oc) {
          for (std::size_t r = 0; r < kh; ++r) {
            const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(iy * stride.h + r) - static_cast<std::ptrdiff_t>(pad.h);
            if (y < 0 || y >= oh) continue;
            const float* wk = weights.ptr() + ((ic * o + oc) * kh + r) * kw;
            double* dst = acc.data() + oc * plane + static_cast<std::size_t>(y) * static_cast<std::size_t>(ow);
            const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ix * stride.w) - static_cast<std::ptrdiff_t>(pad.w);
            for (std::size_t q = 0; q < kw; ++q) {
              const std::ptrdiff_t xx = x0 + static_cast<std::ptrdiff_t>(q);
              if (xx < 0 || xx >= ow) continue;
              dst[xx] += x * static_cast<double>(wk[q]);
            }
          }
        }
      }
    }
  }
  Tensor out({o, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t oc = 0; oc < o; ++oc) {
    const double b = bias.empty() ? 0.0 : static_cast<double>(bias[oc]);
    for (std::size_t i = 0; i < plane; ++i) out.ptr()[oc * plane + i] = static_cast<float>(acc[oc * plane + i] + b);
  }
  return out;
}

// x [C x ...], one slope per channel (dimension 0).
inline Tensor prelu(const Tensor& x, std::span<const float> slopes) {
  if (x.rank() < 1 || slopes.size() != x.dim(0)) {
    throw ShapeError("prelu: " + std::to_string(slopes.size()) + " slopes for input " + shape_str(x.shape()));
  }
  Tensor out = x;
  const std::size_t per = x.size() / x.dim(0);
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    float* p = out.ptr() + c * per;
    for (std::size_t i = 0; i < per; ++i) p[i] = detail::prelu_value(p[i], slopes[c]);
  }
  return out;
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = detail::sigmoid_value(v);
  return out;
}

inline constexpr double kNormEps = 1e-8;

// Frame t is normalized with the mean/variance of all channels over frames 0..t,
// then scaled by a per-channel gain and shifted by a per-channel bias.
inline Tensor cumulative_layer_norm(const Tensor& input, std::span<const float> gain, std::span<const float> bias,
                                    double eps = kNormEps) {
  require_rank(input, 2, "cumulative_layer_norm input");
  const std::size_t ch = input.dim(0), frames = input.dim(1);
  if (gain.size() != ch || bias.size() != ch) throw ShapeError("cumulative_layer_norm: gain/bias size mismatch");
  if (!(eps > 0.0)) throw ShapeError("cumulative_layer_norm: eps must be positive");
  Tensor out({ch, frames});
  detail::CumulativeStats stats;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < ch; ++c) stats.add(input.at(c, t));
    const auto [mean, inv_std] = stats.moments(eps);
    for (std::size_t c = 0; c < ch; ++c) {
      out.at(c, t) = detail::normalize_value(input.at(c, t), mean, inv_std, gain[c], bias[c]);
    }
  }
  return out;
}

}  // namespace vtn::ops
