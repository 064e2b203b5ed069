#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include <fftw3.h>

#include "voxtasnet/audio.hpp"
#include "voxtasnet/error.hpp"

namespace vtn {

struct LossConfig {
  double time_weight = 0.875;
  double spec_weight = 0.125;
  std::vector<double> window_lengths_s{0.01, 0.02, 0.09};  // hop = window / 2, Hann, FFT = next pow2

  void validate() const {
    if (time_weight < 0.0 || spec_weight < 0.0) throw ConfigError("loss: weights must be non-negative");
    if (std::abs(time_weight + spec_weight - 1.0) > 1e-9) {
      throw ConfigError("loss: time and spectral weights must sum to 1 (got " + std::to_string(time_weight) + " + " +
                        std::to_string(spec_weight) + ")");
    }
    if (window_lengths_s.empty()) throw ConfigError("loss: at least one spectral resolution required");
    for (std::size_t i = 0; i < window_lengths_s.size(); ++i) {
      if (!(window_lengths_s[i] > 0.0)) throw ConfigError("loss: window lengths must be positive");
      if (i > 0 && window_lengths_s[i] < window_lengths_s[i - 1]) throw ConfigError("loss: window lengths must be ascending");
    }
  }
};

struct Resolution {
  std::size_t window = 0;
  std::size_t hop = 0;
  std::size_t fft_size = 0;
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline std::vector<Resolution> loss_resolutions(const LossConfig& cfg, int sample_rate) {
  std::vector<Resolution> out;
  for (double w : cfg.window_lengths_s) {
    const auto win = static_cast<std::size_t>(std::lround(w * sample_rate));
    if (win < 2) throw ConfigError("loss: window shorter than two samples at this rate");
    out.push_back({win, win / 2, next_pow2(win)});
  }
  return out;
}

// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  return w;
}

// Mean over channels and samples of |a - b|.
inline double time_l1(const AudioClip& a, const AudioClip& b) {
  require_same_shape(a, b, "time_l1");
  const auto x = a.data(), y = b.data();
  if (x.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += std::abs(static_cast<double>(x[i]) - static_cast<double>(y[i]));
  return sum / static_cast<double>(x.size());
}

namespace loss_detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Real-to-complex transform of a fixed size. Planning holds the global planner lock.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(std::size_t k) const { return std::hypot(out_[k][0], out_[k][1]); }
  std::size_t bins() const { return n_ / 2 + 1; }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace loss_detail

// Mean | |STFT a| - |STFT b| | over channels, frames and bins for one resolution.
inline double spectral_l1_single(const AudioClip& a, const AudioClip& b, const Resolution& res) {
  require_same_shape(a, b, "spectral_l1");
  if (a.frames() < res.window) {
    throw TooShort("spectral_l1: " + std::to_string(a.frames()) + " samples is shorter than the " +
                   std::to_string(res.window) + "-sample window");
  }
  const auto window = hann_window(res.window);
  const std::size_t frames = (a.frames() - res.window) / res.hop + 1;
  loss_detail::RealFft fa(res.fft_size), fb(res.fft_size);
  double sum = 0.0;
  for (std::size_t c = 0; c < a.channels(); ++c) {
    const auto xa = a.channel(c), xb = b.channel(c);
    for (std::size_t f = 0; f < frames; ++f) {
      double* ia = fa.input();
      double* ib = fb.input();
      for (std::size_t i = 0; i < res.fft_size; ++i) {
        const bool inside = i < res.window;
        ia[i] = inside ? window[i] * xa[f * res.hop + i] : 0.0;
        ib[i] = inside ? window[i] * xb[f * res.hop + i] : 0.0;
      }
      fa.execute();
      fb.execute();
      for (std::size_t k = 0; k < fa.bins(); ++k) sum += std::abs(fa.magnitude(k) - fb.magnitude(k));
    }
  }
  return sum / static_cast<double>(a.channels() * frames * fa.bins());
}

// Equal-weight mean of the per-resolution spectral distances.
inline double spectral_l1(const AudioClip& a, const AudioClip& b, const LossConfig& cfg = {}) {
  cfg.validate();
  require_same_shape(a, b, "spectral_l1");
  const auto resolutions = loss_resolutions(cfg, a.sample_rate());
  double sum = 0.0;
  for (const auto& r : resolutions) sum += spectral_l1_single(a, b, r);
  return sum / static_cast<double>(resolutions.size());
}

struct LossValue {
  double time = 0.0;
  double spectral = 0.0;
  double combined = 0.0;
};

inline LossValue loss_components(const AudioClip& a, const AudioClip& b, const LossConfig& cfg = {}) {
  cfg.validate();
  LossValue v;
  v.time = time_l1(a, b);
  v.spectral = spectral_l1(a, b, cfg);
  v.combined = cfg.time_weight * v.time + cfg.spec_weight * v.spectral;
  return v;
}

inline double combined_loss(const AudioClip& a, const AudioClip& b, const LossConfig& cfg = {}) {
  return loss_components(a, b, cfg).combined;
}

}  // namespace vtn
