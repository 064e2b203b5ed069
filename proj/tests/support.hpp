#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "voxtasnet/voxtasnet.hpp"

namespace testing_support {

inline vtn::Tensor random_tensor(vtn::Shape shape, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  vtn::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

inline std::vector<float> random_vector(std::size_t n, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline vtn::AudioClip random_clip(std::size_t channels, std::size_t frames, int rate, std::uint32_t seed,
                                  float amplitude = 1.0f) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-amplitude, amplitude);
  vtn::AudioClip clip(channels, frames, rate);
  for (auto& v : clip.data()) v = d(rng);
  return clip;
}

inline vtn::AudioClip gaussian_clip(std::size_t channels, std::size_t frames, int rate, std::uint32_t seed,
                                    float sigma = 0.1f) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> d(0.0f, sigma);
  vtn::AudioClip clip(channels, frames, rate);
  for (auto& v : clip.data()) v = d(rng);
  return clip;
}

inline float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline float max_abs_diff(const vtn::AudioClip& a, const vtn::AudioClip& b) { return max_abs_diff(a.data(), b.data()); }

// Small model with the same structure as the reference one: a symmetric
// first group followed by causal groups.
inline vtn::ModelConfig tiny_config() {
  vtn::ModelConfig c;
  c.sample_rate = 8000;
  c.encoder = {8, 16, 8};
  c.separator.channels = 12;
  c.separator.kernel = 3;
  c.separator.layers_per_group = {3, 2};
  c.separator.noncausal_groups = 1;
  return c;
}

// Reference topology (kernel, stride, groups, dilations) at reduced width.
inline vtn::ModelConfig narrow_reference_config() {
  vtn::ModelConfig c = vtn::ModelConfig::reference();
  c.encoder.embed_dim = 64;
  c.separator.channels = 64;
  return c;
}

// A model whose output is the channel mid (L + R) / 2 on both channels: the
// encoder averages the two input rows, the mask saturates to exactly 1 and
// the decoder copies each embedding frame back. Its separator weights are
// random but irrelevant.
inline vtn::Model mid_model(int rate = 8000) {
  vtn::ModelConfig c;
  c.sample_rate = rate;
  c.encoder = {16, 16, 16};
  c.separator.channels = 8;
  c.separator.kernel = 3;
  c.separator.layers_per_group = {2, 2};
  c.separator.noncausal_groups = 1;
  vtn::WeightStore w = vtn::random_init(c, 3);
  const std::size_t n = c.encoder.embed_dim;
  auto& enc = w.get("encoder.weight");
  auto& dec = w.get("decoder.weight");
  for (auto& v : enc.data()) v = 0.0f;
  for (auto& v : dec.data()) v = 0.0f;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t r = 0; r < 3; ++r) enc.at(k, 0, r, k) = 0.5f;
    dec.at(k, 0, 1, k) = 1.0f;
  }
  for (auto& v : w.get("encoder.bias").data()) v = 0.0f;
  for (auto& v : w.get("decoder.bias").data()) v = 0.0f;
  for (auto& v : w.get("separator.mask.weight").data()) v = 0.0f;
  for (auto& v : w.get("separator.mask.bias").data()) v = 30.0f;
  return vtn::build_model(c, std::move(w));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vtn_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

struct Stems {
  vtn::AudioClip vocals, bass, drums, other;
};

// Writes a MUSDB-style track directory; the mixture is the sum of the stems.
inline void write_track(const std::filesystem::path& root, const std::string& id, const Stems& s) {
  const auto dir = root / id;
  std::filesystem::create_directories(dir);
  const auto fmt = vtn::SampleFormat::Float32;
  vtn::write_wav((dir / "vocals.wav").string(), s.vocals, fmt);
  vtn::write_wav((dir / "bass.wav").string(), s.bass, fmt);
  vtn::write_wav((dir / "drums.wav").string(), s.drums, fmt);
  vtn::write_wav((dir / "other.wav").string(), s.other, fmt);
  vtn::write_wav((dir / "mixture.wav").string(), vtn::mix_linear({s.vocals, s.bass, s.drums, s.other}), fmt);
}

inline Stems random_stems(std::size_t frames, int rate, std::uint32_t seed) {
  return {gaussian_clip(2, frames, rate, seed), gaussian_clip(2, frames, rate, seed + 1),
          gaussian_clip(2, frames, rate, seed + 2), gaussian_clip(2, frames, rate, seed + 3)};
}

// Vocals with a fixed left/right level imbalance over a centred (dual mono)
// accompaniment.
inline Stems asymmetric_stems(std::size_t frames, int rate, std::uint32_t seed, float right_gain = 0.25f) {
  vtn::AudioClip mono = gaussian_clip(1, frames, rate, seed, 0.1f);
  vtn::AudioClip voice = gaussian_clip(1, frames, rate, seed + 1, 0.1f);
  std::vector<float> a(mono.channel(0).begin(), mono.channel(0).end());
  std::vector<float> v(voice.channel(0).begin(), voice.channel(0).end());
  std::vector<float> vr(v);
  for (auto& x : vr) x *= right_gain;
  const std::vector<float> zero(frames, 0.0f);
  return {vtn::AudioClip({v, vr}, rate), vtn::AudioClip({a, a}, rate), vtn::AudioClip({zero, zero}, rate),
          vtn::AudioClip({zero, zero}, rate)};
}

}  // namespace testing_support
