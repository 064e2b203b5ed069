#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "voxtasnet/error.hpp"

namespace vtn {

// Planar multi-channel waveform. Samples are stored channel-major:
// channel c occupies [c * frames, (c + 1) * frames).
class AudioClip {
 public:
  AudioClip() = default;

  AudioClip(std::size_t channels, std::size_t frames, int sample_rate)
      : channels_(channels), frames_(frames), sample_rate_(sample_rate),
        data_(channels * frames, 0.0f) {
    validate();
  }

  AudioClip(std::vector<std::vector<float>> channels, int sample_rate)
      : channels_(channels.size()), sample_rate_(sample_rate) {
    frames_ = channels.empty() ? 0 : channels.front().size();
    for (const auto& ch : channels) {
      if (ch.size() != frames_) throw ShapeError("AudioClip: channels have unequal frame counts");
    }
    data_.reserve(channels_ * frames_);
    for (const auto& ch : channels) data_.insert(data_.end(), ch.begin(), ch.end());
    validate();
  }

  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }
  int sample_rate() const { return sample_rate_; }
  bool empty() const { return frames_ == 0; }

  std::span<float> channel(std::size_t c) { return {data_.data() + c * frames_, frames_}; }
  std::span<const float> channel(std::size_t c) const { return {data_.data() + c * frames_, frames_}; }

  float& at(std::size_t c, std::size_t t) { return data_[c * frames_ + t]; }
  float at(std::size_t c, std::size_t t) const { return data_[c * frames_ + t]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  double duration_s() const { return static_cast<double>(frames_) / sample_rate_; }

  // Copy of frames [begin, begin + count).
  AudioClip slice(std::size_t begin, std::size_t count) const {
    if (begin + count > frames_) throw ShapeError("AudioClip::slice out of range");
    AudioClip out(channels_, count, sample_rate_);
    for (std::size_t c = 0; c < channels_; ++c) {
      auto src = channel(c).subspan(begin, count);
      std::copy(src.begin(), src.end(), out.channel(c).begin());
    }
    return out;
  }

  // Single-channel clip holding channel c.
  AudioClip channel_clip(std::size_t c) const {
    std::vector<std::vector<float>> one(1, std::vector<float>(channel(c).begin(), channel(c).end()));
    return AudioClip(std::move(one), sample_rate_);
  }

  bool operator==(const AudioClip&) const = default;

 private:
  void validate() const {
    if (channels_ < 1 || channels_ > 2) throw ShapeError("AudioClip: channel count must be 1 or 2, got " + std::to_string(channels_));
    if (sample_rate_ <= 0) throw ShapeError("AudioClip: sample rate must be positive");
  }

  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  int sample_rate_ = 0;
  std::vector<float> data_;
};

inline void require_same_shape(const AudioClip& a, const AudioClip& b, const char* what) {
  if (a.channels() != b.channels() || a.frames() != b.frames() || a.sample_rate() != b.sample_rate()) {
    throw ShapeError(std::string(what) + ": clips differ in channels, length or sample rate (" +
                     std::to_string(a.channels()) + "x" + std::to_string(a.frames()) + "@" + std::to_string(a.sample_rate()) +
                     " vs " + std::to_string(b.channels()) + "x" + std::to_string(b.frames()) + "@" +
                     std::to_string(b.sample_rate()) + ")");
  }
}

// Element-wise sum of equally shaped clips, no normalization.
inline AudioClip mix_linear(std::span<const AudioClip* const> clips) {
  if (clips.empty()) throw ShapeError("mix_linear: no inputs");
  AudioClip out = *clips.front();
  for (std::size_t i = 1; i < clips.size(); ++i) {
    require_same_shape(out, *clips[i], "mix_linear");
    auto dst = out.data();
    auto src = clips[i]->data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  return out;
}

inline AudioClip mix_linear(std::initializer_list<std::reference_wrapper<const AudioClip>> clips) {
  std::vector<const AudioClip*> ptrs;
  for (const auto& c : clips) ptrs.push_back(&c.get());
  return mix_linear(std::span<const AudioClip* const>(ptrs));
}

// Named stems of one track; all members share rate and length.
class StemSet {
 public:
  void add(const std::string& name, AudioClip clip) {
    if (!stems_.empty()) require_same_shape(stems_.begin()->second, clip, ("StemSet stem '" + name + "'").c_str());
    stems_.insert_or_assign(name, std::move(clip));
  }

  bool contains(const std::string& name) const { return stems_.count(name) != 0; }

  const AudioClip& get(const std::string& name) const {
    auto it = stems_.find(name);
    if (it == stems_.end()) throw MissingStem("missing stem '" + name + "'");
    return it->second;
  }

  AudioClip sum(std::initializer_list<std::string> names) const {
    std::vector<const AudioClip*> ptrs;
    for (const auto& n : names) ptrs.push_back(&get(n));
    return mix_linear(std::span<const AudioClip* const>(ptrs));
  }

  std::size_t size() const { return stems_.size(); }
  auto begin() const { return stems_.begin(); }
  auto end() const { return stems_.end(); }

 private:
  std::map<std::string, AudioClip> stems_;
};

}  // namespace vtn
