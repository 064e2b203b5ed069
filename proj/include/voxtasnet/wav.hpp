#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "voxtasnet/audio.hpp"
#include "voxtasnet/error.hpp"

namespace vtn {

enum class SampleFormat { Int16, Float32 };

struct WavInfo {
  int channels = 0;
  int sample_rate = 0;
  std::size_t frames = 0;
  SampleFormat format = SampleFormat::Int16;
};

namespace wav_detail {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

inline std::uint16_t u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
inline std::uint32_t u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}
inline void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

struct Parsed {
  WavInfo info;
  std::size_t data_offset = 0;
  std::size_t data_size = 0;
};

// Walks the RIFF chunk list. Unknown chunks are skipped (with RIFF word padding).
inline Parsed parse_header(const std::vector<unsigned char>& bytes, const std::string& path) {
  auto fail = [&](const std::string& why) { return ParseError(path + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  Parsed p;
  bool have_fmt = false, have_data = false;
  std::uint16_t tag = 0, bits = 0, channels = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* h = bytes.data() + pos;
    std::size_t size = u32(h + 4);
    std::size_t body = pos + 8;
    if (std::memcmp(h, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw fail("truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      tag = u16(f);
      channels = u16(f + 2);
      rate = u32(f + 4);
      bits = u16(f + 14);
      if (tag == kFormatExtensible) {
        if (size < 40) throw fail("truncated extensible fmt chunk");
        tag = u16(f + 24);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(h, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      if (body + size > bytes.size()) throw fail("data chunk extends past end of file");
      p.data_offset = body;
      p.data_size = size;
      have_data = true;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (!have_data) throw fail("missing data chunk");

  if (tag == kFormatPcm && bits == 16) {
    p.info.format = SampleFormat::Int16;
  } else if (tag == kFormatFloat && bits == 32) {
    p.info.format = SampleFormat::Float32;
  } else {
    throw UnsupportedFormat(path + ": unsupported codec/bit depth (format tag " + std::to_string(tag) + ", " +
                            std::to_string(bits) + " bits); only PCM int16 and IEEE float32 are read");
  }
  if (channels != 1 && channels != 2) {
    throw UnsupportedFormat(path + ": " + std::to_string(channels) + " channels; only mono and stereo are supported");
  }
  if (rate == 0) throw fail("zero sample rate");
  std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  if (p.data_size % frame_bytes != 0) throw fail("data chunk size is not a whole number of frames");
  p.info.channels = channels;
  p.info.sample_rate = static_cast<int>(rate);
  p.info.frames = p.data_size / frame_bytes;
  return p;
}

inline std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace wav_detail

inline WavInfo read_wav_info(const std::string& path) {
  return wav_detail::parse_header(wav_detail::slurp(path), path).info;
}

// Int16 samples are scaled by 1/32768; float32 samples pass through unmodified.
inline AudioClip read_wav(const std::string& path) {
  using namespace wav_detail;
  const auto bytes = slurp(path);
  const Parsed p = parse_header(bytes, path);
  const std::size_t nch = static_cast<std::size_t>(p.info.channels);
  AudioClip clip(nch, p.info.frames, p.info.sample_rate);
  const unsigned char* d = bytes.data() + p.data_offset;
  for (std::size_t t = 0; t < p.info.frames; ++t) {
    for (std::size_t c = 0; c < nch; ++c) {
      const std::size_t i = t * nch + c;
      if (p.info.format == SampleFormat::Int16) {
        clip.at(c, t) = static_cast<float>(static_cast<std::int16_t>(u16(d + 2 * i))) / 32768.0f;
      } else {
        clip.at(c, t) = std::bit_cast<float>(u32(d + 4 * i));
      }
    }
  }
  return clip;
}

// Out-of-range amplitudes are saturated on the int16 path.
inline std::int16_t to_int16(float x) {
  if (std::isnan(x)) return 0;
  const float scaled = std::nearbyint(x * 32768.0f);
  if (scaled < -32768.0f) return -32768;
  if (scaled > 32767.0f) return 32767;
  return static_cast<std::int16_t>(scaled);
}

inline void write_wav(const std::string& path, const AudioClip& clip, SampleFormat format) {
  using namespace wav_detail;
  const std::uint16_t nch = static_cast<std::uint16_t>(clip.channels());
  const std::uint16_t bits = format == SampleFormat::Int16 ? 16 : 32;
  const std::uint32_t block = nch * (bits / 8u);
  const std::uint64_t data_size = static_cast<std::uint64_t>(clip.frames()) * block;
  if (data_size > 0xFFFFFFFFull - 36) throw IoError(path + ": clip too long for a RIFF file");

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, static_cast<std::uint32_t>(36 + data_size));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, format == SampleFormat::Int16 ? kFormatPcm : kFormatFloat);
  put16(out, nch);
  put32(out, static_cast<std::uint32_t>(clip.sample_rate()));
  put32(out, static_cast<std::uint32_t>(clip.sample_rate()) * block);
  put16(out, static_cast<std::uint16_t>(block));
  put16(out, bits);
  put_tag(out, "data");
  put32(out, static_cast<std::uint32_t>(data_size));
  for (std::size_t t = 0; t < clip.frames(); ++t) {
    for (std::size_t c = 0; c < clip.channels(); ++c) {
      if (format == SampleFormat::Int16) {
        put16(out, static_cast<std::uint16_t>(to_int16(clip.at(c, t))));
      } else {
        put32(out, std::bit_cast<std::uint32_t>(clip.at(c, t)));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write to '" + path + "' failed");
}

}  // namespace vtn
