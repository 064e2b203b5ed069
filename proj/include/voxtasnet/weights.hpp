#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxtasnet/config.hpp"
#include "voxtasnet/error.hpp"
#include "voxtasnet/tensor.hpp"

namespace vtn {

enum class ParamKind { Weight, Bias, NormGain, NormBias, Slope };

struct TensorSpec {
  std::string name;
  Shape shape;
  ParamKind kind = ParamKind::Weight;
  std::size_t fan_in = 1;  // for Weight/Bias initialization
};

// Every tensor the network needs, in canonical (file) order.
inline std::vector<TensorSpec> tensor_specs(const ModelConfig& cfg) {
  const std::size_t n = cfg.encoder.embed_dim, l = cfg.encoder.kernel;
  const std::size_t b = cfg.separator.channels, p = cfg.separator.kernel;
  const std::size_t stacked = 2 * n;
  std::vector<TensorSpec> s;
  s.push_back({"encoder.weight", {n, 1, 3, l}, ParamKind::Weight, 3 * l});
  s.push_back({"encoder.bias", {n}, ParamKind::Bias, 3 * l});
  s.push_back({"separator.input_norm.gain", {stacked}, ParamKind::NormGain});
  s.push_back({"separator.input_norm.bias", {stacked}, ParamKind::NormBias});
  s.push_back({"separator.bottleneck.weight", {b, stacked, 1}, ParamKind::Weight, stacked});
  s.push_back({"separator.bottleneck.bias", {b}, ParamKind::Bias, stacked});
  const auto plan = layer_plan(cfg);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::string pre = "separator.blocks." + std::to_string(i) + ".";
    s.push_back({pre + "pointwise_in.weight", {b, b, 1}, ParamKind::Weight, b});
    s.push_back({pre + "pointwise_in.bias", {b}, ParamKind::Bias, b});
    s.push_back({pre + "prelu_in.slope", {b}, ParamKind::Slope});
    s.push_back({pre + "norm_in.gain", {b}, ParamKind::NormGain});
    s.push_back({pre + "norm_in.bias", {b}, ParamKind::NormBias});
    s.push_back({pre + "depthwise.weight", {b, 1, p}, ParamKind::Weight, p});
    s.push_back({pre + "depthwise.bias", {b}, ParamKind::Bias, p});
    s.push_back({pre + "prelu_mid.slope", {b}, ParamKind::Slope});
    s.push_back({pre + "norm_mid.gain", {b}, ParamKind::NormGain});
    s.push_back({pre + "norm_mid.bias", {b}, ParamKind::NormBias});
    s.push_back({pre + "pointwise_out.weight", {b, b, 1}, ParamKind::Weight, b});
    s.push_back({pre + "pointwise_out.bias", {b}, ParamKind::Bias, b});
  }
  s.push_back({"separator.output_prelu.slope", {b}, ParamKind::Slope});
  s.push_back({"separator.mask.weight", {stacked, b, 1}, ParamKind::Weight, b});
  s.push_back({"separator.mask.bias", {stacked}, ParamKind::Bias, b});
  // Transposed conv: [in = N, out = 1, 3, L]; fan-in follows the output side.
  s.push_back({"decoder.weight", {n, 1, 3, l}, ParamKind::Weight, 3 * l});
  s.push_back({"decoder.bias", {1}, ParamKind::Bias, 3 * l});
  return s;
}

inline constexpr std::uint32_t kWeightFormatVersion = 1;

class WeightStore {
 public:
  void set(const std::string& name, Tensor t) {
    if (!tensors_.count(name)) order_.push_back(name);
    tensors_.insert_or_assign(name, std::move(t));
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const Tensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw WeightError("missing tensor '" + name + "'");
    return it->second;
  }
  Tensor& get(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw WeightError("missing tensor '" + name + "'");
    return it->second;
  }

  // Names in insertion (file) order.
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_) n += t.size();
    return n;
  }

  std::string config_hash;
  std::uint32_t format_version = kWeightFormatVersion;
  std::optional<ModelConfig> config;

  bool operator==(const WeightStore& o) const { return order_ == o.order_ && tensors_ == o.tensors_; }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> tensors_;
};

// Throws WeightError naming the first missing, mis-shaped or unexpected tensor.
inline void validate_weights(const WeightStore& store, const ModelConfig& cfg) {
  const auto specs = tensor_specs(cfg);
  for (const auto& spec : specs) {
    if (!store.contains(spec.name)) throw WeightError("missing tensor '" + spec.name + "'");
    const Tensor& t = store.get(spec.name);
    if (t.shape() != spec.shape) {
      throw WeightError("tensor '" + spec.name + "' has shape " + shape_str(t.shape()) + ", expected " + shape_str(spec.shape));
    }
  }
  if (store.size() != specs.size()) {
    for (const auto& name : store.names()) {
      bool known = false;
      for (const auto& spec : specs) known = known || spec.name == name;
      if (!known) throw WeightError("unexpected tensor '" + name + "'");
    }
  }
  if (!store.config_hash.empty() && store.config_hash != config_hash(cfg)) {
    throw WeightError("weights were saved for config " + store.config_hash + ", not " + config_hash(cfg));
  }
}

// Uniform(-k, k), k = 1/sqrt(fan_in), for conv weights and biases; norms start
// at identity and PReLU slopes at 0.25.
inline WeightStore random_init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  WeightStore store;
  for (const auto& spec : tensor_specs(cfg)) {
    Tensor t(spec.shape);
    switch (spec.kind) {
      case ParamKind::Weight:
      case ParamKind::Bias: {
        const double k = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        for (auto& v : t.data()) v = static_cast<float>(-k + 2.0 * k * unit());
        break;
      }
      case ParamKind::NormGain:
        for (auto& v : t.data()) v = 1.0f;
        break;
      case ParamKind::NormBias:
        break;
      case ParamKind::Slope:
        for (auto& v : t.data()) v = 0.25f;
        break;
    }
    store.set(spec.name, std::move(t));
  }
  store.config_hash = config_hash(cfg);
  store.config = cfg;
  return store;
}

// ---- container: "VTNW" | u32 version | u64 manifest length | manifest | payload
//
// The manifest is JSON: {"format", "version", "config_hash", "config",
// "tensors": [{"name", "shape", "offset"}]} with offsets in bytes from the
// start of the payload. Payload is little-endian float32, row-major.

namespace weights_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace weights_detail

inline void save_weights(const std::string& path, const WeightStore& store) {
  using namespace weights_detail;
  nlohmann::ordered_json manifest;
  manifest["format"] = "VTNW";
  manifest["version"] = kWeightFormatVersion;
  manifest["config_hash"] = store.config_hash;
  if (store.config) manifest["config"] = config_to_json(*store.config);
  manifest["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name);
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += 4ull * t.size();
  }
  const std::string text = manifest.dump();

  std::string out = "VTNW";
  put_u32(out, kWeightFormatVersion);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& name : store.names()) {
    for (float v : store.get(name).data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write to '" + path + "' failed");
}

inline WeightStore load_weights(const std::string& path) {
  using namespace weights_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weights '" + path + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};

  if (bytes.size() < 4 || std::memcmp(bytes.data(), "VTNW", 4) != 0) throw FormatError(path + ": bad magic, not a VTNW file");
  if (bytes.size() < 16) throw ParseError(path + ": truncated header");
  const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  if (version != kWeightFormatVersion) {
    throw FormatError(path + ": unsupported container version " + std::to_string(version));
  }
  const std::uint64_t manifest_len = get_le(bytes.data() + 8, 8);
  if (manifest_len > bytes.size() - 16) throw ParseError(path + ": manifest extends past end of file");
  const std::size_t payload = 16 + static_cast<std::size_t>(manifest_len);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(payload));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed manifest: " + e.what());
  }

  WeightStore store;
  store.format_version = version;
  try {
    store.config_hash = manifest.value("config_hash", "");
    if (manifest.contains("config")) store.config = config_from_json(manifest.at("config"));
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::uint64_t count = shape_numel(shape);
      const std::uint64_t avail = bytes.size() - payload;
      if (offset > avail || count > (avail - offset) / 4) {
        throw ParseError(path + ": tensor '" + name + "' extends past end of file");
      }
      std::vector<float> data(count);
      const unsigned char* src = bytes.data() + payload + offset;
      for (std::uint64_t i = 0; i < count; ++i) {
        data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(src + 4 * i, 4)));
      }
      store.set(name, Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed manifest entry: " + e.what());
  }
  return store;
}

}  // namespace vtn
