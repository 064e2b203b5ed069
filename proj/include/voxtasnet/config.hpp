#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxtasnet/error.hpp"

namespace vtn {

enum class MaskActivation { Sigmoid };

struct EncoderConfig {
  std::size_t embed_dim = 256;  // N
  std::size_t kernel = 128;     // L, samples
  std::size_t stride = 64;      // S, samples
};

struct SeparatorConfig {
  std::size_t channels = 344;  // B, fixed width of every S-Conv block
  std::size_t kernel = 3;      // P, frames
  // X per group; the group count R is the length of this list.
  std::vector<std::size_t> layers_per_group{8, 7, 7, 7};
  // The first `noncausal_groups` groups use symmetric padding.
  std::size_t noncausal_groups = 1;

  std::size_t groups() const { return layers_per_group.size(); }
};

struct ModelConfig {
  int sample_rate = 44100;
  EncoderConfig encoder;
  SeparatorConfig separator;
  MaskActivation mask_activation = MaskActivation::Sigmoid;

  // Receptive field 1.85 s, look-ahead 0.373 s, 7.53 M parameters at 44.1 kHz.
  static ModelConfig reference() { return ModelConfig{}; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    if (sample_rate <= 0) throw ConfigError("config: sample_rate must be positive");
    positive(encoder.embed_dim, "encoder.embed_dim");
    positive(encoder.kernel, "encoder.kernel");
    positive(encoder.stride, "encoder.stride");
    positive(separator.channels, "separator.channels");
    positive(separator.kernel, "separator.kernel");
    if (encoder.stride > encoder.kernel) {
      throw ConfigError("config: encoder.stride (" + std::to_string(encoder.stride) + ") must not exceed encoder.kernel (" +
                        std::to_string(encoder.kernel) + ")");
    }
    if (separator.layers_per_group.empty()) throw ConfigError("config: separator needs at least one group");
    for (auto x : separator.layers_per_group) positive(x, "separator.layers_per_group entries");
    for (auto x : separator.layers_per_group) {
      if (x > 30) throw ConfigError("config: layers_per_group entry too large for 2^x dilation");
    }
    if (separator.noncausal_groups > separator.groups()) {
      throw ConfigError("config: noncausal_groups (" + std::to_string(separator.noncausal_groups) +
                        ") exceeds groups (" + std::to_string(separator.groups()) + ")");
    }
  }
};

// One S-Conv layer of the separator in execution order.
struct LayerPlan {
  std::size_t group = 0;
  std::size_t index_in_group = 0;
  std::size_t dilation = 1;
  bool causal = true;
};

inline std::vector<LayerPlan> layer_plan(const ModelConfig& cfg) {
  std::vector<LayerPlan> plan;
  for (std::size_t g = 0; g < cfg.separator.groups(); ++g) {
    for (std::size_t x = 0; x < cfg.separator.layers_per_group[g]; ++x) {
      plan.push_back({g, x, std::size_t{1} << x, g >= cfg.separator.noncausal_groups});
    }
  }
  return plan;
}

// ---- structured text (JSON) ------------------------------------------------

inline nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["sample_rate"] = cfg.sample_rate;
  j["encoder"] = {{"embed_dim", cfg.encoder.embed_dim}, {"kernel", cfg.encoder.kernel}, {"stride", cfg.encoder.stride}};
  j["separator"] = {{"channels", cfg.separator.channels},
                    {"kernel", cfg.separator.kernel},
                    {"groups", cfg.separator.groups()},
                    {"layers_per_group", cfg.separator.layers_per_group},
                    {"noncausal_groups", cfg.separator.noncausal_groups}};
  j["mask_activation"] = "sigmoid";
  return j;
}

namespace config_detail {

template <typename Json>
void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("config: unknown field '" + where + (where.empty() ? "" : ".") + it.key() + "'");
  }
}

template <typename Json>
std::size_t get_count(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("config: missing field '" + where + "." + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.template get<long long>() < 0) {
    throw ConfigError("config: '" + where + "." + key + "' must be a non-negative integer");
  }
  return v.template get<std::size_t>();
}

}  // namespace config_detail

template <typename Json>
ModelConfig config_from_json(const Json& j) {
  using namespace config_detail;
  reject_unknown(j, {"sample_rate", "encoder", "separator", "mask_activation"}, "");
  ModelConfig cfg;
  if (!j.contains("sample_rate") || !j.at("sample_rate").is_number_integer()) {
    throw ConfigError("config: missing integer field 'sample_rate'");
  }
  cfg.sample_rate = j.at("sample_rate").template get<int>();
  if (!j.contains("encoder")) throw ConfigError("config: missing 'encoder'");
  if (!j.contains("separator")) throw ConfigError("config: missing 'separator'");
  const auto& enc = j.at("encoder");
  reject_unknown(enc, {"embed_dim", "kernel", "stride"}, "encoder");
  cfg.encoder.embed_dim = get_count(enc, "embed_dim", "encoder");
  cfg.encoder.kernel = get_count(enc, "kernel", "encoder");
  cfg.encoder.stride = get_count(enc, "stride", "encoder");

  const auto& sep = j.at("separator");
  reject_unknown(sep, {"channels", "kernel", "groups", "layers_per_group", "noncausal_groups"}, "separator");
  cfg.separator.channels = get_count(sep, "channels", "separator");
  cfg.separator.kernel = get_count(sep, "kernel", "separator");
  const std::size_t groups = get_count(sep, "groups", "separator");
  if (!sep.contains("layers_per_group")) throw ConfigError("config: missing field 'separator.layers_per_group'");
  const auto& layers = sep.at("layers_per_group");
  cfg.separator.layers_per_group.clear();
  if (layers.is_array()) {
    for (const auto& x : layers) {
      if (!x.is_number_integer() || x.template get<long long>() <= 0) {
        throw ConfigError("config: separator.layers_per_group entries must be positive integers");
      }
      cfg.separator.layers_per_group.push_back(x.template get<std::size_t>());
    }
    if (cfg.separator.layers_per_group.size() != groups) {
      throw ConfigError("config: separator.layers_per_group has " + std::to_string(cfg.separator.layers_per_group.size()) +
                        " entries but separator.groups is " + std::to_string(groups));
    }
  } else {
    // A scalar applies to every group.
    const std::size_t x = get_count(sep, "layers_per_group", "separator");
    cfg.separator.layers_per_group.assign(groups, x);
  }
  cfg.separator.noncausal_groups = sep.contains("noncausal_groups") ? get_count(sep, "noncausal_groups", "separator") : 1;
  if (j.contains("mask_activation")) {
    if (j.at("mask_activation") != "sigmoid") throw ConfigError("config: mask_activation must be \"sigmoid\"");
  }
  cfg.validate();
  return cfg;
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const std::string& path, const ModelConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << config_to_json(cfg).dump(2) << '\n';
}

// FNV-1a over the compact JSON form.
inline std::string config_hash(const ModelConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace vtn
