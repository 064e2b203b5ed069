#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>

#include "oracles.hpp"
#include "support.hpp"
#include "voxtasnet/budget.hpp"
#include "voxtasnet/model.hpp"

using namespace vtn;
using testing_support::max_abs_diff;
using testing_support::random_clip;
using testing_support::TempDir;
using testing_support::tiny_config;

namespace {

ModelConfig toy_config(bool symmetric) {
  ModelConfig c;
  c.sample_rate = 1;
  c.encoder = {4, 1, 1};
  c.separator.channels = 4;
  c.separator.kernel = 3;
  c.separator.layers_per_group = {2};
  c.separator.noncausal_groups = symmetric ? 1 : 0;
  return c;
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Config, ReferenceValidatesAndRoundTrips) {
  TempDir dir("cfg");
  const ModelConfig ref = ModelConfig::reference();
  ref.validate();
  save_config(dir.file("c.json"), ref);
  const ModelConfig back = load_config(dir.file("c.json"));
  EXPECT_EQ(config_to_json(back), config_to_json(ref));
  EXPECT_EQ(config_hash(back), config_hash(ref));
  EXPECT_NE(config_hash(ref), config_hash(tiny_config()));
}

TEST(Config, ScalarLayersPerGroupBroadcasts) {
  const auto j = nlohmann::json::parse(R"({"sample_rate": 44100,
    "encoder": {"embed_dim": 8, "kernel": 16, "stride": 8},
    "separator": {"channels": 8, "kernel": 3, "groups": 3, "layers_per_group": 4, "noncausal_groups": 1}})");
  const ModelConfig c = config_from_json(j);
  EXPECT_EQ(c.separator.layers_per_group, (std::vector<std::size_t>{4, 4, 4}));
}

TEST(Config, RejectsInvalidDocuments) {
  auto parse = [](const char* text) { return config_from_json(nlohmann::json::parse(text)); };
  const char* base_enc = R"("encoder": {"embed_dim": 8, "kernel": 16, "stride": 8})";
  auto doc = [&](const std::string& sep, const std::string& extra = "") {
    return std::string(R"({"sample_rate": 8000, )") + base_enc + ", \"separator\": " + sep + extra + "}";
  };
  EXPECT_NO_THROW(parse(doc(R"({"channels": 8, "kernel": 3, "groups": 2, "layers_per_group": [2, 1], "noncausal_groups": 1})").c_str()));
  EXPECT_THROW(parse(doc(R"({"channels": 8, "kernel": 3, "groups": 2, "layers_per_group": [2, 1], "noncausal_groups": 3})").c_str()),
               ConfigError);
  EXPECT_THROW(parse(doc(R"({"channels": 8, "kernel": 3, "groups": 3, "layers_per_group": [2, 1]})").c_str()), ConfigError);
  EXPECT_THROW(parse(doc(R"({"channels": 8, "kernel": 3, "groups": 2, "layers_per_group": [2, 1], "typo": 1})").c_str()),
               ConfigError);
  EXPECT_THROW(parse(doc(R"({"channels": 0, "kernel": 3, "groups": 1, "layers_per_group": [2]})").c_str()), ConfigError);
  EXPECT_THROW(parse(doc(R"({"channels": 8, "kernel": 3, "groups": 1, "layers_per_group": [2]})", R"(, "extra": 1)").c_str()),
               ConfigError);
  EXPECT_THROW(parse(R"({"sample_rate": 8000, "encoder": {"embed_dim": 8, "kernel": 4, "stride": 8},
      "separator": {"channels": 8, "kernel": 3, "groups": 1, "layers_per_group": [2]}})"),
               ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), IoError);
}

TEST(Budget, ToyCausalGroup) {
  const BudgetReport r = budget(toy_config(false));
  EXPECT_EQ(r.receptive_field_frames, 7u);
  EXPECT_EQ(r.lookahead_frames, 0u);
  EXPECT_EQ(r.receptive_field_samples, 7u);
  EXPECT_EQ(r.lookahead_samples, 0u);
  EXPECT_DOUBLE_EQ(r.receptive_field_s, 7.0);
  EXPECT_DOUBLE_EQ(r.lookahead_s, 0.0);
}

TEST(Budget, ToySymmetricGroup) {
  const BudgetReport r = budget(toy_config(true));
  EXPECT_EQ(r.receptive_field_frames, 7u);
  EXPECT_EQ(r.lookahead_frames, 3u);
  EXPECT_DOUBLE_EQ(r.lookahead_s, 3.0);
}

TEST(Budget, ReferenceConfigHitsTargets) {
  const BudgetReport r = budget(ModelConfig::reference());
  EXPECT_NEAR(r.receptive_field_s, 1.86, 0.05);
  EXPECT_NEAR(r.lookahead_s, 0.37, 0.02);
  EXPECT_NEAR(static_cast<double>(r.param_count), 7.5e6, 0.75e6);
  EXPECT_GT(r.receptive_field_s, 0.0);
}

TEST(Budget, ParamCountEqualsEnumeration) {
  for (const ModelConfig& c : {ModelConfig::reference(), tiny_config(), toy_config(true)}) {
    EXPECT_EQ(budget(c).param_count, random_init(c, 1).scalar_count());
  }
}

// Receptive field measured on the network itself: an impulse in the input of
// the separator front end reaches exactly as far as the budget says.
TEST(Budget, LookaheadMatchesMeasuredDependency) {
  const ModelConfig c = tiny_config();
  const Model m = Model::random(c, 5);
  const std::size_t t = 800, probe = 400;
  const AudioClip base = random_clip(2, t, c.sample_rate, 1, 0.5f);
  const AudioClip y0 = m.forward_offline(base);
  AudioClip bumped = base;
  bumped.at(0, probe) += 0.5f;
  const AudioClip y1 = m.forward_offline(bumped);
  std::size_t earliest = t;
  for (std::size_t i = 0; i < t; ++i) {
    if (y0.at(0, i) != y1.at(0, i) || y0.at(1, i) != y1.at(1, i)) {
      earliest = i;
      break;
    }
  }
  const std::size_t la = budget(c).lookahead_samples;
  EXPECT_EQ(la, m.lookahead_samples());
  ASSERT_LT(earliest, t);
  EXPECT_GE(earliest + la, probe);
  // The bound is tight to within one encoder hop.
  EXPECT_LE(earliest + la, probe + c.encoder.stride);
}

TEST(Weights, RandomInitIsDeterministic) {
  const ModelConfig c = ModelConfig::reference();
  const WeightStore a = random_init(c, 42), b = random_init(c, 42);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == random_init(c, 43));
}

TEST(Weights, InitRanges) {
  const ModelConfig c = tiny_config();
  const WeightStore w = random_init(c, 9);
  for (const auto& spec : tensor_specs(c)) {
    const Tensor& t = w.get(spec.name);
    const float k = 1.0f / std::sqrt(static_cast<float>(spec.fan_in));
    for (float v : t.data()) {
      switch (spec.kind) {
        case ParamKind::Weight:
        case ParamKind::Bias:
          EXPECT_LE(std::abs(v), k) << spec.name;
          break;
        case ParamKind::NormGain:
          EXPECT_EQ(v, 1.0f);
          break;
        case ParamKind::NormBias:
          EXPECT_EQ(v, 0.0f);
          break;
        case ParamKind::Slope:
          EXPECT_EQ(v, 0.25f);
          break;
      }
    }
  }
}

TEST(Weights, ShapeOffByOneNamesTensor) {
  const ModelConfig c = tiny_config();
  WeightStore w = random_init(c, 1);
  w.set("separator.blocks.1.depthwise.weight", Tensor({12, 1, 4}));
  try {
    build_model(c, std::move(w));
    FAIL() << "expected WeightError";
  } catch (const WeightError& e) {
    EXPECT_NE(std::string(e.what()).find("separator.blocks.1.depthwise.weight"), std::string::npos);
  }
}

TEST(Weights, MissingAndUnexpectedTensors) {
  const ModelConfig c = tiny_config();
  const WeightStore full = random_init(c, 1);
  WeightStore partial;
  for (const auto& name : full.names()) {
    if (name != "decoder.bias") partial.set(name, full.get(name));
  }
  EXPECT_THROW(build_model(c, partial), WeightError);
  WeightStore extra = random_init(c, 1);
  extra.set("bogus", Tensor({1}));
  EXPECT_THROW(build_model(c, extra), WeightError);
  WeightStore other = random_init(c, 1);
  ModelConfig c2 = c;
  c2.sample_rate = 16000;
  EXPECT_THROW(build_model(c2, other), WeightError);  // saved for a different config
}

TEST(Weights, SaveLoadBitExact) {
  TempDir dir("w");
  const Model m = Model::random(tiny_config(), 11);
  save_weights(m, dir.file("m.vtnw"));
  const WeightStore back = load_weights(dir.file("m.vtnw"));
  EXPECT_TRUE(back == m.weights());
  for (const auto& name : back.names()) {
    const auto a = back.get(name).data(), b = m.weights().get(name).data();
    ASSERT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0) << name;
  }
  EXPECT_EQ(back.config_hash, config_hash(tiny_config()));
  ASSERT_TRUE(back.config.has_value());
  const Model again = load_model(dir.file("m.vtnw"));
  EXPECT_EQ(config_hash(again.config()), config_hash(tiny_config()));
  save_weights(again, dir.file("again.vtnw"));
  EXPECT_EQ(read_bytes(dir.file("m.vtnw")), read_bytes(dir.file("again.vtnw")));
}

TEST(Weights, ContainerLayout) {
  TempDir dir("w");
  save_weights(Model::random(tiny_config(), 1), dir.file("m.vtnw"));
  const auto bytes = read_bytes(dir.file("m.vtnw"));
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(std::memcmp(bytes.data(), "VTNW", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | bytes[8 + i];
  const auto manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  EXPECT_EQ(manifest.at("version"), 1);
  EXPECT_EQ(manifest.at("tensors").size(), tensor_specs(tiny_config()).size());
  EXPECT_EQ(bytes.size(), 16 + len + 4 * budget(tiny_config()).param_count);
  // First payload float is encoder.weight[0].
  float first;
  std::memcpy(&first, bytes.data() + 16 + len, 4);
  EXPECT_EQ(first, random_init(tiny_config(), 1).get("encoder.weight")[0]);
}

TEST(Weights, CorruptedMagicIsFormatError) {
  TempDir dir("w");
  save_weights(Model::random(tiny_config(), 1), dir.file("m.vtnw"));
  auto bytes = read_bytes(dir.file("m.vtnw"));
  bytes[0] = 'X';
  write_bytes(dir.file("bad.vtnw"), bytes);
  EXPECT_THROW(load_weights(dir.file("bad.vtnw")), FormatError);
  bytes[0] = 'V';
  bytes[4] = 2;
  write_bytes(dir.file("v2.vtnw"), bytes);
  EXPECT_THROW(load_weights(dir.file("v2.vtnw")), FormatError);
}

TEST(Weights, TruncationIsParseError) {
  TempDir dir("w");
  save_weights(Model::random(tiny_config(), 1), dir.file("m.vtnw"));
  const auto bytes = read_bytes(dir.file("m.vtnw"));
  for (std::size_t keep : {bytes.size() - 1, bytes.size() - 4000, std::size_t{40}, std::size_t{10}}) {
    write_bytes(dir.file("t.vtnw"), std::vector<unsigned char>(bytes.begin(), bytes.begin() + static_cast<long>(keep)));
    EXPECT_THROW(load_weights(dir.file("t.vtnw")), ParseError) << keep;
  }
  EXPECT_THROW(load_weights("/nonexistent.vtnw"), IoError);
}

TEST(Weights, ManifestPointingPastEndIsParseError) {
  TempDir dir("w");
  WeightStore w;
  w.set("a", Tensor({2}, std::vector<float>{1, 2}));
  save_weights(dir.file("m.vtnw"), w);
  auto bytes = read_bytes(dir.file("m.vtnw"));
  std::string text(bytes.begin() + 16, bytes.end() - 8);
  const auto pos = text.find("\"offset\":0");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 10, "\"offset\":8");
  std::vector<unsigned char> out(bytes.begin(), bytes.begin() + 16);
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.end() - 8, bytes.end());
  write_bytes(dir.file("p.vtnw"), out);
  EXPECT_THROW(load_weights(dir.file("p.vtnw")), ParseError);
}

TEST(Forward, OutputShapeMatchesInput) {
  const ModelConfig c = tiny_config();
  const Model m = Model::random(c, 2);
  for (std::size_t t : {16u, 17u, 23u, 64u, 100u, 1000u, 8000u}) {
    const AudioClip y = m.forward_offline(random_clip(2, t, c.sample_rate, static_cast<std::uint32_t>(t)));
    EXPECT_EQ(y.channels(), 2u);
    EXPECT_EQ(y.frames(), t);
    EXPECT_EQ(y.sample_rate(), c.sample_rate);
  }
}

TEST(Forward, ReferenceConfigOneSecondShape) {
  const Model m = Model::random(ModelConfig::reference(), 42);
  const AudioClip y = m.forward_offline(random_clip(2, 44100, 44100, 3, 0.5f));
  EXPECT_EQ(y.channels(), 2u);
  EXPECT_EQ(y.frames(), 44100u);
  for (float v : y.data()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Forward, InputErrors) {
  const ModelConfig c = tiny_config();
  const Model m = Model::random(c, 2);
  EXPECT_THROW(m.forward_offline(AudioClip(1, 100, c.sample_rate)), ShapeError);
  EXPECT_THROW(m.forward_offline(AudioClip(2, 100, 44100)), RateError);
  EXPECT_THROW(m.forward_offline(AudioClip(2, 15, c.sample_rate)), ShapeError);
}

TEST(Forward, ZeroInputZeroBiasGivesZero) {
  const ModelConfig c = tiny_config();
  WeightStore w = random_init(c, 4);
  for (const auto& spec : tensor_specs(c)) {
    if (spec.kind == ParamKind::Bias || spec.kind == ParamKind::NormBias) {
      for (auto& v : w.get(spec.name).data()) v = 0.0f;
    }
  }
  const Model m = build_model(c, std::move(w));
  const AudioClip y = m.forward_offline(AudioClip(2, 500, c.sample_rate));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

// With unit masks the network is encoder followed by decoder; compare with
// the brute-force conv oracles applied to the padded input directly.
TEST(Forward, UnitMaskIsReconstructionPath) {
  const ModelConfig c = tiny_config();
  const Model m = Model::random(c, 6);
  const std::size_t t = 300, l = c.encoder.kernel, s = c.encoder.stride, n = c.encoder.embed_dim;
  const AudioClip x = random_clip(2, t, c.sample_rate, 8);
  const AudioClip y = m.forward_offline(x, ForwardOptions{true});

  const std::size_t la = m.lookahead_samples();
  const std::size_t frames = (t + la) / s;
  const std::size_t width = (frames - 1) * s + l;
  vtn::Tensor in({1, 2, width});
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < t; ++i) in.at(0, h, i + l - s) = x.at(h, i);
  const auto& wts = m.weights();
  const auto enc_b = wts.get("encoder.bias").data();
  const auto dec_b = wts.get("decoder.bias").data();
  const Tensor emb = oracle::conv2d(in, wts.get("encoder.weight"), {enc_b.begin(), enc_b.end()}, 1, s, 1, 0);
  ASSERT_EQ(emb.shape(), (Shape{n, 2, frames}));
  const Tensor out = oracle::conv2d_transposed(emb, wts.get("decoder.weight"), {dec_b.begin(), dec_b.end()}, 1, s, 1, 0);
  float err = 0.0f;
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < t; ++i) err = std::max(err, std::abs(y.at(h, i) - out.at(0, h, i + l - s)));
  EXPECT_LE(err, 1e-5f);
}

TEST(Forward, MasksAreInOpenUnitInterval) {
  const ModelConfig c = tiny_config();
  const Model m = Model::random(c, 7);
  std::mt19937 rng(1);
  const Tensor stacked = testing_support::random_tensor({2 * c.encoder.embed_dim, 50}, rng, -3.0f, 3.0f);
  const Tensor mask = m.separate(stacked);
  ASSERT_EQ(mask.shape(), stacked.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    EXPECT_GT(mask[i], 0.0f);
    EXPECT_LT(mask[i], 1.0f);
    EXPECT_LE(std::abs(stacked[i] * mask[i]), std::abs(stacked[i]));
  }
}

TEST(Forward, CausalBeyondLookahead) {
  const ModelConfig c = tiny_config();
  const Model m = Model::random(c, 8);
  const std::size_t la = m.lookahead_samples();
  const AudioClip a = random_clip(2, 2000, c.sample_rate, 9);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t cut = std::uniform_int_distribution<std::size_t>(la + 1, 1999)(rng);
    AudioClip b = a;
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = cut; i < 2000; ++i) b.at(h, i) = std::uniform_real_distribution<float>(-1, 1)(rng);
    const AudioClip ya = m.forward_offline(a), yb = m.forward_offline(b);
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < cut - la; ++i) ASSERT_EQ(ya.at(h, i), yb.at(h, i)) << "cut " << cut << " i " << i;
  }
}

TEST(Forward, RightChannelInfluencesLeftOutput) {
  const ModelConfig c = tiny_config();
  const Model m = Model::random(c, 10);
  const AudioClip a = random_clip(2, 1000, c.sample_rate, 11);
  AudioClip b = a;
  for (std::size_t i = 0; i < 1000; ++i) b.at(1, i) *= -0.5f;
  const AudioClip ya = m.forward_offline(a), yb = m.forward_offline(b);
  float diff = 0.0f;
  for (std::size_t i = 0; i < 1000; ++i) diff = std::max(diff, std::abs(ya.at(0, i) - yb.at(0, i)));
  EXPECT_GT(diff, 0.0f);
}

TEST(Forward, Deterministic) {
  const ModelConfig c = tiny_config();
  const AudioClip x = random_clip(2, 700, c.sample_rate, 12);
  EXPECT_EQ(Model::random(c, 13).forward_offline(x), Model::random(c, 13).forward_offline(x));
}

TEST(Forward, ReentrantAcrossThreads) {
  const ModelConfig c = tiny_config();
  const Model m = Model::random(c, 14);
  const AudioClip x = random_clip(2, 3000, c.sample_rate, 15);
  const AudioClip expect = m.forward_offline(x);
  std::vector<AudioClip> got(4);
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < got.size(); ++i) pool.emplace_back([&, i] { got[i] = m.forward_offline(x); });
  }
  for (const auto& g : got) EXPECT_EQ(g, expect);
}
