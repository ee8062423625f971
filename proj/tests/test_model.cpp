#include "agentsod/io.hpp"
#include "agentsod/model.hpp"
#include "agentsod/rng.hpp"

#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace agentsod;
namespace fs = std::filesystem;

namespace {

Tensor random_image(std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  SplitMix64 rng(seed);
  Tensor img({3, 224, 224});
  for (float& v : img.data()) v = lo + (hi - lo) * rng.uniform01();
  return img;
}

bool params_equal(ModelParams& a, ModelParams& b) {
  const auto sa = param_slots(a);
  const auto sb = param_slots(b);
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].name != sb[i].name || !bit_equal(*sa[i].tensor, *sb[i].tensor)) return false;
  }
  return true;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "agentsod_test_model" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.level_extents[3] = 13;
  CHECK_THROWS(c.validate());
}

TEST_CASE("init_model is seeded and bounded") {
  ModelConfig config;
  ModelParams a = init_model(config);
  ModelParams b = init_model(config);
  CHECK(params_equal(a, b));

  config.seed = 99;
  ModelParams c = init_model(config);
  CHECK_FALSE(params_equal(a, c));

  std::set<std::string> names;
  for (const ParamSlot& slot : param_slots(a)) {
    CHECK(names.insert(slot.name).second);
    CHECK(slot.tensor->all_finite());
    if (slot.kind == InitKind::uniform) {
      const float bound = xavier_bound(slot.fan_in, slot.fan_out);
      for (float v : slot.tensor->data()) {
        if (std::abs(v) > bound) FAIL(slot.name << " exceeds bound");
      }
    } else if (slot.kind == InitKind::zeros) {
      for (float v : slot.tensor->data()) {
        if (v != 0.0f) FAIL(slot.name << " should be zero");
      }
    }
    if (slot.name.find("agent_bias") != std::string::npos) CHECK(slot.kind == InitKind::zeros);
  }
}

TEST_CASE("synthetic backbone emits the configured pyramid") {
  const ModelConfig config;
  const ModelParams params = init_model(config);
  const PyramidFeatures f = synthetic_backbone_forward(random_image(1), params, config);
  REQUIRE(f.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const int e = config.level_extents[i];
    CHECK(f[i].shape() == Shape{config.level_channels[i], e, e});
  }
  for (const Tensor& t : synthetic_backbone_forward(Tensor({3, 224, 224}), params, config)) CHECK(t.all_finite());
  const PyramidFeatures again = synthetic_backbone_forward(random_image(1), params, config);
  for (std::size_t i = 0; i < 6; ++i) CHECK(bit_equal(f[i], again[i]));
  CHECK_THROWS_AS(synthetic_backbone_forward(Tensor({3, 200, 200}), params, config), ShapeError);
}

TEST_CASE("decoder equals a step-by-step fusion") {
  const ModelConfig config;
  ModelParams params = init_model(config);
  SplitMix64 rng(2);
  std::vector<Tensor> calibrated;
  for (std::size_t i = 0; i < 6; ++i) {
    const int e = config.level_extents[i];
    calibrated.push_back(random_tensor({config.level_channels[i], e, e}, rng));
  }
  const Tensor s = decoder_forward(calibrated, params, config);
  CHECK(s.shape() == Shape{1, 224, 224});

  Tensor fused = calibrated[5];
  for (int i = 4; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    const Tensor up = bilinear_resize(fused, calibrated[idx].dim(1), calibrated[idx].dim(2));
    fused = add(channel_project(up, params.decoder.lateral[idx].weight, params.decoder.lateral[idx].bias),
                calibrated[idx]);
  }
  const Tensor logits = channel_project(fused, params.decoder.head.weight, params.decoder.head.bias);
  const Tensor manual = logistic(bilinear_resize(logits, 224, 224));
  CHECK(bit_equal(s, manual));
  for (float v : s.data()) {
    if (!(v > 0.0f && v < 1.0f)) FAIL("saliency " << v << " outside (0, 1)");
  }
}

TEST_CASE("toggle matrix produces valid and distinct saliency maps") {
  ModelConfig config;
  const ModelParams params = init_model(config);
  const Tensor image = random_image(3);
  std::map<int, Tensor> out;
  for (int mask = 0; mask < 4; ++mask) {
    config.fia_enabled = (mask & 1) != 0;
    config.ccm_enabled = (mask & 2) != 0;
    const Tensor s = model_forward(image, params, config);
    CHECK(s.shape() == Shape{1, 224, 224});
    for (float v : s.data()) {
      if (!(v >= 0.0f && v <= 1.0f)) FAIL("saliency outside [0, 1]");
    }
    out[mask] = s;
  }
  CHECK_FALSE(bit_equal(out[0], out[3]));
  CHECK_FALSE(bit_equal(out[1], out[0]));
  CHECK_FALSE(bit_equal(out[2], out[0]));
}

TEST_CASE("disabling calibration still consumes the interaction outputs") {
  ModelConfig config;
  config.ccm_enabled = false;
  const ModelParams params = init_model(config);
  const ForwardTrace t = model_forward_trace(random_image(4), params, config);
  REQUIRE(t.interaction.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(t.calibrated[i].shape() == t.features[i].shape());
    const Tensor expected = reconstruct_feature(t.interaction[i], t.features[i].dim(1), t.features[i].dim(2),
                                                params.ccm.levels[i].reconstruct, config.geometry);
    CHECK(bit_equal(t.calibrated[i], expected));
    CHECK_FALSE(bit_equal(t.interaction[i], t.tokens.levels[i]));
  }
  const ForwardTrace again = model_forward_trace(random_image(4), params, config, 3);
  CHECK(bit_equal(t.saliency, again.saliency));
}

TEST_CASE("forward pass is deterministic, bounded for large inputs, and fast") {
  const ModelConfig config;
  const ModelParams params = init_model(config);
  const Tensor image = random_image(5, -10.0f, 10.0f);
  const auto start = std::chrono::steady_clock::now();
  const Tensor a = model_forward(image, params, config, 1);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 10.0);
  const Tensor b = model_forward(image, params, config, 4);
  CHECK(bit_equal(a, b));
  for (float v : a.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) FAIL("saliency outside [0, 1]");
  }
}

TEST_CASE("save and load round trip") {
  const ModelConfig config;
  ModelParams params = init_model(config);
  const fs::path dir = fresh_dir("roundtrip");
  save_params(dir, params);
  ModelParams loaded = load_params(dir, config);
  CHECK(params_equal(params, loaded));

  const Manifest manifest = read_manifest(dir / "manifest.txt");
  const auto slots = param_slots(params);
  REQUIRE(manifest.size() == slots.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    CHECK(manifest[i].first == slots[i].name);
    CHECK(seen.insert(manifest[i].first).second);
  }
}

TEST_CASE("load rejects damaged weight directories") {
  const ModelConfig config;
  ModelParams params = init_model(config);
  const fs::path dir = fresh_dir("damaged");
  save_params(dir, params);
  const Manifest manifest = read_manifest(dir / "manifest.txt");
  const fs::path victim = dir / manifest.front().second;

  auto kind_of = [&] {
    try {
      (void)load_params(dir, config);
    } catch (const ContainerError& e) {
      return e.kind();
    }
    FAIL("load succeeded unexpectedly");
    return ContainerErrorKind::io_failure;
  };

  const auto size = fs::file_size(victim);
  fs::resize_file(victim, size - 2);
  CHECK(kind_of() == ContainerErrorKind::bad_container);

  fs::remove(victim);
  CHECK(kind_of() == ContainerErrorKind::missing_file);

  {
    std::ofstream out(victim, std::ios::binary);
    out << "JUNKJUNKJUNKJUNK";
  }
  CHECK(kind_of() == ContainerErrorKind::bad_magic);
}
