#include "agentsod/ccm.hpp"
#include "agentsod/model.hpp"
#include "agentsod/rng.hpp"
#include "oracle.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace agentsod;
using namespace testing_support;

namespace {

const ModelConfig kConfig;

PyramidFeatures random_features(SplitMix64& rng) {
  PyramidFeatures f;
  for (int i = 0; i < kConfig.levels(); ++i) {
    const int e = kConfig.level_extents[static_cast<std::size_t>(i)];
    f.push_back(random_tensor({kConfig.level_channels[static_cast<std::size_t>(i)], e, e}, rng));
  }
  return f;
}

std::vector<Tensor> random_interaction(SplitMix64& rng) {
  std::vector<Tensor> s;
  for (int i = 0; i < kConfig.levels(); ++i) s.push_back(random_tensor({196, 128}, rng));
  return s;
}

}  // namespace

TEST_CASE("downsample_to_tokens examples") {
  const ModelParams params = init_model(kConfig);
  const AgentGeometry& g = params.ccm.geometry;
  SplitMix64 rng(1);
  const PyramidFeatures f = random_features(rng);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Tensor x = downsample_to_tokens(f[i], params.ccm.levels[i], g);
    CHECK(x.shape() == Shape{196, 128});
    // Same path as token generation with the calibration module's projection.
    TokenProjection proj = params.ccm.levels[i].downsample;
    CHECK(bit_equal(x, feature_to_tokens(f[i], proj, g.token_side)));
  }

  CcmLevelParams level = params.ccm.levels[0];
  level.downsample.bias = Tensor({128}, 0.5f);
  level.downsample.weight = Tensor::zeros(level.downsample.weight.shape());
  const Tensor c = downsample_to_tokens(Tensor({16, 112, 112}, 3.0f), level, g);
  for (float v : c.data()) CHECK(v == 0.5f);
  CHECK_THROWS_AS(downsample_to_tokens(Tensor({16, 12, 12}), level, g), ShapeError);
}

TEST_CASE("ccm_forward_level examples") {
  const AgentGeometry g;
  SplitMix64 rng(2);
  const Tensor x = random_tensor({196, 128}, rng);
  const Tensor s = random_tensor({196, 128}, rng);
  CHECK(bit_equal(ccm_forward_level(x, s, make_channel_params(g), g), x));

  const AttentionParams p = random_channel(g, rng, true);
  const Tensor y = ccm_forward_level(x, s, p, g);
  CHECK(y.shape() == Shape{196, 128});
  oracle::Mat ref = oracle::channel_agent(oracle::from(x), oracle::from(s), oracle::weights_of(p), g.token_side,
                                          g.agents());
  ref = oracle::add(ref, oracle::from(x));
  CHECK(oracle::max_abs_diff(ref, y) <= 1e-5);
}

TEST_CASE("reconstruct_feature examples") {
  const AgentGeometry g;
  SplitMix64 rng(3);
  const Tensor tokens = random_tensor({196, 128}, rng);
  const TokenProjection identity{Tensor::identity(128), Tensor::zeros({128})};
  const Tensor same = reconstruct_feature(tokens, 14, 14, identity, g);
  CHECK(same.shape() == Shape{128, 14, 14});
  for (int c = 0; c < 128; ++c) {
    for (int n = 0; n < 196; ++n) {
      if (same(c, n / 14, n % 14) != tokens(n, c)) FAIL("round trip differs");
    }
  }

  const TokenProjection narrow{random_tensor({128, 3}, rng, 0.1f), Tensor::zeros({3})};
  const Tensor constant = reconstruct_feature(Tensor({196, 128}, 1.0f), 40, 33, narrow, g);
  CHECK(constant.shape() == Shape{3, 40, 33});
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < 33; ++j) CHECK(std::abs(constant(c, i, j) - constant(c, 0, 0)) <= 1e-6);
    }
  }

  const TokenProjection one{random_tensor({128, 1}, rng, 0.1f), Tensor::zeros({1})};
  const Tensor up = reconstruct_feature(tokens, 28, 28, one, g);
  const Tensor plane = reconstruct_feature(tokens, 14, 14, one, g);
  const std::vector<double> src(plane.data().begin(), plane.data().end());
  const std::vector<double> ref = oracle::bilinear(src, 14, 14, 28, 28);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(up[i] - ref[i]) <= 1e-6);
}

TEST_CASE("ccm_forward restores every backbone extent") {
  const ModelParams params = init_model(kConfig);
  SplitMix64 rng(4);
  const PyramidFeatures f = random_features(rng);
  const std::vector<Tensor> out = ccm_forward(f, random_interaction(rng), params.ccm);
  REQUIRE(out.size() == f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(out[i].shape() == f[i].shape());
    CHECK(out[i].all_finite());
  }
}

TEST_CASE("zero attention parameters reduce calibration to a projection-resample") {
  ModelParams params = init_model(kConfig);
  for (auto& level : params.ccm.levels) level.attention = make_channel_params(params.ccm.geometry);
  SplitMix64 rng(5);
  const PyramidFeatures f = random_features(rng);
  const std::vector<Tensor> out = ccm_forward(f, random_interaction(rng), params.ccm);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const CcmLevelParams& level = params.ccm.levels[i];
    const Tensor x = downsample_to_tokens(f[i], level, params.ccm.geometry);
    const Tensor expected = reconstruct_feature(x, f[i].dim(1), f[i].dim(2), level.reconstruct, params.ccm.geometry);
    CHECK(bit_equal(out[i], expected));
  }
}

TEST_CASE("ccm_forward is deterministic across thread counts") {
  const ModelParams params = init_model(kConfig);
  SplitMix64 rng(6);
  const PyramidFeatures f = random_features(rng);
  const std::vector<Tensor> s = random_interaction(rng);
  const std::vector<Tensor> a = ccm_forward(f, s, params.ccm, 1);
  const std::vector<Tensor> b = ccm_forward(f, s, params.ccm, 4);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a[i], b[i]));
}
