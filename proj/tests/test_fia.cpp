#include "agentsod/fia.hpp"
#include "agentsod/model.hpp"
#include "agentsod/rng.hpp"
#include "oracle.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace agentsod;
using namespace testing_support;

namespace {

const ModelConfig kConfig;

PyramidFeatures random_features(SplitMix64& rng, float bound = 1.0f) {
  PyramidFeatures f;
  for (int i = 0; i < kConfig.levels(); ++i) {
    const int e = kConfig.level_extents[static_cast<std::size_t>(i)];
    f.push_back(random_tensor({kConfig.level_channels[static_cast<std::size_t>(i)], e, e}, rng, bound));
  }
  return f;
}

MlpParams random_mlp(SplitMix64& rng, int channels, int hidden) {
  MlpParams p = make_mlp_params(channels, hidden);
  for (float& v : p.ln_gain.data()) v = 1.0f + rng.symmetric(0.2f);
  fill_symmetric(p.ln_bias, rng, 0.2f);
  fill_symmetric(p.w1, rng, xavier_bound(channels, hidden));
  fill_symmetric(p.b1, rng, 0.2f);
  fill_symmetric(p.w2, rng, xavier_bound(hidden, channels));
  fill_symmetric(p.b2, rng, 0.2f);
  return p;
}

}  // namespace

TEST_CASE("generate_tokens yields six 196x128 grids and a 1176x128 concatenation") {
  const ModelParams params = init_model(kConfig);
  SplitMix64 rng(1);
  const TokenSet set = generate_tokens(random_features(rng), params.fia);
  REQUIRE(set.levels.size() == 6);
  for (const Tensor& t : set.levels) CHECK(t.shape() == Shape{196, 128});
  CHECK(set.embcat.shape() == Shape{1176, 128});
  for (int level = 0; level < 6; ++level) {
    CHECK(set.level_offset(level) == 196 * level);
    for (int r = 0; r < 196; ++r) {
      for (int c = 0; c < 128; ++c) {
        if (set.embcat(set.level_offset(level) + r, c) != set.levels[static_cast<std::size_t>(level)](r, c)) {
          FAIL("embcat rows differ from level tokens at level " << level);
        }
      }
    }
  }
}

TEST_CASE("constant features with identity-like projection give constant tokens") {
  TokenProjection proj{Tensor({4, 4}), Tensor::zeros({4})};
  proj.weight = Tensor::identity(4);
  const Tensor tokens = feature_to_tokens(Tensor({4, 28, 28}, 0.25f), proj, 14);
  CHECK(tokens.shape() == Shape{196, 4});
  for (float v : tokens.data()) CHECK(v == 0.25f);
}

TEST_CASE("token generation rejects extents below the token side") {
  TokenProjection proj{Tensor::identity(4), Tensor::zeros({4})};
  CHECK_THROWS_AS(feature_to_tokens(Tensor({4, 13, 20}), proj, 14), ShapeError);
}

TEST_CASE("mlp_residual examples") {
  SplitMix64 rng(2);
  const Tensor x = random_tensor({196, 128}, rng);
  const MlpParams zero = make_mlp_params(128, 512);
  CHECK(bit_equal(mlp_residual(x, zero), x));

  const MlpParams p = random_mlp(rng, 128, 512);
  const Tensor y = mlp_residual(x, p);
  CHECK(y.shape() == Shape{196, 128});
  CHECK(oracle::max_abs_diff(oracle::mlp_residual(oracle::from(x), p), y) <= 1e-5);
}

TEST_CASE("fia_forward equals a level-by-level manual composition") {
  ModelParams params = init_model(kConfig);
  SplitMix64 rng(3);
  for (auto& level : params.fia.levels) {
    fill_symmetric(level.attention.agent_bias_1, rng, 0.3f);
    fill_symmetric(level.attention.dwc_kernel, rng, 0.3f);
  }
  const PyramidFeatures features = random_features(rng);
  const std::vector<Tensor> out = fia_forward(features, params.fia);
  REQUIRE(out.size() == 6);

  const AgentGeometry& g = params.fia.geometry;
  std::vector<Tensor> tokens;
  for (int i = 0; i < 6; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    tokens.push_back(feature_to_tokens(features[idx], params.fia.levels[idx].projection, g.token_side));
  }
  const Tensor embcat = concat_rows(tokens);
  std::vector<Tensor> agents;
  for (const Tensor& t : tokens) agents.push_back(pool_agents(t, g.token_side, g.agent_side));
  const Tensor key_agents = concat_rows(agents);
  CHECK(key_agents.shape() == Shape{294, 128});
  for (int i = 0; i < 6; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const FiaLevelParams& lp = params.fia.levels[idx];
    const Tensor s = mlp_residual(spatial_agent_cross_attention(tokens[idx], embcat, key_agents, lp.attention, g), lp.mlp);
    CHECK(out[idx].shape() == Shape{196, 128});
    CHECK(bit_equal(out[idx], s));
  }
}

TEST_CASE("fia levels are independent of evaluation order and thread count") {
  const ModelParams params = init_model(kConfig);
  SplitMix64 rng(4);
  const PyramidFeatures features = random_features(rng);
  const std::vector<Tensor> serial = fia_forward(features, params.fia, 1);
  const std::vector<Tensor> parallel = fia_forward(features, params.fia, 3);
  const std::vector<Tensor> again = fia_forward(features, params.fia, 1);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(bit_equal(serial[i], parallel[i]));
    CHECK(bit_equal(serial[i], again[i]));
  }
}

TEST_CASE("zero attention and MLP parameters make every S_i exactly zero") {
  ModelParams params = init_model(kConfig);
  for (auto& level : params.fia.levels) {
    level.attention = make_spatial_params(params.fia.geometry);
    level.mlp = make_mlp_params(128, kConfig.mlp_hidden);
  }
  SplitMix64 rng(5);
  for (const Tensor& s : fia_forward(random_features(rng), params.fia)) {
    for (float v : s.data()) {
      if (v != 0.0f) FAIL("nonzero output " << v);
    }
  }
}

TEST_CASE("fia outputs stay finite for inputs scaled to +-10") {
  const ModelParams params = init_model(kConfig);
  SplitMix64 rng(6);
  for (const Tensor& s : fia_forward(random_features(rng, 10.0f), params.fia)) CHECK(s.all_finite());
}
