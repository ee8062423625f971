#include "agentsod/fia.hpp"

#include "agentsod/parallel.hpp"

#include <stdexcept>

namespace agentsod {

MlpParams make_mlp_params(int channels, int hidden) {
  MlpParams p;
  p.ln_gain = Tensor::ones({channels});
  p.ln_bias = Tensor::zeros({channels});
  p.w1 = Tensor::zeros({channels, hidden});
  p.b1 = Tensor::zeros({hidden});
  p.w2 = Tensor::zeros({hidden, channels});
  p.b2 = Tensor::zeros({channels});
  return p;
}

MlpVars lift(Tape& tape, const MlpParams& params) {
  MlpVars v;
  v.ln_gain = tape.leaf(params.ln_gain);
  v.ln_bias = tape.leaf(params.ln_bias);
  v.w1 = tape.leaf(params.w1);
  v.b1 = tape.leaf(params.b1);
  v.w2 = tape.leaf(params.w2);
  v.b2 = tape.leaf(params.b2);
  return v;
}

Tensor feature_to_tokens(const Tensor& feature, const TokenProjection& projection, int token_side) {
  if (feature.ndim() != 3) throw ShapeError("feature_to_tokens: expected C x H x W, got " + to_string(feature.shape()));
  if (feature.dim(1) < token_side || feature.dim(2) < token_side) {
    throw ShapeError("feature_to_tokens: spatial extent of " + to_string(feature.shape()) + " is below " +
                     std::to_string(token_side));
  }
  const Tensor projected = channel_project(feature, projection.weight, projection.bias);
  const Tensor pooled = adaptive_avg_pool2d(projected, token_side, token_side);
  const int channels = pooled.dim(0);
  return transpose(pooled.reshaped({channels, token_side * token_side}));
}

TokenSet generate_tokens(const PyramidFeatures& features, const FiaParams& params) {
  const AgentGeometry& g = params.geometry;
  if (static_cast<int>(features.size()) != g.levels || static_cast<int>(params.levels.size()) != g.levels) {
    throw ShapeError("generate_tokens: expected " + std::to_string(g.levels) + " levels, got " +
                     std::to_string(features.size()) + " features and " + std::to_string(params.levels.size()) +
                     " parameter sets");
  }
  TokenSet set;
  set.levels.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    set.levels.push_back(feature_to_tokens(features[i], params.levels[i].projection, g.token_side));
  }
  set.embcat = concat_rows(set.levels);
  return set;
}

Tensor build_key_agents(const std::vector<Tensor>& level_tokens, const AgentGeometry& geometry) {
  std::vector<Tensor> agents;
  agents.reserve(level_tokens.size());
  for (const auto& tokens : level_tokens) {
    agents.push_back(pool_agents(tokens, geometry.token_side, geometry.agent_side));
  }
  return concat_rows(agents);
}

std::vector<Tensor> fia_from_tokens(const TokenSet& tokens, const FiaParams& params, int threads) {
  const AgentGeometry& g = params.geometry;
  const Tensor key_agents = build_key_agents(tokens.levels, g);
  std::vector<Tensor> out(tokens.levels.size());
  parallel_for(static_cast<int>(tokens.levels.size()), threads, [&](int i) {
    const FiaLevelParams& level = params.levels[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] =
        fia_level(tokens.levels[static_cast<std::size_t>(i)], tokens.embcat, key_agents, level.attention, level.mlp, g);
  });
  return out;
}

std::vector<Tensor> fia_forward(const PyramidFeatures& features, const FiaParams& params, int threads) {
  return fia_from_tokens(generate_tokens(features, params), params, threads);
}

}  // namespace agentsod
