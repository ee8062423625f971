#pragma once

// Feature interaction across pyramid levels: per-level tokens, their spatial
// concatenation, spatial agent attention per level and an MLP residual.

#include "agentsod/attention.hpp"

#include <vector>

namespace agentsod {

/// Backbone feature maps, one [C_i x H_i x W_i] tensor per level.
using PyramidFeatures = std::vector<Tensor>;

template <class T>
struct BasicMlpParams {
  T ln_gain;  // [C]
  T ln_bias;  // [C]
  T w1;       // [C x hidden]
  T b1;       // [hidden]
  T w2;       // [hidden x C]
  T b2;       // [C]
};

using MlpParams = BasicMlpParams<Tensor>;
using MlpVars = BasicMlpParams<Var>;

/// Layer-norm gain of one, everything else zero.
MlpParams make_mlp_params(int channels, int hidden);
MlpVars lift(Tape& tape, const MlpParams& params);

/// 1x1 projection from a level's native channels to the token width.
struct TokenProjection {
  Tensor weight;  // [C_i x C]
  Tensor bias;    // [C]
};

struct FiaLevelParams {
  TokenProjection projection;
  AttentionParams attention;
  MlpParams mlp;
};

struct FiaParams {
  AgentGeometry geometry;
  std::vector<FiaLevelParams> levels;
};

/// Level tokens plus their row-wise concatenation; rows
/// [i * tokens, (i + 1) * tokens) of `embcat` are exactly `levels[i]`.
struct TokenSet {
  std::vector<Tensor> levels;
  Tensor embcat;

  int level_offset(int level) const { return level * levels.front().dim(0); }
};

/// Channel-projects a feature map and pools it to a token_side^2 x C grid.
Tensor feature_to_tokens(const Tensor& feature, const TokenProjection& projection, int token_side);

TokenSet generate_tokens(const PyramidFeatures& features, const FiaParams& params);

/// Pools every level to its agents and concatenates them in level order.
Tensor build_key_agents(const std::vector<Tensor>& level_tokens, const AgentGeometry& geometry);

/// x + W2 act(W1 LN(x) + b1) + b2.
template <class T>
T mlp_residual(const T& x, const BasicMlpParams<T>& p) {
  if (x.shape().size() != 2 || x.dim(1) != p.w1.dim(0)) {
    throw ShapeError("mlp_residual: input " + to_string(x.shape()) + " vs w1 " + to_string(p.w1.shape()));
  }
  const T normed = layer_norm(x, p.ln_gain, p.ln_bias);
  const T hidden = gelu(add_row_broadcast(matmul(normed, p.w1), p.b1));
  return add(x, add_row_broadcast(matmul(hidden, p.w2), p.b2));
}

/// One level of interaction: the MLP residual applied to the spatial agent
/// attention of `tokens` against the whole pyramid.
template <class T>
T fia_level(const T& tokens, const T& embcat, const T& key_agents, const BasicAttentionParams<T>& attention,
            const BasicMlpParams<T>& mlp, const AgentGeometry& geometry) {
  return mlp_residual(spatial_agent_cross_attention(tokens, embcat, key_agents, attention, geometry), mlp);
}

/// S_1..S_L for a token set. Levels are evaluated on up to `threads` workers;
/// the result does not depend on the thread count.
std::vector<Tensor> fia_from_tokens(const TokenSet& tokens, const FiaParams& params, int threads = 1);

std::vector<Tensor> fia_forward(const PyramidFeatures& features, const FiaParams& params, int threads = 1);

}  // namespace agentsod
