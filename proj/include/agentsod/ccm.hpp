#pragma once

// Calibration of interaction outputs against backbone features: channel agent
// attention on token grids, then reconstruction to each level's native map.

#include "agentsod/fia.hpp"

#include <vector>

namespace agentsod {

struct CcmLevelParams {
  TokenProjection downsample;   // [C_i x C], [C]
  AttentionParams attention;    // channel-attention shapes
  TokenProjection reconstruct;  // [C x C_i], [C_i]
};

struct CcmParams {
  AgentGeometry geometry;
  std::vector<CcmLevelParams> levels;
};

/// Backbone feature -> x_i token grid. Same path as token generation, with
/// the calibration module's own projection.
Tensor downsample_to_tokens(const Tensor& feature, const CcmLevelParams& level, const AgentGeometry& geometry);

/// x_i + channel_agent_cross_attention(x_i, s_i).
template <class T>
T ccm_forward_level(const T& x, const T& s, const BasicAttentionParams<T>& attention, const AgentGeometry& geometry) {
  return add(x, channel_agent_cross_attention(x, s, attention, geometry));
}

/// [side^2 x C] tokens -> [C_i x height x width]: unflatten, channel-project,
/// bilinear resize.
Tensor reconstruct_feature(const Tensor& tokens, int height, int width, const TokenProjection& projection,
                           const AgentGeometry& geometry);

/// Calibrated feature maps for every level; each has its backbone feature's extents.
std::vector<Tensor> ccm_forward(const PyramidFeatures& features, const std::vector<Tensor>& interaction,
                                const CcmParams& params, int threads = 1);

}  // namespace agentsod
