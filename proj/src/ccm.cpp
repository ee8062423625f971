#include "agentsod/ccm.hpp"

#include "agentsod/parallel.hpp"

namespace agentsod {

Tensor downsample_to_tokens(const Tensor& feature, const CcmLevelParams& level, const AgentGeometry& geometry) {
  return feature_to_tokens(feature, level.downsample, geometry.token_side);
}

Tensor reconstruct_feature(const Tensor& tokens, int height, int width, const TokenProjection& projection,
                           const AgentGeometry& geometry) {
  const int side = geometry.token_side;
  if (tokens.ndim() != 2 || tokens.dim(0) != side * side) {
    throw ShapeError("reconstruct_feature: " + to_string(tokens.shape()) + " is not a " + std::to_string(side) +
                     "x" + std::to_string(side) + " token grid");
  }
  if (height < 1 || width < 1) throw ShapeError("reconstruct_feature: invalid target extents");
  const Tensor grid = transpose(tokens).reshaped({tokens.dim(1), side, side});
  return bilinear_resize(channel_project(grid, projection.weight, projection.bias), height, width);
}

std::vector<Tensor> ccm_forward(const PyramidFeatures& features, const std::vector<Tensor>& interaction,
                                const CcmParams& params, int threads) {
  const AgentGeometry& g = params.geometry;
  if (features.size() != interaction.size() || features.size() != params.levels.size()) {
    throw ShapeError("ccm_forward: level count mismatch");
  }
  std::vector<Tensor> out(features.size());
  parallel_for(static_cast<int>(features.size()), threads, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    const CcmLevelParams& level = params.levels[idx];
    const Tensor x = downsample_to_tokens(features[idx], level, g);
    const Tensor calibrated = ccm_forward_level(x, interaction[idx], level.attention, g);
    out[idx] = reconstruct_feature(calibrated, features[idx].dim(1), features[idx].dim(2), level.reconstruct, g);
  });
  return out;
}

}  // namespace agentsod
