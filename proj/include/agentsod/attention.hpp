#pragma once

// Agent attention kernels. Every kernel is a template over the value type so
// the same code runs on plain Tensors (inference) and on tape Vars (gradient
// checks). Token grids are row-major [tokens x channels].

#include "agentsod/autodiff.hpp"
#include "agentsod/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace agentsod {

/// Fixed token/agent geometry shared by a set of attention blocks.
struct AgentGeometry {
  int token_side = 14;
  int channels = 128;
  int agent_side = 7;
  int levels = 6;
  int heads = 4;

  int tokens() const { return token_side * token_side; }
  int agents() const { return agent_side * agent_side; }
  int concat_tokens() const { return levels * tokens(); }
  int key_agents() const { return levels * agents(); }

  /// Throws std::invalid_argument when the geometry is inconsistent.
  void validate() const;
};

/// Learned state of one attention block.
///
/// Spatial blocks: agent_bias_1 is [key_agents x concat_tokens] (agents
/// attending the concatenated tokens), agent_bias_2 is [tokens x key_agents].
/// Channel blocks: agent_bias_1 is [agents x channels], agent_bias_2 is
/// [channels x agents]. Both stages share one bias table across heads.
template <class T>
struct BasicAttentionParams {
  T w_q;
  T w_k;
  T w_v;
  T w_o;
  T agent_bias_1;
  T agent_bias_2;
  T dwc_kernel;
  int heads = 4;
};

using AttentionParams = BasicAttentionParams<Tensor>;
using AttentionVars = BasicAttentionParams<Var>;

/// Zero-filled parameters with the shapes a spatial block needs.
AttentionParams make_spatial_params(const AgentGeometry& geometry);
/// Zero-filled parameters with the shapes a channel block needs.
AttentionParams make_channel_params(const AgentGeometry& geometry);

/// Registers every tensor of `params` as a tape leaf.
AttentionVars lift(Tape& tape, const AttentionParams& params);

namespace detail {

template <class T>
void require_shape(const T& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected " + to_string(expected) + ", got " + to_string(t.shape()));
  }
}

}  // namespace detail

/// softmax(q k^T / sqrt(d) + bias) v.
template <class T>
T scaled_dot_attention(const T& q, const T& k, const T& v, const T* bias = nullptr) {
  if (q.shape().size() != 2 || k.shape().size() != 2 || v.shape().size() != 2 || q.dim(1) != k.dim(1) ||
      k.dim(0) != v.dim(0)) {
    throw ShapeError("scaled_dot_attention: incompatible q " + to_string(q.shape()) + ", k " +
                     to_string(k.shape()) + ", v " + to_string(v.shape()));
  }
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(q.dim(1)));
  T logits = scale(matmul(q, transpose(k)), inv_sqrt_d);
  if (bias) {
    detail::require_shape(*bias, Shape{q.dim(0), k.dim(0)}, "scaled_dot_attention bias");
    logits = add(logits, *bias);
  }
  return matmul(softmax_lastdim(logits), v);
}

/// Splits the feature columns of q, k and v into `heads` equal slices, attends
/// each slice independently with a shared bias, and concatenates the results.
template <class T>
T multi_head_attention(const T& q, const T& k, const T& v, const T* bias, int heads) {
  if (heads < 1 || q.dim(1) % heads != 0 || v.dim(1) % heads != 0) {
    throw ShapeError("multi_head_attention: " + std::to_string(heads) + " heads do not divide " +
                     to_string(q.shape()) + " / " + to_string(v.shape()));
  }
  if (heads == 1) return scaled_dot_attention(q, k, v, bias);
  const int qk_width = q.dim(1) / heads;
  const int v_width = v.dim(1) / heads;
  std::vector<T> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    outputs.push_back(scaled_dot_attention(slice_cols(q, h * qk_width, qk_width),
                                           slice_cols(k, h * qk_width, qk_width),
                                           slice_cols(v, h * v_width, v_width), bias));
  }
  return concat_cols(outputs);
}

/// [side^2 x C] tokens -> [agent_side^2 x C] spatially pooled agents.
template <class T>
T pool_agents(const T& tokens, int side, int agent_side) {
  if (tokens.shape().size() != 2 || side < 1 || tokens.dim(0) != side * side) {
    throw ShapeError("pool_agents: " + to_string(tokens.shape()) + " is not a " + std::to_string(side) + "x" +
                     std::to_string(side) + " token grid");
  }
  if (agent_side < 1 || agent_side > side) {
    throw ShapeError("pool_agents: agent side " + std::to_string(agent_side) + " outside [1, " +
                     std::to_string(side) + "]");
  }
  const int channels = tokens.dim(1);
  T grid = reshape(transpose(tokens), Shape{channels, side, side});
  T pooled = adaptive_avg_pool2d(grid, agent_side, agent_side);
  return transpose(reshape(pooled, Shape{channels, agent_side * agent_side}));
}

/// [rows x width] -> [count x width], averaging adaptive windows of rows.
template <class T>
T pool_rows(const T& x, int count) {
  const int rows = x.dim(0);
  const int width = x.dim(1);
  return reshape(adaptive_avg_pool2d(reshape(x, Shape{1, rows, width}), count, width), Shape{count, width});
}

/// Depthwise convolution of a [side^2 x C] token grid laid out as C x side x side.
template <class T>
T token_depthwise_conv(const T& tokens, const T& kernel, int side) {
  const int channels = tokens.dim(1);
  T grid = reshape(transpose(tokens), Shape{channels, side, side});
  return transpose(reshape(depthwise_conv2d(grid, kernel), Shape{channels, side * side}));
}

/// Spatial agent cross attention of one level's tokens against the
/// concatenation of all levels.
///
/// Stage 1 lets every key agent aggregate the concatenated tokens; stage 2
/// lets each token of `tokens` read those agent features through the key
/// agents. The value path of `tokens` is passed through the depthwise kernel
/// and added before the output projection.
template <class T>
T spatial_agent_cross_attention(const T& tokens, const T& embcat, const T& key_agents,
                                const BasicAttentionParams<T>& p, const AgentGeometry& geometry) {
  const int n = geometry.tokens();
  const int c = geometry.channels;
  detail::require_shape(tokens, Shape{n, c}, "spatial attention tokens");
  detail::require_shape(embcat, Shape{geometry.concat_tokens(), c}, "spatial attention embcat");
  detail::require_shape(key_agents, Shape{geometry.key_agents(), c}, "spatial attention key agents");
  detail::require_shape(p.agent_bias_1, Shape{geometry.key_agents(), geometry.concat_tokens()},
                        "spatial agent_bias_1");
  detail::require_shape(p.agent_bias_2, Shape{n, geometry.key_agents()}, "spatial agent_bias_2");
  detail::require_shape(p.dwc_kernel, Shape{c, 3, 3}, "spatial dwc_kernel");

  const T q = matmul(tokens, p.w_q);
  const T k = matmul(embcat, p.w_k);
  const T v = matmul(embcat, p.w_v);
  const T agent_q = matmul(key_agents, p.w_q);
  const T agent_k = matmul(key_agents, p.w_k);

  const T agent_features = multi_head_attention(agent_q, k, v, &p.agent_bias_1, p.heads);
  T out = multi_head_attention(q, agent_k, agent_features, &p.agent_bias_2, p.heads);
  out = add(out, token_depthwise_conv(matmul(tokens, p.w_v), p.dwc_kernel, geometry.token_side));
  return matmul(out, p.w_o);
}

/// Channel agent cross attention: channels are the attending tokens and the
/// spatial positions are the features. `queries` supplies the query channels,
/// `context` the key/value channels; agents are adaptive channel poolings of
/// the projected queries and keys.
template <class T>
T channel_agent_cross_attention(const T& queries, const T& context, const BasicAttentionParams<T>& p,
                                const AgentGeometry& geometry) {
  const int n = geometry.tokens();
  const int c = geometry.channels;
  const int agents = geometry.agents();
  detail::require_shape(queries, Shape{n, c}, "channel attention queries");
  detail::require_shape(context, Shape{n, c}, "channel attention context");
  detail::require_shape(p.agent_bias_1, Shape{agents, c}, "channel agent_bias_1");
  detail::require_shape(p.agent_bias_2, Shape{c, agents}, "channel agent_bias_2");
  detail::require_shape(p.dwc_kernel, Shape{c, 3, 3}, "channel dwc_kernel");

  const T q = transpose(matmul(queries, p.w_q));
  const T k = transpose(matmul(context, p.w_k));
  const T v_tokens = matmul(context, p.w_v);
  const T v = transpose(v_tokens);
  const T agent_q = pool_rows(q, agents);
  const T agent_k = pool_rows(k, agents);

  const T agent_features = multi_head_attention(agent_q, k, v, &p.agent_bias_1, p.heads);
  const T out = multi_head_attention(q, agent_k, agent_features, &p.agent_bias_2, p.heads);
  const T mixed = add(transpose(out), token_depthwise_conv(v_tokens, p.dwc_kernel, geometry.token_side));
  return matmul(mixed, p.w_o);
}

}  // namespace agentsod
