#include "agentsod/attention.hpp"

#include <stdexcept>

namespace agentsod {

void AgentGeometry::validate() const {
  if (token_side < 1 || channels < 1 || agent_side < 1 || levels < 1 || heads < 1) {
    throw std::invalid_argument("agent geometry: all extents must be positive");
  }
  if (agent_side > token_side) throw std::invalid_argument("agent geometry: agent_side exceeds token_side");
  if (channels % heads != 0) throw std::invalid_argument("agent geometry: heads must divide channels");
}

AttentionParams make_spatial_params(const AgentGeometry& geometry) {
  geometry.validate();
  const int c = geometry.channels;
  AttentionParams p;
  p.w_q = Tensor::zeros({c, c});
  p.w_k = Tensor::zeros({c, c});
  p.w_v = Tensor::zeros({c, c});
  p.w_o = Tensor::zeros({c, c});
  p.agent_bias_1 = Tensor::zeros({geometry.key_agents(), geometry.concat_tokens()});
  p.agent_bias_2 = Tensor::zeros({geometry.tokens(), geometry.key_agents()});
  p.dwc_kernel = Tensor::zeros({c, 3, 3});
  p.heads = geometry.heads;
  return p;
}

AttentionParams make_channel_params(const AgentGeometry& geometry) {
  geometry.validate();
  // Channel attention splits heads across tokens and pools channels into agents.
  if (geometry.tokens() % geometry.heads != 0) {
    throw std::invalid_argument("channel attention: heads must divide the token count");
  }
  if (geometry.agents() > geometry.channels) {
    throw std::invalid_argument("channel attention: more agents than channels");
  }
  const int c = geometry.channels;
  AttentionParams p;
  p.w_q = Tensor::zeros({c, c});
  p.w_k = Tensor::zeros({c, c});
  p.w_v = Tensor::zeros({c, c});
  p.w_o = Tensor::zeros({c, c});
  p.agent_bias_1 = Tensor::zeros({geometry.agents(), c});
  p.agent_bias_2 = Tensor::zeros({c, geometry.agents()});
  p.dwc_kernel = Tensor::zeros({c, 3, 3});
  p.heads = geometry.heads;
  return p;
}

AttentionVars lift(Tape& tape, const AttentionParams& params) {
  AttentionVars v;
  v.w_q = tape.leaf(params.w_q);
  v.w_k = tape.leaf(params.w_k);
  v.w_v = tape.leaf(params.w_v);
  v.w_o = tape.leaf(params.w_o);
  v.agent_bias_1 = tape.leaf(params.agent_bias_1);
  v.agent_bias_2 = tape.leaf(params.agent_bias_2);
  v.dwc_kernel = tape.leaf(params.dwc_kernel);
  v.heads = params.heads;
  return v;
}

}  // namespace agentsod
