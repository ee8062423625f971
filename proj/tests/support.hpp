#pragma once

#include "agentsod/attention.hpp"
#include "agentsod/rng.hpp"

namespace testing_support {

using namespace agentsod;

// Xavier-scaled projections; bias tables and DWC kernel random only when
// `extras` is set, otherwise zero. Output projection is identity when
// `identity_out` is set.
inline void randomize_attention(AttentionParams& p, SplitMix64& rng, bool extras, bool identity_out = false) {
  const int c = p.w_q.dim(0);
  const float bound = xavier_bound(c, c);
  fill_symmetric(p.w_q, rng, bound);
  fill_symmetric(p.w_k, rng, bound);
  fill_symmetric(p.w_v, rng, bound);
  if (identity_out) {
    p.w_o = Tensor::identity(c);
  } else {
    fill_symmetric(p.w_o, rng, bound);
  }
  if (extras) {
    fill_symmetric(p.agent_bias_1, rng, 0.5f);
    fill_symmetric(p.agent_bias_2, rng, 0.5f);
    fill_symmetric(p.dwc_kernel, rng, 0.3f);
  }
}

inline AttentionParams random_spatial(const AgentGeometry& g, SplitMix64& rng, bool extras, bool identity_out = false) {
  AttentionParams p = make_spatial_params(g);
  randomize_attention(p, rng, extras, identity_out);
  return p;
}

inline AttentionParams random_channel(const AgentGeometry& g, SplitMix64& rng, bool extras, bool identity_out = false) {
  AttentionParams p = make_channel_params(g);
  randomize_attention(p, rng, extras, identity_out);
  return p;
}

}  // namespace testing_support
