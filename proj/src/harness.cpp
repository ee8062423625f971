#include "agentsod/harness.hpp"

#include "agentsod/fia.hpp"
#include "agentsod/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace agentsod {

AgentGeometry gradcheck_geometry() {
  AgentGeometry g;
  g.token_side = 4;
  g.channels = 8;
  g.agent_side = 2;
  g.levels = 2;
  g.heads = 2;
  return g;
}

namespace {

void randomize(AttentionParams& p, SplitMix64& rng) {
  for (Tensor* t : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) fill_symmetric(*t, rng, 0.6f);
  fill_symmetric(p.agent_bias_1, rng, 0.5f);
  fill_symmetric(p.agent_bias_2, rng, 0.5f);
  fill_symmetric(p.dwc_kernel, rng, 0.4f);
}

// A tensor under test and its leaf on the tape.
struct Slot {
  Tensor* tensor;
  Var var;
};

double check_slots(const std::vector<Slot>& slots, Tape& tape, const Var& loss,
                   const std::function<double()>& evaluate, float h, int& checked) {
  backward(tape, loss);
  double worst = 0.0;
  for (const Slot& slot : slots) {
    const Tensor analytic = tape.grad(slot.var);
    const Tensor original = *slot.tensor;
    const Tensor numeric = finite_difference_grad(
        [&](const Tensor& probe) {
          *slot.tensor = probe;
          return evaluate();
        },
        original, h);
    *slot.tensor = original;
    worst = std::max(worst, relative_error(analytic, numeric));
    ++checked;
  }
  return worst;
}

double weighted_total(const Tensor& out, const Tensor& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * weights[i];
  return acc;
}

double check_spatial(std::uint64_t seed, float h, int& checked) {
  const AgentGeometry g = gradcheck_geometry();
  SplitMix64 rng(seed);
  Tensor tokens = random_tensor({g.tokens(), g.channels}, rng);
  Tensor embcat = random_tensor({g.concat_tokens(), g.channels}, rng);
  Tensor key_agents = random_tensor({g.key_agents(), g.channels}, rng);
  AttentionParams p = make_spatial_params(g);
  randomize(p, rng);
  const Tensor weights = random_tensor({g.tokens(), g.channels}, rng);

  Tape tape;
  const Var t = tape.leaf(tokens);
  const Var e = tape.leaf(embcat);
  const Var k = tape.leaf(key_agents);
  const AttentionVars pv = lift(tape, p);
  const Var loss = weighted_sum(spatial_agent_cross_attention(t, e, k, pv, g), weights);

  std::vector<Slot> slots{{&tokens, t},           {&embcat, e},          {&key_agents, k},
                          {&p.w_q, pv.w_q},       {&p.w_k, pv.w_k},      {&p.w_v, pv.w_v},
                          {&p.w_o, pv.w_o},       {&p.agent_bias_1, pv.agent_bias_1},
                          {&p.agent_bias_2, pv.agent_bias_2},            {&p.dwc_kernel, pv.dwc_kernel}};
  return check_slots(
      slots, tape, loss,
      [&] { return weighted_total(spatial_agent_cross_attention(tokens, embcat, key_agents, p, g), weights); }, h,
      checked);
}

double check_channel(std::uint64_t seed, float h, int& checked) {
  const AgentGeometry g = gradcheck_geometry();
  SplitMix64 rng(seed ^ 0x5A5A5A5AULL);
  Tensor queries = random_tensor({g.tokens(), g.channels}, rng);
  Tensor context = random_tensor({g.tokens(), g.channels}, rng);
  AttentionParams p = make_channel_params(g);
  randomize(p, rng);
  const Tensor weights = random_tensor({g.tokens(), g.channels}, rng);

  Tape tape;
  const Var q = tape.leaf(queries);
  const Var c = tape.leaf(context);
  const AttentionVars pv = lift(tape, p);
  const Var loss = weighted_sum(channel_agent_cross_attention(q, c, pv, g), weights);

  std::vector<Slot> slots{{&queries, q},    {&context, c},    {&p.w_q, pv.w_q},
                          {&p.w_k, pv.w_k}, {&p.w_v, pv.w_v}, {&p.w_o, pv.w_o},
                          {&p.agent_bias_1, pv.agent_bias_1}, {&p.agent_bias_2, pv.agent_bias_2},
                          {&p.dwc_kernel, pv.dwc_kernel}};
  return check_slots(
      slots, tape, loss, [&] { return weighted_total(channel_agent_cross_attention(queries, context, p, g), weights); },
      h, checked);
}

double check_mlp(std::uint64_t seed, float h, int& checked) {
  const AgentGeometry g = gradcheck_geometry();
  const int hidden = 4 * g.channels;
  SplitMix64 rng(seed ^ 0xC3C3C3C3ULL);
  Tensor x = random_tensor({g.tokens(), g.channels}, rng);
  MlpParams p = make_mlp_params(g.channels, hidden);
  for (float& v : p.ln_gain.data()) v = 1.0f + rng.symmetric(0.3f);
  fill_symmetric(p.ln_bias, rng, 0.3f);
  fill_symmetric(p.w1, rng, xavier_bound(g.channels, hidden));
  fill_symmetric(p.b1, rng, 0.3f);
  fill_symmetric(p.w2, rng, xavier_bound(hidden, g.channels));
  fill_symmetric(p.b2, rng, 0.3f);
  const Tensor weights = random_tensor({g.tokens(), g.channels}, rng);

  Tape tape;
  const Var xv = tape.leaf(x);
  const MlpVars pv = lift(tape, p);
  const Var loss = weighted_sum(mlp_residual(xv, pv), weights);

  std::vector<Slot> slots{{&x, xv},         {&p.ln_gain, pv.ln_gain}, {&p.ln_bias, pv.ln_bias},
                          {&p.w1, pv.w1},   {&p.b1, pv.b1},           {&p.w2, pv.w2},
                          {&p.b2, pv.b2}};
  return check_slots(slots, tape, loss, [&] { return weighted_total(mlp_residual(x, p), weights); }, h, checked);
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(const std::vector<std::uint64_t>& seeds, float h) {
  std::vector<GradcheckResult> results{{"SACA", 0.0, 0}, {"CCA", 0.0, 0}, {"MLP", 0.0, 0}};
  for (std::uint64_t seed : seeds) {
    results[0].max_relative_error =
        std::max(results[0].max_relative_error, check_spatial(seed, h, results[0].tensors_checked));
    results[1].max_relative_error =
        std::max(results[1].max_relative_error, check_channel(seed, h, results[1].tensors_checked));
    results[2].max_relative_error =
        std::max(results[2].max_relative_error, check_mlp(seed, h, results[2].tensors_checked));
  }
  return results;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need at least two points");
  const double n = static_cast<double>(x.size());
  double sx = 0.0;
  double sy = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0) throw std::invalid_argument("loglog_slope: values must be positive");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("loglog_slope: x values must differ");
  return (n * sxy - sx * sy) / denom;
}

namespace {

template <class F>
double median_seconds(F&& fn, int repeats) {
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t mid = samples.size() / 2;
  return samples.size() % 2 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
}

}  // namespace

BenchResult run_bench(const std::vector<int>& sizes, int repeats, std::uint64_t seed) {
  if (sizes.size() < 2) throw std::invalid_argument("bench: need at least two sizes");
  if (repeats < 1) throw std::invalid_argument("bench: repeats must be positive");
  BenchResult result;
  std::vector<double> ns;
  std::vector<double> full_times;
  std::vector<double> agent_times;
  const double resolution = std::chrono::duration<double>(std::chrono::steady_clock::duration(1)).count();
  for (int n : sizes) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (side * side != n || n < 49) {
      throw std::invalid_argument("bench: size " + std::to_string(n) + " is not a perfect square >= 49");
    }
    AgentGeometry g;
    g.token_side = side;
    g.levels = 1;
    SplitMix64 rng(seed);
    const Tensor tokens = random_tensor({n, g.channels}, rng);
    AttentionParams p = make_spatial_params(g);
    const float bound = xavier_bound(g.channels, g.channels);
    for (Tensor* t : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) fill_symmetric(*t, rng, bound);
    fill_symmetric(p.dwc_kernel, rng, xavier_bound(9, 9));
    const Tensor q = matmul(tokens, p.w_q);
    const Tensor k = matmul(tokens, p.w_k);
    const Tensor v = matmul(tokens, p.w_v);

    const double full = median_seconds([&] { (void)multi_head_attention<Tensor>(q, k, v, nullptr, g.heads); }, repeats);
    const double agent = median_seconds(
        [&] {
          const Tensor key_agents = pool_agents(tokens, side, g.agent_side);
          (void)spatial_agent_cross_attention(tokens, tokens, key_agents, p, g);
        },
        repeats);
    result.rows.push_back({n, "full", full});
    result.rows.push_back({n, "agent", agent});
    result.resolution_warning = result.resolution_warning || full < 100 * resolution || agent < 100 * resolution;
    ns.push_back(n);
    full_times.push_back(std::max(full, resolution));
    agent_times.push_back(std::max(agent, resolution));
  }
  result.full_slope = loglog_slope(ns, full_times);
  result.agent_slope = loglog_slope(ns, agent_times);
  return result;
}

}  // namespace agentsod
