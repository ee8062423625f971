#include "agentsod/model.hpp"

#include "agentsod/io.hpp"
#include "agentsod/rng.hpp"

#include <map>
#include <set>
#include <stdexcept>

namespace agentsod {

namespace fs = std::filesystem;

void ModelConfig::validate() const {
  geometry.validate();
  if (level_channels.size() != level_extents.size() || levels() != geometry.levels) {
    throw std::invalid_argument("model config: level channel/extent lists must match the geometry level count");
  }
  int previous = input_size;
  for (int i = 0; i < levels(); ++i) {
    const int extent = level_extents[static_cast<std::size_t>(i)];
    if (level_channels[static_cast<std::size_t>(i)] < 1) throw std::invalid_argument("model config: bad channels");
    if (extent < geometry.token_side) {
      throw std::invalid_argument("model config: level extent " + std::to_string(extent) + " below token side");
    }
    if (extent != previous && extent * 2 != previous) {
      throw std::invalid_argument("model config: level extents must halve or repeat");
    }
    previous = extent;
  }
  if (mlp_hidden < 1) throw std::invalid_argument("model config: bad MLP width");
}

namespace {

TokenProjection zero_projection(int in, int out) { return {Tensor::zeros({in, out}), Tensor::zeros({out})}; }

void add_attention_slots(std::vector<ParamSlot>& slots, const std::string& prefix, AttentionParams& a) {
  const int c = a.w_q.dim(0);
  slots.push_back({prefix + ".w_q", &a.w_q, InitKind::uniform, c, c});
  slots.push_back({prefix + ".w_k", &a.w_k, InitKind::uniform, c, c});
  slots.push_back({prefix + ".w_v", &a.w_v, InitKind::uniform, c, c});
  slots.push_back({prefix + ".w_o", &a.w_o, InitKind::uniform, c, c});
  slots.push_back({prefix + ".agent_bias_1", &a.agent_bias_1, InitKind::zeros, 0, 0});
  slots.push_back({prefix + ".agent_bias_2", &a.agent_bias_2, InitKind::zeros, 0, 0});
  slots.push_back({prefix + ".dwc_kernel", &a.dwc_kernel, InitKind::uniform, 9, 9});
}

void add_projection_slots(std::vector<ParamSlot>& slots, const std::string& prefix, TokenProjection& p) {
  slots.push_back({prefix + ".weight", &p.weight, InitKind::uniform, p.weight.dim(0), p.weight.dim(1)});
  slots.push_back({prefix + ".bias", &p.bias, InitKind::zeros, 0, 0});
}

}  // namespace

std::vector<ParamSlot> param_slots(ModelParams& params) {
  std::vector<ParamSlot> slots;
  for (std::size_t i = 0; i < params.backbone.size(); ++i) {
    ConvStage& s = params.backbone[i];
    const std::string prefix = "backbone." + std::to_string(i);
    const int k2 = s.weight.dim(2) * s.weight.dim(3);
    slots.push_back({prefix + ".weight", &s.weight, InitKind::uniform, s.weight.dim(1) * k2, s.weight.dim(0) * k2});
    slots.push_back({prefix + ".bias", &s.bias, InitKind::zeros, 0, 0});
  }
  for (std::size_t i = 0; i < params.fia.levels.size(); ++i) {
    FiaLevelParams& l = params.fia.levels[i];
    const std::string prefix = "fia." + std::to_string(i);
    add_projection_slots(slots, prefix + ".proj", l.projection);
    add_attention_slots(slots, prefix + ".attention", l.attention);
    MlpParams& m = l.mlp;
    slots.push_back({prefix + ".mlp.ln_gain", &m.ln_gain, InitKind::ones, 0, 0});
    slots.push_back({prefix + ".mlp.ln_bias", &m.ln_bias, InitKind::zeros, 0, 0});
    slots.push_back({prefix + ".mlp.w1", &m.w1, InitKind::uniform, m.w1.dim(0), m.w1.dim(1)});
    slots.push_back({prefix + ".mlp.b1", &m.b1, InitKind::zeros, 0, 0});
    slots.push_back({prefix + ".mlp.w2", &m.w2, InitKind::uniform, m.w2.dim(0), m.w2.dim(1)});
    slots.push_back({prefix + ".mlp.b2", &m.b2, InitKind::zeros, 0, 0});
  }
  for (std::size_t i = 0; i < params.ccm.levels.size(); ++i) {
    CcmLevelParams& l = params.ccm.levels[i];
    const std::string prefix = "ccm." + std::to_string(i);
    add_projection_slots(slots, prefix + ".downsample", l.downsample);
    add_attention_slots(slots, prefix + ".attention", l.attention);
    add_projection_slots(slots, prefix + ".reconstruct", l.reconstruct);
  }
  for (std::size_t i = 0; i < params.decoder.lateral.size(); ++i) {
    add_projection_slots(slots, "decoder.lateral." + std::to_string(i), params.decoder.lateral[i]);
  }
  add_projection_slots(slots, "decoder.head", params.decoder.head);
  return slots;
}

ModelParams make_model_params(const ModelConfig& config) {
  config.validate();
  const AgentGeometry& g = config.geometry;
  const int c = g.channels;
  ModelParams p;
  int in_channels = 3;
  int previous = config.input_size;
  for (int i = 0; i < config.levels(); ++i) {
    const int out_channels = config.level_channels[static_cast<std::size_t>(i)];
    const int extent = config.level_extents[static_cast<std::size_t>(i)];
    p.backbone.push_back({Tensor::zeros({out_channels, in_channels, 3, 3}), Tensor::zeros({out_channels}),
                          extent == previous ? 1 : 2});
    in_channels = out_channels;
    previous = extent;
  }
  p.fia.geometry = g;
  p.ccm.geometry = g;
  for (int i = 0; i < config.levels(); ++i) {
    const int ci = config.level_channels[static_cast<std::size_t>(i)];
    p.fia.levels.push_back({zero_projection(ci, c), make_spatial_params(g), make_mlp_params(c, config.mlp_hidden)});
    p.ccm.levels.push_back({zero_projection(ci, c), make_channel_params(g), zero_projection(c, ci)});
  }
  for (int i = 0; i + 1 < config.levels(); ++i) {
    p.decoder.lateral.push_back(zero_projection(config.level_channels[static_cast<std::size_t>(i + 1)],
                                                config.level_channels[static_cast<std::size_t>(i)]));
  }
  p.decoder.head = zero_projection(config.level_channels.front(), 1);
  return p;
}

ModelParams init_model(const ModelConfig& config) {
  ModelParams p = make_model_params(config);
  SplitMix64 rng(config.seed);
  for (ParamSlot& slot : param_slots(p)) {
    switch (slot.kind) {
      case InitKind::uniform: fill_symmetric(*slot.tensor, rng, xavier_bound(slot.fan_in, slot.fan_out)); break;
      case InitKind::zeros: break;
      case InitKind::ones: *slot.tensor = Tensor::ones(slot.tensor->shape()); break;
    }
  }
  return p;
}

PyramidFeatures synthetic_backbone_forward(const Tensor& image, const ModelParams& params, const ModelConfig& config) {
  const Shape expected{3, config.input_size, config.input_size};
  if (image.shape() != expected) {
    throw ShapeError("backbone: expected image " + to_string(expected) + ", got " + to_string(image.shape()));
  }
  PyramidFeatures features;
  features.reserve(params.backbone.size());
  const Tensor* current = &image;
  for (const ConvStage& stage : params.backbone) {
    features.push_back(gelu(conv2d(*current, stage.weight, stage.bias, stage.stride, 1)));
    current = &features.back();
  }
  return features;
}

Tensor decoder_forward(const std::vector<Tensor>& calibrated, const ModelParams& params, const ModelConfig& config) {
  if (static_cast<int>(calibrated.size()) != config.levels()) throw ShapeError("decoder: level count mismatch");
  Tensor fused = calibrated.back();
  for (int i = config.levels() - 2; i >= 0; --i) {
    const Tensor& skip = calibrated[static_cast<std::size_t>(i)];
    const Tensor up = bilinear_resize(fused, skip.dim(1), skip.dim(2));
    const TokenProjection& lateral = params.decoder.lateral[static_cast<std::size_t>(i)];
    fused = add(channel_project(up, lateral.weight, lateral.bias), skip);
  }
  const Tensor logits = channel_project(fused, params.decoder.head.weight, params.decoder.head.bias);
  return logistic(bilinear_resize(logits, config.input_size, config.input_size));
}

ForwardTrace model_forward_trace(const Tensor& image, const ModelParams& params, const ModelConfig& config,
                                 int threads) {
  ForwardTrace trace;
  trace.features = synthetic_backbone_forward(image, params, config);
  trace.tokens = generate_tokens(trace.features, params.fia);
  trace.interaction = config.fia_enabled ? fia_from_tokens(trace.tokens, params.fia, threads) : trace.tokens.levels;
  if (config.ccm_enabled) {
    trace.calibrated = ccm_forward(trace.features, trace.interaction, params.ccm, threads);
  } else {
    trace.calibrated.reserve(trace.features.size());
    for (std::size_t i = 0; i < trace.features.size(); ++i) {
      trace.calibrated.push_back(reconstruct_feature(trace.interaction[i], trace.features[i].dim(1),
                                                     trace.features[i].dim(2), params.ccm.levels[i].reconstruct,
                                                     config.geometry));
    }
  }
  trace.saliency = decoder_forward(trace.calibrated, params, config);
  return trace;
}

Tensor model_forward(const Tensor& image, const ModelParams& params, const ModelConfig& config, int threads) {
  return model_forward_trace(image, params, config, threads).saliency;
}

void save_params(const fs::path& dir, ModelParams& params) {
  fs::create_directories(dir);
  Manifest manifest;
  for (const ParamSlot& slot : param_slots(params)) {
    const std::string rel = slot.name + ".ften";
    write_ften(dir / rel, *slot.tensor);
    manifest.emplace_back(slot.name, rel);
  }
  write_manifest(dir / "manifest.txt", manifest);
}

ModelParams load_params(const fs::path& dir, const ModelConfig& config) {
  const Manifest manifest = read_manifest(dir / "manifest.txt");
  std::map<std::string, std::string> entries;
  for (const auto& [name, rel] : manifest) {
    if (!entries.emplace(name, rel).second) {
      throw ContainerError(ContainerErrorKind::bad_container, "manifest lists " + name + " twice");
    }
  }
  ModelParams p = make_model_params(config);
  std::set<std::string> used;
  for (ParamSlot& slot : param_slots(p)) {
    const auto it = entries.find(slot.name);
    if (it == entries.end()) {
      throw ContainerError(ContainerErrorKind::missing_file, "manifest has no entry for " + slot.name);
    }
    Tensor t = read_ften(dir / it->second);
    if (t.shape() != slot.tensor->shape()) {
      throw ContainerError(ContainerErrorKind::bad_container, slot.name + ": stored shape " + to_string(t.shape()) +
                                                                  " does not match " + to_string(slot.tensor->shape()));
    }
    if (!t.all_finite()) throw ContainerError(ContainerErrorKind::bad_container, slot.name + ": non-finite values");
    *slot.tensor = std::move(t);
    used.insert(slot.name);
  }
  if (used.size() != entries.size()) {
    for (const auto& [name, rel] : entries) {
      if (!used.count(name)) throw ContainerError(ContainerErrorKind::bad_container, "unexpected tensor " + name);
    }
  }
  return p;
}

}  // namespace agentsod
