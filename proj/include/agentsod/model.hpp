#pragma once

// Desk-scale saliency network: seeded synthetic backbone, interaction and
// calibration stages with independent toggles, top-down decoder.

#include "agentsod/ccm.hpp"
#include "agentsod/fia.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace agentsod {

struct ModelConfig {
  int input_size = 224;
  std::vector<int> level_channels{16, 32, 64, 96, 96, 96};
  std::vector<int> level_extents{112, 56, 28, 14, 14, 14};
  AgentGeometry geometry{};
  int mlp_hidden = 512;
  std::uint64_t seed = 0;
  bool fia_enabled = true;
  bool ccm_enabled = true;

  int levels() const { return static_cast<int>(level_channels.size()); }
  void validate() const;
};

struct ConvStage {
  Tensor weight;  // [C_out x C_in x 3 x 3]
  Tensor bias;    // [C_out]
  int stride = 1;
};

struct DecoderParams {
  std::vector<TokenProjection> lateral;  // lateral[i]: C_{i+1} -> C_i
  TokenProjection head;                  // C_1 -> 1
};

struct ModelParams {
  std::vector<ConvStage> backbone;
  FiaParams fia;
  CcmParams ccm;
  DecoderParams decoder;
};

/// How a parameter tensor is initialized.
enum class InitKind { uniform, zeros, ones };

/// One named tensor of a ModelParams, in fixed traversal order.
struct ParamSlot {
  std::string name;
  Tensor* tensor;
  InitKind kind;
  int fan_in;
  int fan_out;
};

std::vector<ParamSlot> param_slots(ModelParams& params);

/// Correctly shaped parameters, all zero.
ModelParams make_model_params(const ModelConfig& config);

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)) from a SplitMix64 stream
/// seeded with config.seed; biases and agent-bias tables zero; layer-norm
/// gains one.
ModelParams init_model(const ModelConfig& config);

PyramidFeatures synthetic_backbone_forward(const Tensor& image, const ModelParams& params, const ModelConfig& config);

/// Top-down fusion of calibrated maps into a [1 x input x input] map in [0, 1].
Tensor decoder_forward(const std::vector<Tensor>& calibrated, const ModelParams& params, const ModelConfig& config);

/// Intermediate products of one forward pass.
struct ForwardTrace {
  PyramidFeatures features;
  TokenSet tokens;
  std::vector<Tensor> interaction;  // S_i, or e_i when interaction is off
  std::vector<Tensor> calibrated;
  Tensor saliency;
};

ForwardTrace model_forward_trace(const Tensor& image, const ModelParams& params, const ModelConfig& config,
                                 int threads = 1);
Tensor model_forward(const Tensor& image, const ModelParams& params, const ModelConfig& config, int threads = 1);

/// Writes one FTEN file per tensor plus manifest.txt into `dir`.
void save_params(const std::filesystem::path& dir, ModelParams& params);
/// Loads into a fresh skeleton shaped by `config`. Nothing is returned unless
/// every tensor loads and matches its expected shape.
ModelParams load_params(const std::filesystem::path& dir, const ModelConfig& config);

}  // namespace agentsod
