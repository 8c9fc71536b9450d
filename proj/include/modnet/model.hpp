#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "modnet/patch.hpp"
#include "modnet/point_cloud.hpp"
#include "modnet/tape.hpp"

namespace modnet {

/// Layer widths. The defaults satisfy the two architectural constraints: the
/// concatenated multi-scale feature is 3 x 512 = 1536 wide and the scale
/// weight head emits 9 logits reshaped to a 3x3 matrix.
struct ModelConfig {
  std::vector<int> encoder_widths{64, 128, 256, 512};
  int mspm_hidden = 512;
  int weight_hidden = 256;
  std::vector<int> decoder_widths{256, 128};

  static constexpr int kScales = 3;

  int feature_width() const { return encoder_widths.back(); }
  int concat_width() const { return kScales * feature_width(); }

  std::string dimension_table() const;
  std::uint64_t digest() const;  // FNV-1a over the dimension table
};

struct LinearLayer {
  ad::Parameter weight;  // [in, out]
  ad::Parameter bias;    // [out]
};

struct EncoderLayer {
  LinearLayer fc;
  ad::BatchNorm bn;
};

/// All learnable state: three per-point encoder stacks, the multi-scale
/// perception block, and three per-scale decoders. Parameter registry order
/// is fixed by construction and shared by checkpoints and gradient sinks.
class ModNetParams {
 public:
  ModNetParams(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  std::vector<ad::Parameter*>& params() { return registry_; }

  // Every persistent tensor (parameters plus batch-norm running statistics),
  // in checkpoint order.
  std::vector<std::pair<std::string, ad::Tensor*>> state_tensors();

  std::array<std::vector<EncoderLayer>, 3> pfe;
  LinearLayer mspm_fc1;
  std::array<LinearLayer, 3> mspm_gate;
  LinearLayer weight_fc1, weight_fc2;
  struct Decoder {
    LinearLayer dc1a, dc1b;    // shared trunk of the sub-decoder
    LinearLayer head_pre;      // supervised pre-offset head
    LinearLayer head_offset;   // offset head combined by the scale weights
  };
  std::array<Decoder, 3> decoders;

 private:
  ModelConfig config_;
  std::vector<ad::Parameter*> registry_;
};

/// Tape handles for one forward pass (training path).
struct ForwardValues {
  std::array<ad::Value, 3> low_feats;      // f_k        [B, F]
  std::array<ad::Value, 3> gated_feats;    // f'_k       [B, F]
  ad::Value axis_scale_weights;            // softmaxed  [B, 3 axes, 3 scales]
  std::array<ad::Value, 3> scale_weights;  // w_k        [B, 3]
  std::array<ad::Value, 3> pre_offsets;    // dp_pre_k   [B, 3]
  std::array<ad::Value, 3> offsets;        // offset_k   [B, 3]
  ad::Value displacement;                  // dp         [B, 3]
};

/// Plain-tensor snapshot of a forward pass. weights is [B, 3 scales, 3 axes]
/// with each per-axis triple over scales summing to 1.
struct ForwardOutput {
  std::array<ad::Tensor, 3> low_feats;
  std::array<ad::Tensor, 3> gated_feats;
  ad::Tensor weights;
  std::array<ad::Tensor, 3> pre_offsets;
  std::array<ad::Tensor, 3> offsets;
  ad::Tensor displacement;
};

ad::Value pfe_forward(ad::Value patch, std::vector<EncoderLayer>& layers);
ForwardValues modnet_forward(ad::Tape& tape, const std::array<ad::Value, 3>& patches,
                             ModNetParams& params);
ForwardOutput collect_output(const ad::Tape& tape, const ForwardValues& values);

/// Eval-mode forward. The per-point encoder stack is evaluated once per
/// distinct patch point (eval-mode layers are row-independent and max-pooling
/// ignores multiplicity), which also makes the result exactly invariant to
/// point order within a patch.
ForwardOutput modnet_eval(ModNetParams& params, const std::array<ad::Tensor, 3>& patches);

struct DenoiseConfig {
  std::array<double, 3> radii_frac{0.03, 0.04, 0.05};
  int n_patch = 400;
  int batch = 64;
  int threads = 1;
  std::uint64_t seed = 0;
};

struct DenoiseResult {
  PointCloud cloud;
  std::vector<Mat3> weights;  // per point, [scale][axis]
  int isolated_count = 0;
};

/// Whole-cloud inference: p_i + r_max * R^T * dp_i per point, with the
/// per-point scale-weight matrices exported for visualization.
DenoiseResult denoise_cloud(const PointCloud& noisy, ModNetParams& params,
                            const DenoiseConfig& config);

void write_weights_file(const std::string& path, const std::vector<Mat3>& weights);

}  // namespace modnet
