#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "gsnet/attention.hpp"
#include "gsnet/conv_blocks.hpp"

namespace gsnet {

// Architectural hyperparameters. Defaults are the desk-scale configuration:
// 32x32 input, 2x2 patch embedding to 24 channels, two stages (16->8->4),
// window 4, heads (3, 6), dense blocks of two layers with growth 12.
struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t in_channels = 1;
  std::size_t patch_size = 2;
  std::size_t embed_dim = 24;
  std::size_t num_stages = 2;
  std::vector<std::size_t> stage_depths{2, 2};
  std::size_t window_size = 4;
  std::vector<std::size_t> num_heads{3, 6};
  std::vector<std::size_t> dense_layers{2, 2};
  std::vector<std::size_t> growth_rates{12, 12};
  std::size_t bottleneck_factor = 4;  // 1x1 width = factor * growth
  std::size_t num_classes = 4;
  std::size_t psnl_patch = 4;
  std::size_t iawca_reduction = 4;
  bool iawca_per_stage = true;

  // Ablation switches (GSNet-0..3 variants).
  bool use_guided = true;  // off: plain W-MSA on the Swin-branch map
  bool use_triple = true;  // off: head reads Stream1 only
  bool use_iawca = true;   // off: IAWCA removed from encoder and Stream2

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  std::size_t stage_channels(std::size_t stage) const { return embed_dim << (stage + 1); }
  std::size_t stage_side(std::size_t stage) const { return image_size / patch_size >> (stage + 1); }
  std::size_t final_channels() const { return stage_channels(num_stages - 1); }
  std::size_t final_side() const { return stage_side(num_stages - 1); }
  std::size_t head_width() const { return use_triple ? 2 * final_channels() : final_channels(); }
  DenseBlockConfig dense_config(std::size_t stage) const;
  AttentionConfig attention_config(std::size_t stage) const;
};

// One encoder level. The Swin branch (patch merging + blocks) and the dense
// branch (dense block + stride-2 conv) run in parallel on the same input,
// are aligned by 1x1 convs to the stage width, concatenated, merged by a
// second dense block, projected back to the stage width, layer-normed over
// channels and gated by IAWCA.
struct EncoderStageParams {
  PatchMergingParams merging;
  std::vector<SwinBlockParams> blocks;
  DenseBlockParams dense;
  Conv2dParams downsample;   // 3x3, stride 2, keeps channels
  Conv2dParams align_swin;   // 1x1 -> stage width
  Conv2dParams align_dense;  // 1x1 -> stage width
  DenseBlockParams merge;
  Conv2dParams fuse;         // 1x1 -> stage width
  LayerNormParams norm;      // over channels, before IAWCA
  std::optional<IawcaParams> iawca;
};

struct GsnetModel {
  ModelConfig config;
  Conv2dParams patch_embed;
  std::vector<EncoderStageParams> stages;
  LayerNormParams guided_norm_s;  // pre-norm on the Swin-branch map
  WindowAttentionParams guided;
  std::optional<IawcaParams> stream2_iawca;
  std::optional<PsnlParams> stream2_psnl;
  std::optional<ResidualBlockParams> stream3;
  LayerNormParams head_norm;
  LinearParams classifier;

  // Every trainable tensor exactly once, in registration order.
  ParamList parameters() const;
};

GsnetModel build_model(const ModelConfig& cfg, std::uint64_t seed);
std::size_t parameter_count(const GsnetModel& model);

struct EncoderOutput {
  Tensor feat_e;  // fused map, [B, C, S, S]
  Tensor feat_s;  // last Swin-branch map before fusion, [B, S, S, C]
};

struct ForwardTrace {
  Tensor feat_e;          // [B,C,S,S]
  Tensor feat_s;          // [B,S,S,C]
  Tensor guided;          // Stream1, [B,C,S,S]
  Tensor guided_weights;  // [B*windows, heads, L, L]
  Tensor merged;          // head input before pooling
};

// Single encoder level on an NCHW input, exposed for tests.
struct StageOutput {
  Tensor fused;  // [B, C_s, S/2, S/2]
  Tensor swin;   // [B, S/2, S/2, C_s]
};
StageOutput encoder_stage(const GsnetModel& model, std::size_t stage, const Tensor& x);

EncoderOutput encoder_forward(const GsnetModel& model, const Tensor& x);

// Stream1 (g) times Stream2 = psnl(iawca(feat_e)), concatenated with
// Stream3 = residual(feat_e) on channels. g and feat_e are [B,C,S,S].
Tensor triple_stream_merge(const GsnetModel& model, const Tensor& g, const Tensor& feat_e);

// [B,1,H,W] -> logits [B, num_classes].
Tensor forward(const GsnetModel& model, const Tensor& x, ForwardTrace* trace = nullptr);

// NCHW <-> NHWC helpers.
Tensor to_nhwc(const Tensor& x);
Tensor to_nchw(const Tensor& x);

}  // namespace gsnet
