#pragma once

#include <cstddef>
#include <vector>

#include "gsnet/layers.hpp"

namespace gsnet {

struct DenseBlockConfig {
  std::size_t num_layers = 0;
  std::size_t growth_rate = 12;
  std::size_t bottleneck_width = 48;

  std::size_t out_channels(std::size_t in_channels) const { return in_channels + num_layers * growth_rate; }
};

// relu -> 1x1 conv -> relu -> 3x3 conv (pad 1); no biases.
struct DenseLayerParams {
  Conv2dParams bottleneck;
  Conv2dParams conv;

  static DenseLayerParams init(std::size_t in_channels, const DenseBlockConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// [B,C,H,W] -> [B,C+k,H,W]: the input concatenated with the new features.
Tensor dense_layer(const Tensor& x, const DenseLayerParams& params);

struct DenseBlockParams {
  std::vector<DenseLayerParams> layers;

  static DenseBlockParams init(std::size_t in_channels, const DenseBlockConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

Tensor dense_block(const Tensor& x, const DenseBlockConfig& cfg, const DenseBlockParams& params);

// x + conv3x3(relu(conv3x3(x))), both convs with bias.
struct ResidualBlockParams {
  Conv2dParams conv1;
  Conv2dParams conv2;

  static ResidualBlockParams init(std::size_t channels, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

Tensor residual_block(const Tensor& x, const ResidualBlockParams& params);

// Embedded-Gaussian non-local block applied independently inside each
// patch x patch tile: x + out(softmax(theta^T phi) g).
struct PsnlParams {
  Conv2dParams theta;  // C -> C/2, 1x1, no bias
  Conv2dParams phi;
  Conv2dParams g;
  Conv2dParams out;    // C/2 -> C, 1x1, bias

  static std::size_t inner_channels(std::size_t channels) { return channels / 2 == 0 ? 1 : channels / 2; }
  static PsnlParams init(std::size_t channels, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

Tensor psnl(const Tensor& x, std::size_t patch, const PsnlParams& params);

// [B,C,H,W] -> [B*(H/P)*(W/P), P*P, C] and back.
Tensor patch_tokens(const Tensor& x, std::size_t patch);
Tensor patch_untokens(const Tensor& tokens, std::size_t patch, std::size_t batch, std::size_t height,
                      std::size_t width);

// Channel attention gated by a learned spatial softmax pooling:
//   Y = softmax_{HW}(conv1x1(x)), s_c = sum_p x_c(p) Y(p),
//   F = sigmoid(W2 relu(W1 s)), out = x * F (per channel).
struct IawcaParams {
  std::size_t reduction = 4;
  Conv2dParams weight_conv;  // C -> 1, 1x1, no bias
  LinearParams fc1;          // C -> C/r
  LinearParams fc2;          // C/r -> C

  static IawcaParams init(std::size_t channels, std::size_t reduction, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct IawcaTrace {
  Tensor spatial_weights;  // [B, H*W], softmax-normalised Y
  Tensor pooled;           // [B, C]
  Tensor channel_scale;    // [B, C], F
};

Tensor iawca(const Tensor& x, const IawcaParams& params, IawcaTrace* trace = nullptr);

}  // namespace gsnet
