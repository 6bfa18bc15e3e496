#include "gsnet/conv_blocks.hpp"

#include <string>

#include "gsnet/error.hpp"

namespace gsnet {

namespace {
void require_nchw(const Tensor& x, const char* op) {
  if (x.rank() != 4) throw DimensionError(std::string(op) + ": expected [B,C,H,W], got " + shape_to_string(x.shape()));
}
}  // namespace

DenseLayerParams DenseLayerParams::init(std::size_t in_channels, const DenseBlockConfig& cfg, Rng& rng) {
  return {Conv2dParams::init(in_channels, cfg.bottleneck_width, 1, 1, 0, false, rng),
          Conv2dParams::init(cfg.bottleneck_width, cfg.growth_rate, 3, 1, 1, false, rng)};
}

void DenseLayerParams::collect(const std::string& prefix, ParamList& out) const {
  bottleneck.collect(prefix + ".bottleneck", out);
  conv.collect(prefix + ".conv", out);
}

Tensor dense_layer(const Tensor& x, const DenseLayerParams& params) {
  require_nchw(x, "dense_layer");
  Tensor fresh = params.conv(relu(params.bottleneck(relu(x))));
  return concat({x, fresh}, 1);
}

DenseBlockParams DenseBlockParams::init(std::size_t in_channels, const DenseBlockConfig& cfg, Rng& rng) {
  DenseBlockParams p;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    p.layers.push_back(DenseLayerParams::init(in_channels + l * cfg.growth_rate, cfg, rng));
  }
  return p;
}

void DenseBlockParams::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
}

Tensor dense_block(const Tensor& x, const DenseBlockConfig& cfg, const DenseBlockParams& params) {
  if (params.layers.size() != cfg.num_layers) {
    throw DimensionError("dense_block: config has " + std::to_string(cfg.num_layers) + " layers, params have " +
                         std::to_string(params.layers.size()));
  }
  Tensor y = x;
  for (const auto& layer : params.layers) y = dense_layer(y, layer);
  return y;
}

ResidualBlockParams ResidualBlockParams::init(std::size_t channels, Rng& rng) {
  return {Conv2dParams::init(channels, channels, 3, 1, 1, true, rng),
          Conv2dParams::init(channels, channels, 3, 1, 1, true, rng)};
}

void ResidualBlockParams::collect(const std::string& prefix, ParamList& out) const {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
}

Tensor residual_block(const Tensor& x, const ResidualBlockParams& params) {
  require_nchw(x, "residual_block");
  return add(x, params.conv2(relu(params.conv1(x))));
}

PsnlParams PsnlParams::init(std::size_t channels, Rng& rng) {
  const std::size_t inner = inner_channels(channels);
  return {Conv2dParams::init(channels, inner, 1, 1, 0, false, rng), Conv2dParams::init(channels, inner, 1, 1, 0, false, rng),
          Conv2dParams::init(channels, inner, 1, 1, 0, false, rng), Conv2dParams::init(inner, channels, 1, 1, 0, true, rng)};
}

void PsnlParams::collect(const std::string& prefix, ParamList& out) const {
  theta.collect(prefix + ".theta", out);
  phi.collect(prefix + ".phi", out);
  g.collect(prefix + ".g", out);
  this->out.collect(prefix + ".out", out);
}

Tensor patch_tokens(const Tensor& x, std::size_t patch) {
  require_nchw(x, "patch_tokens");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("psnl: patch " + std::to_string(patch) + " does not divide " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  const std::size_t py = h / patch, px = w / patch;
  auto idx = std::make_shared<std::vector<std::size_t>>(x.size());
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < py; ++y)
      for (std::size_t xx = 0; xx < px; ++xx)
        for (std::size_t ty = 0; ty < patch; ++ty)
          for (std::size_t tx = 0; tx < patch; ++tx)
            for (std::size_t ch = 0; ch < c; ++ch)
              (*idx)[o++] = ((bi * c + ch) * h + y * patch + ty) * w + xx * patch + tx;
  return gather(x, std::move(idx), {b * py * px, patch * patch, c});
}

Tensor patch_untokens(const Tensor& tokens, std::size_t patch, std::size_t batch, std::size_t height,
                      std::size_t width) {
  const std::size_t c = tokens.dim(2);
  const std::size_t py = height / patch, px = width / patch, l = patch * patch;
  auto idx = std::make_shared<std::vector<std::size_t>>(tokens.size());
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t xx = 0; xx < width; ++xx) {
          const std::size_t tile = (bi * py + y / patch) * px + xx / patch;
          const std::size_t tok = (y % patch) * patch + xx % patch;
          (*idx)[o++] = (tile * l + tok) * c + ch;
        }
  return gather(tokens, std::move(idx), {batch, c, height, width});
}

Tensor psnl(const Tensor& x, std::size_t patch, const PsnlParams& params) {
  require_nchw(x, "psnl");
  const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor theta = patch_tokens(params.theta(x), patch);
  Tensor phi = patch_tokens(params.phi(x), patch);
  Tensor g = patch_tokens(params.g(x), patch);
  Tensor affinity = softmax(bmm(theta, phi, true), 2);
  Tensor y = patch_untokens(bmm(affinity, g), patch, b, h, w);
  return add(x, params.out(y));
}

IawcaParams IawcaParams::init(std::size_t channels, std::size_t reduction, Rng& rng) {
  if (reduction == 0 || channels % reduction != 0) {
    throw DimensionError("iawca: reduction " + std::to_string(reduction) + " does not divide " +
                         std::to_string(channels) + " channels");
  }
  return {reduction, Conv2dParams::init(channels, 1, 1, 1, 0, false, rng),
          LinearParams::init(channels, channels / reduction, true, rng),
          LinearParams::init(channels / reduction, channels, true, rng)};
}

void IawcaParams::collect(const std::string& prefix, ParamList& out) const {
  weight_conv.collect(prefix + ".weight_conv", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Tensor iawca(const Tensor& x, const IawcaParams& params, IawcaTrace* trace) {
  require_nchw(x, "iawca");
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (params.reduction == 0 || c % params.reduction != 0) {
    throw DimensionError("iawca: reduction " + std::to_string(params.reduction) + " does not divide " +
                         std::to_string(c) + " channels");
  }
  Tensor weights = softmax(reshape(params.weight_conv(x), {b, hw}), 1);
  Tensor pooled = reshape(bmm(reshape(x, {b, c, hw}), reshape(weights, {b, hw, 1})), {b, c});
  Tensor scale_f = sigmoid(params.fc2(relu(params.fc1(pooled))));
  if (trace) *trace = {weights, pooled, scale_f};
  return mul(x, reshape(scale_f, {b, c, 1, 1}));
}

}  // namespace gsnet
