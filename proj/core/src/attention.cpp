#include "gsnet/attention.hpp"

#include <cmath>
#include <string>

#include "gsnet/error.hpp"

namespace gsnet {

namespace {

using Index = std::vector<std::size_t>;

void require_nhwc(const Tensor& x, const char* op) {
  if (x.rank() != 4) throw DimensionError(std::string(op) + ": expected [B,H,W,C], got " + shape_to_string(x.shape()));
}

void require_divisible(std::size_t height, std::size_t width, std::size_t window, const char* op) {
  if (window == 0 || height % window != 0 || width % window != 0) {
    throw DimensionError(std::string(op) + ": window " + std::to_string(window) + " does not divide " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
}

// Splits heads: [N,L,D] -> [N*h, L, dk].
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t n = x.dim(0), l = x.dim(1), d = x.dim(2);
  const std::size_t dk = d / heads;
  return reshape(permute(reshape(x, {n, l, heads, dk}), {0, 2, 1, 3}), {n * heads, l, dk});
}

Tensor merge_heads(const Tensor& x, std::size_t n, std::size_t heads) {
  const std::size_t l = x.dim(1), dk = x.dim(2);
  return reshape(permute(reshape(x, {n, heads, l, dk}), {0, 2, 1, 3}), {n, l, heads * dk});
}

}  // namespace

void AttentionConfig::validate() const {
  if (dim == 0 || num_heads == 0 || window_size == 0) throw DimensionError("attention config has a zero extent");
  if (dim % num_heads != 0) {
    throw DimensionError("attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(num_heads) +
                         " heads");
  }
}

RelPosBias RelPosBias::create(std::size_t window, std::size_t heads) {
  const std::size_t l = window * window;
  const std::size_t side = 2 * window - 1;
  auto rel = std::make_shared<Index>(l * l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      const std::size_t dy = i / window + window - 1 - j / window;
      const std::size_t dx = i % window + window - 1 - j % window;
      (*rel)[i * l + j] = dy * side + dx;
    }
  }
  return {window, heads, Tensor::zeros({side * side, heads}, true), rel};
}

Tensor RelPosBias::gathered() const {
  const std::size_t l = window * window;
  auto idx = std::make_shared<Index>(heads * l * l);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < l * l; ++p) (*idx)[h * l * l + p] = (*index)[p] * heads + h;
  }
  return gather(table, std::move(idx), {heads, l, l});
}

void RelPosBias::collect(const std::string& prefix, ParamList& out) const { out.emplace_back(prefix + ".table", table); }

Tensor window_partition(const Tensor& x, std::size_t window) {
  require_nhwc(x, "window_partition");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  require_divisible(h, w, window, "window_partition");
  const std::size_t wy = h / window, wx = w / window, l = window * window;
  auto idx = std::make_shared<Index>(x.size());
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < wy; ++y)
      for (std::size_t xw = 0; xw < wx; ++xw)
        for (std::size_t ty = 0; ty < window; ++ty)
          for (std::size_t tx = 0; tx < window; ++tx) {
            const std::size_t src = ((bi * h + y * window + ty) * w + xw * window + tx) * c;
            for (std::size_t ch = 0; ch < c; ++ch) (*idx)[o++] = src + ch;
          }
  return gather(x, std::move(idx), {b * wy * wx, l, c});
}

Tensor window_reverse(const Tensor& windows, std::size_t window, std::size_t batch, std::size_t height,
                      std::size_t width) {
  require_divisible(height, width, window, "window_reverse");
  const std::size_t wy = height / window, wx = width / window, l = window * window;
  if (windows.rank() != 3 || windows.dim(0) != batch * wy * wx || windows.dim(1) != l) {
    throw DimensionError("window_reverse: " + shape_to_string(windows.shape()) + " does not tile " +
                         std::to_string(batch) + "x" + std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t c = windows.dim(2);
  auto idx = std::make_shared<Index>(windows.size());
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t xx = 0; xx < width; ++xx) {
        const std::size_t win = (bi * wy + y / window) * wx + xx / window;
        const std::size_t tok = (y % window) * window + xx % window;
        for (std::size_t ch = 0; ch < c; ++ch) (*idx)[o++] = (win * l + tok) * c + ch;
      }
  return gather(windows, std::move(idx), {batch, height, width, c});
}

Tensor cyclic_shift(const Tensor& x, std::ptrdiff_t shift) {
  require_nhwc(x, "cyclic_shift");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const auto sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);
  const std::size_t dy = static_cast<std::size_t>(((shift % sh) + sh) % sh);
  const std::size_t dx = static_cast<std::size_t>(((shift % sw) + sw) % sw);
  if (dy == 0 && dx == 0) return reshape(x, x.shape());
  auto idx = std::make_shared<Index>(x.size());
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const std::size_t src = ((bi * h + (y + dy) % h) * w + (xx + dx) % w) * c;
        for (std::size_t ch = 0; ch < c; ++ch) (*idx)[o++] = src + ch;
      }
  return gather(x, std::move(idx), x.shape());
}

ShiftMask build_shift_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift) {
  require_divisible(height, width, window, "build_shift_mask");
  if (shift >= window) {
    throw InputError("build_shift_mask: shift " + std::to_string(shift) + " not in [0, " + std::to_string(window) + ")");
  }
  const std::size_t wy = height / window, wx = width / window, l = window * window;
  ShiftMask m{wy * wx, l, Tensor::zeros({wy * wx, l, l})};
  if (shift == 0) return m;
  // Region labels in the rolled frame: the last `shift` rows/cols hold wrapped content.
  auto region = [&](std::size_t pos, std::size_t extent) -> std::size_t {
    if (pos < extent - window) return 0;
    if (pos < extent - shift) return 1;
    return 2;
  };
  std::vector<std::size_t> label(height * width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t xx = 0; xx < width; ++xx) label[y * width + xx] = region(y, height) * 3 + region(xx, width);
  auto data = m.mask.data();
  for (std::size_t win = 0; win < wy * wx; ++win) {
    const std::size_t oy = (win / wx) * window, ox = (win % wx) * window;
    for (std::size_t i = 0; i < l; ++i) {
      const std::size_t li = label[(oy + i / window) * width + ox + i % window];
      for (std::size_t j = 0; j < l; ++j) {
        const std::size_t lj = label[(oy + j / window) * width + ox + j % window];
        data[(win * l + i) * l + j] = li == lj ? 0.0 : kMaskedLogit;
      }
    }
  }
  return m;
}

AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const RelPosBias& bias,
                                     const ShiftMask* mask, const LinearParams& out_proj,
                                     const AttentionConfig& cfg) {
  cfg.validate();
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("multi_head_attention: q/k/v shapes " + shape_to_string(q.shape()) + ", " +
                         shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()) + " differ");
  }
  const std::size_t n = q.dim(0), l = q.dim(1), d = q.dim(2);
  if (d != cfg.dim) {
    throw DimensionError("multi_head_attention: token dim " + std::to_string(d) + " != config dim " +
                         std::to_string(cfg.dim));
  }
  if (l != bias.window * bias.window || bias.heads != cfg.num_heads) {
    throw DimensionError("multi_head_attention: " + std::to_string(l) + " tokens do not match bias window " +
                         std::to_string(bias.window) + " / heads " + std::to_string(bias.heads));
  }
  const std::size_t heads = cfg.num_heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

  Tensor scores = scale(bmm(split_heads(q, heads), split_heads(k, heads), true), inv_sqrt_dk);
  scores = add(reshape(scores, {n, heads, l, l}), bias.gathered());
  if (mask && mask->num_windows > 0) {
    const std::size_t nw = mask->num_windows;
    if (n % nw != 0 || mask->tokens != l) {
      throw DimensionError("multi_head_attention: mask for " + std::to_string(nw) + " windows of " +
                           std::to_string(mask->tokens) + " tokens does not fit " + shape_to_string(q.shape()));
    }
    scores = add(reshape(scores, {n / nw, nw, heads, l, l}), reshape(mask->mask, {nw, 1, l, l}));
    scores = reshape(scores, {n, heads, l, l});
  }
  Tensor weights = softmax(scores, 3);
  Tensor mixed = bmm(reshape(weights, {n * heads, l, l}), split_heads(v, heads));
  return {out_proj(merge_heads(mixed, n, heads)), weights};
}

WindowAttentionParams WindowAttentionParams::init(const AttentionConfig& cfg, Rng& rng) {
  cfg.validate();
  // The key projection has no bias: q.b_k is constant along a softmax row and
  // would never receive a gradient.
  WindowAttentionParams p{LinearParams::init(cfg.dim, cfg.dim, true, rng), LinearParams::init(cfg.dim, cfg.dim, false, rng),
                          LinearParams::init(cfg.dim, cfg.dim, true, rng), LinearParams::init(cfg.dim, cfg.dim, true, rng),
                          RelPosBias::create(cfg.window_size, cfg.num_heads)};
  return p;
}

void WindowAttentionParams::collect(const std::string& prefix, ParamList& list) const {
  query.collect(prefix + ".query", list);
  key.collect(prefix + ".key", list);
  value.collect(prefix + ".value", list);
  out.collect(prefix + ".out", list);
  bias.collect(prefix + ".relpos", list);
}

namespace {

Tensor attend_windows(const Tensor& query_src, const Tensor& kv_src, std::size_t batch, std::size_t height,
                      std::size_t width, const ShiftMask* mask, const WindowAttentionParams& params,
                      const AttentionConfig& cfg, Tensor* weights) {
  auto result = multi_head_attention(params.query(query_src), params.key(kv_src), params.value(kv_src), params.bias,
                                     mask, params.out, cfg);
  if (weights) *weights = result.weights;
  return window_reverse(result.output, cfg.window_size, batch, height, width);
}

}  // namespace

Tensor window_attention(const Tensor& x, std::size_t shift, const WindowAttentionParams& params,
                        const AttentionConfig& cfg, Tensor* weights) {
  require_nhwc(x, "window_attention");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2);
  require_divisible(h, w, cfg.window_size, "window_attention");
  if (x.dim(3) != cfg.dim) {
    throw DimensionError("window_attention: channels " + std::to_string(x.dim(3)) + " != config dim " +
                         std::to_string(cfg.dim));
  }
  if (shift == 0) {
    Tensor windows = window_partition(x, cfg.window_size);
    return attend_windows(windows, windows, b, h, w, nullptr, params, cfg, weights);
  }
  const ShiftMask mask = build_shift_mask(h, w, cfg.window_size, shift);
  Tensor windows = window_partition(cyclic_shift(x, static_cast<std::ptrdiff_t>(shift)), cfg.window_size);
  Tensor out = attend_windows(windows, windows, b, h, w, &mask, params, cfg, weights);
  return cyclic_shift(out, -static_cast<std::ptrdiff_t>(shift));
}

SwinBlockParams SwinBlockParams::init(const AttentionConfig& cfg, Rng& rng) {
  SwinBlockParams p{LayerNormParams::init(cfg.dim), WindowAttentionParams::init(cfg, rng), LayerNormParams::init(cfg.dim),
                    LinearParams::init(cfg.dim, kMlpRatio * cfg.dim, true, rng),
                    LinearParams::init(kMlpRatio * cfg.dim, cfg.dim, true, rng)};
  return p;
}

void SwinBlockParams::collect(const std::string& prefix, ParamList& list) const {
  norm1.collect(prefix + ".norm1", list);
  attn.collect(prefix + ".attn", list);
  norm2.collect(prefix + ".norm2", list);
  fc1.collect(prefix + ".fc1", list);
  fc2.collect(prefix + ".fc2", list);
}

Tensor swin_block(const Tensor& x, std::size_t shift, const AttentionConfig& cfg, const SwinBlockParams& params) {
  Tensor y = add(x, window_attention(params.norm1(x), shift, params.attn, cfg));
  return add(y, params.fc2(relu(params.fc1(params.norm2(y)))));
}

PatchMergingParams PatchMergingParams::init(std::size_t channels, Rng& rng) {
  return {LayerNormParams::init(4 * channels), LinearParams::init(4 * channels, 2 * channels, false, rng)};
}

void PatchMergingParams::collect(const std::string& prefix, ParamList& list) const {
  norm.collect(prefix + ".norm", list);
  reduction.collect(prefix + ".reduction", list);
}

Tensor gather_2x2(const Tensor& x) {
  require_nhwc(x, "patch_merging");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("patch_merging: odd spatial side in " + shape_to_string(x.shape()));
  }
  static constexpr std::size_t kOffsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  auto idx = std::make_shared<Index>(x.size());
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx)
        for (const auto& off : kOffsets) {
          const std::size_t src = ((bi * h + 2 * y + off[0]) * w + 2 * xx + off[1]) * c;
          for (std::size_t ch = 0; ch < c; ++ch) (*idx)[o++] = src + ch;
        }
  return gather(x, std::move(idx), {b, h / 2, w / 2, 4 * c});
}

Tensor patch_merging(const Tensor& x, const PatchMergingParams& params) {
  return params.reduction(params.norm(gather_2x2(x)));
}

Tensor guided_self_attention(const Tensor& stream_s, const Tensor& stream_e, const WindowAttentionParams& params,
                             const AttentionConfig& cfg, Tensor* weights) {
  require_nhwc(stream_s, "guided_self_attention");
  if (stream_s.shape() != stream_e.shape()) {
    throw DimensionError("guided_self_attention: stream shapes " + shape_to_string(stream_s.shape()) + " and " +
                         shape_to_string(stream_e.shape()) + " differ");
  }
  const std::size_t b = stream_s.dim(0), h = stream_s.dim(1), w = stream_s.dim(2);
  require_divisible(h, w, cfg.window_size, "guided_self_attention");
  if (stream_s.dim(3) != cfg.dim) {
    throw DimensionError("guided_self_attention: channels " + std::to_string(stream_s.dim(3)) + " != config dim " +
                         std::to_string(cfg.dim));
  }
  return attend_windows(window_partition(stream_s, cfg.window_size), window_partition(stream_e, cfg.window_size), b, h,
                        w, nullptr, params, cfg, weights);
}

}  // namespace gsnet
