#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "gsnet/layers.hpp"

namespace gsnet {

struct AttentionConfig {
  std::size_t dim = 0;
  std::size_t num_heads = 1;
  std::size_t window_size = 1;

  std::size_t head_dim() const { return dim / num_heads; }
  std::size_t tokens_per_window() const { return window_size * window_size; }
  // Throws DimensionError when dim is not a multiple of num_heads.
  void validate() const;
};

// Learnable per-head bias indexed by the relative offset of two tokens inside
// an MxM window. The table starts at zero.
struct RelPosBias {
  std::size_t window = 0;
  std::size_t heads = 0;
  Tensor table;  // [(2M-1)^2, heads]
  // Relative-offset index for every (query, key) pair, [M^2 * M^2], values in [0, (2M-1)^2).
  std::shared_ptr<const std::vector<std::size_t>> index;

  static RelPosBias create(std::size_t window, std::size_t heads);
  // Bias laid out [heads, M^2, M^2].
  Tensor gathered() const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Additive attention mask for shifted windows: 0 within a region, -1e9 across.
struct ShiftMask {
  std::size_t num_windows = 0;
  std::size_t tokens = 0;
  Tensor mask;  // [num_windows, M^2, M^2]
};

inline constexpr double kMaskedLogit = -1e9;

// [B,H,W,C] -> [B*(H/M)*(W/M), M*M, C], windows in raster order.
Tensor window_partition(const Tensor& x, std::size_t window);
// Inverse of window_partition.
Tensor window_reverse(const Tensor& windows, std::size_t window, std::size_t batch, std::size_t height,
                      std::size_t width);

// Torus roll of a [B,H,W,C] map by (-shift, -shift): out(i,j) = x(i+shift, j+shift).
// A negative shift undoes a positive one.
Tensor cyclic_shift(const Tensor& x, std::ptrdiff_t shift);

ShiftMask build_shift_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift);

struct AttentionResult {
  Tensor output;   // [N, L, D]
  Tensor weights;  // [N, heads, L, L], post-softmax
};

// Per head: softmax(q_h k_h^T / sqrt(d_k) + B_h + mask) v_h, heads concatenated
// and passed through out_proj. q, k, v are [N, L, D] with N a multiple of the
// mask's window count.
AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const RelPosBias& bias,
                                     const ShiftMask* mask, const LinearParams& out_proj,
                                     const AttentionConfig& cfg);

struct WindowAttentionParams {
  LinearParams query;
  LinearParams key;  // no bias
  LinearParams value;
  LinearParams out;
  RelPosBias bias;

  static WindowAttentionParams init(const AttentionConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// W-MSA (shift 0) or SW-MSA (shift > 0) over a [B,H,W,C] map.
Tensor window_attention(const Tensor& x, std::size_t shift, const WindowAttentionParams& params,
                        const AttentionConfig& cfg, Tensor* weights = nullptr);

struct SwinBlockParams {
  LayerNormParams norm1;
  WindowAttentionParams attn;
  LayerNormParams norm2;
  LinearParams fc1;  // C -> 4C
  LinearParams fc2;  // 4C -> C

  static SwinBlockParams init(const AttentionConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

inline constexpr std::size_t kMlpRatio = 4;

// Pre-norm block: x + attn(LN(x)), then + MLP(LN(.)) with a ReLU MLP.
Tensor swin_block(const Tensor& x, std::size_t shift, const AttentionConfig& cfg, const SwinBlockParams& params);

struct PatchMergingParams {
  LayerNormParams norm;   // over 4C
  LinearParams reduction; // 4C -> 2C, no bias

  static PatchMergingParams init(std::size_t channels, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

// Gathers each 2x2 neighbourhood [B,H,W,C] -> [B,H/2,W/2,4C] in the order
// (0,0), (1,0), (0,1), (1,1) (row, col offsets).
Tensor gather_2x2(const Tensor& x);
// [B,H,W,C] -> [B,H/2,W/2,2C].
Tensor patch_merging(const Tensor& x, const PatchMergingParams& params);

// Cross-attention inside MxM windows: queries from stream_s, keys and values
// from stream_e. Both are [B,H,W,C].
Tensor guided_self_attention(const Tensor& stream_s, const Tensor& stream_e, const WindowAttentionParams& params,
                             const AttentionConfig& cfg, Tensor* weights = nullptr);

}  // namespace gsnet
