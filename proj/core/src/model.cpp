#include "gsnet/model.hpp"

#include <string>

#include "gsnet/error.hpp"

namespace gsnet {

namespace {

std::string stage_name(std::size_t s) { return "stage" + std::to_string(s); }

// Odd blocks shift by M/2, except when one window already covers the map:
// there every token would be masked down to itself.
std::size_t block_shift(std::size_t block, std::size_t window, std::size_t side) {
  return block % 2 == 1 && side > window ? window / 2 : 0;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (num_classes < 2) fail("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (in_channels == 0 || embed_dim == 0 || patch_size == 0 || window_size == 0) {
    fail("in_channels, embed_dim, patch_size and window_size must be positive");
  }
  if (num_stages == 0) fail("num_stages must be >= 1");
  auto check_len = [&](const std::vector<std::size_t>& v, const char* name) {
    if (v.size() != num_stages) {
      fail(std::string(name) + " has " + std::to_string(v.size()) + " entries for " + std::to_string(num_stages) +
           " stages");
    }
  };
  check_len(stage_depths, "stage_depths");
  check_len(num_heads, "num_heads");
  check_len(dense_layers, "dense_layers");
  check_len(growth_rates, "growth_rates");
  if (image_size % patch_size != 0) {
    fail("patch_size " + std::to_string(patch_size) + " does not divide image_size " + std::to_string(image_size));
  }
  std::size_t side = image_size / patch_size;
  for (std::size_t s = 0; s < num_stages; ++s) {
    if (side % 2 != 0) fail("stage " + std::to_string(s) + " input side " + std::to_string(side) + " is odd");
    side /= 2;
    if (side % window_size != 0) {
      fail("window_size " + std::to_string(window_size) + " does not divide stage " + std::to_string(s) + " side " +
           std::to_string(side));
    }
    if (stage_depths[s] == 0) fail("stage_depths[" + std::to_string(s) + "] must be >= 1");
    if (growth_rates[s] == 0 || bottleneck_factor == 0) fail("growth rate and bottleneck factor must be positive");
    if (num_heads[s] == 0 || stage_channels(s) % num_heads[s] != 0) {
      fail("num_heads[" + std::to_string(s) + "]=" + std::to_string(num_heads[s]) + " does not divide stage width " +
           std::to_string(stage_channels(s)));
    }
    if (use_iawca && iawca_per_stage && (iawca_reduction == 0 || stage_channels(s) % iawca_reduction != 0)) {
      fail("iawca_reduction " + std::to_string(iawca_reduction) + " does not divide stage width " +
           std::to_string(stage_channels(s)));
    }
  }
  if (use_triple) {
    if (psnl_patch == 0 || side % psnl_patch != 0) {
      fail("psnl_patch " + std::to_string(psnl_patch) + " does not divide final side " + std::to_string(side));
    }
    if (use_iawca && (iawca_reduction == 0 || final_channels() % iawca_reduction != 0)) {
      fail("iawca_reduction " + std::to_string(iawca_reduction) + " does not divide final width " +
           std::to_string(final_channels()));
    }
  }
}

DenseBlockConfig ModelConfig::dense_config(std::size_t stage) const {
  return {dense_layers.at(stage), growth_rates.at(stage), bottleneck_factor * growth_rates.at(stage)};
}

AttentionConfig ModelConfig::attention_config(std::size_t stage) const {
  return {stage_channels(stage), num_heads.at(stage), window_size};
}

ParamList GsnetModel::parameters() const {
  ParamList out;
  patch_embed.collect("patch_embed", out);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& st = stages[s];
    const std::string p = stage_name(s);
    st.merging.collect(p + ".merging", out);
    for (std::size_t b = 0; b < st.blocks.size(); ++b) st.blocks[b].collect(p + ".block" + std::to_string(b), out);
    st.dense.collect(p + ".dense", out);
    st.downsample.collect(p + ".downsample", out);
    st.align_swin.collect(p + ".align_swin", out);
    st.align_dense.collect(p + ".align_dense", out);
    st.merge.collect(p + ".merge", out);
    st.fuse.collect(p + ".fuse", out);
    st.norm.collect(p + ".norm", out);
    if (st.iawca) st.iawca->collect(p + ".iawca", out);
  }
  guided_norm_s.collect("guided.norm_s", out);
  guided.collect("guided", out);
  if (stream2_iawca) stream2_iawca->collect("stream2.iawca", out);
  if (stream2_psnl) stream2_psnl->collect("stream2.psnl", out);
  if (stream3) stream3->collect("stream3.residual", out);
  head_norm.collect("head.norm", out);
  classifier.collect("head.classifier", out);
  return out;
}

GsnetModel build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  GsnetModel m;
  m.config = cfg;
  m.patch_embed = Conv2dParams::init(cfg.in_channels, cfg.embed_dim, cfg.patch_size, cfg.patch_size, 0, true, rng);
  std::size_t cin = cfg.embed_dim;
  for (std::size_t s = 0; s < cfg.num_stages; ++s) {
    const std::size_t cs = cfg.stage_channels(s);
    const auto dense_cfg = cfg.dense_config(s);
    const std::size_t cd = dense_cfg.out_channels(cin);
    EncoderStageParams st;
    st.merging = PatchMergingParams::init(cin, rng);
    for (std::size_t b = 0; b < cfg.stage_depths[s]; ++b) st.blocks.push_back(SwinBlockParams::init(cfg.attention_config(s), rng));
    st.dense = DenseBlockParams::init(cin, dense_cfg, rng);
    st.downsample = Conv2dParams::init(cd, cd, 3, 2, 1, true, rng);
    st.align_swin = Conv2dParams::init(cs, cs, 1, 1, 0, true, rng);
    st.align_dense = Conv2dParams::init(cd, cs, 1, 1, 0, true, rng);
    st.merge = DenseBlockParams::init(2 * cs, dense_cfg, rng);
    st.fuse = Conv2dParams::init(dense_cfg.out_channels(2 * cs), cs, 1, 1, 0, true, rng);
    st.norm = LayerNormParams::init(cs);
    if (cfg.use_iawca && cfg.iawca_per_stage) st.iawca = IawcaParams::init(cs, cfg.iawca_reduction, rng);
    m.stages.push_back(std::move(st));
    cin = cs;
  }
  const std::size_t c = cfg.final_channels();
  m.guided_norm_s = LayerNormParams::init(c);
  m.guided = WindowAttentionParams::init(cfg.attention_config(cfg.num_stages - 1), rng);
  if (cfg.use_triple) {
    if (cfg.use_iawca) m.stream2_iawca = IawcaParams::init(c, cfg.iawca_reduction, rng);
    m.stream2_psnl = PsnlParams::init(c, rng);
    m.stream3 = ResidualBlockParams::init(c, rng);
  }
  m.head_norm = LayerNormParams::init(cfg.head_width());
  m.classifier = LinearParams::init(cfg.head_width(), cfg.num_classes, true, rng);
  return m;
}

std::size_t parameter_count(const GsnetModel& model) {
  std::size_t n = 0;
  for (const auto& [name, t] : model.parameters()) n += t.size();
  return n;
}

Tensor to_nhwc(const Tensor& x) { return permute(x, {0, 2, 3, 1}); }
Tensor to_nchw(const Tensor& x) { return permute(x, {0, 3, 1, 2}); }

StageOutput encoder_stage(const GsnetModel& model, std::size_t stage, const Tensor& x) {
  const auto& cfg = model.config;
  const auto& st = model.stages.at(stage);
  const auto attn_cfg = cfg.attention_config(stage);

  Tensor swin = patch_merging(to_nhwc(x), st.merging);
  for (std::size_t b = 0; b < st.blocks.size(); ++b) {
    swin = swin_block(swin, block_shift(b, cfg.window_size, cfg.stage_side(stage)), attn_cfg, st.blocks[b]);
  }
  Tensor aligned_swin = st.align_swin(to_nchw(swin));
  Tensor aligned_dense = st.align_dense(st.downsample(dense_block(x, cfg.dense_config(stage), st.dense)));
  Tensor fused = st.fuse(dense_block(concat({aligned_swin, aligned_dense}, 1), cfg.dense_config(stage), st.merge));
  fused = to_nchw(st.norm(to_nhwc(fused)));
  if (st.iawca) fused = iawca(fused, *st.iawca);
  return {fused, swin};
}

EncoderOutput encoder_forward(const GsnetModel& model, const Tensor& x) {
  const auto& cfg = model.config;
  if (x.rank() != 4 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.image_size || x.dim(3) != cfg.image_size) {
    throw DimensionError("encoder: expected [B," + std::to_string(cfg.in_channels) + "," +
                         std::to_string(cfg.image_size) + "," + std::to_string(cfg.image_size) + "], got " +
                         shape_to_string(x.shape()));
  }
  Tensor h = model.patch_embed(x);
  Tensor swin;
  for (std::size_t s = 0; s < cfg.num_stages; ++s) {
    auto out = encoder_stage(model, s, h);
    h = out.fused;
    swin = out.swin;
  }
  return {h, swin};
}

Tensor triple_stream_merge(const GsnetModel& model, const Tensor& g, const Tensor& feat_e) {
  if (!model.stream2_psnl || !model.stream3) throw StateError("triple_stream_merge: model built without triple streams");
  if (g.shape() != feat_e.shape()) {
    throw DimensionError("triple_stream_merge: Stream1 " + shape_to_string(g.shape()) + " and encoder map " +
                         shape_to_string(feat_e.shape()) + " differ");
  }
  Tensor s2 = model.stream2_iawca ? iawca(feat_e, *model.stream2_iawca) : feat_e;
  s2 = psnl(s2, model.config.psnl_patch, *model.stream2_psnl);
  Tensor s3 = residual_block(feat_e, *model.stream3);
  return concat({mul(g, s2), s3}, 1);
}

Tensor forward(const GsnetModel& model, const Tensor& x, ForwardTrace* trace) {
  const auto& cfg = model.config;
  auto enc = encoder_forward(model, x);
  const auto attn_cfg = cfg.attention_config(cfg.num_stages - 1);
  Tensor weights;
  Tensor stream_s = model.guided_norm_s(enc.feat_s);
  Tensor g_nhwc = cfg.use_guided
                      ? guided_self_attention(stream_s, to_nhwc(enc.feat_e), model.guided, attn_cfg, &weights)
                      : window_attention(stream_s, 0, model.guided, attn_cfg, &weights);
  Tensor g = to_nchw(g_nhwc);
  Tensor merged = cfg.use_triple ? triple_stream_merge(model, g, enc.feat_e) : g;
  if (trace) *trace = {enc.feat_e, enc.feat_s, g, weights, merged};
  const std::size_t b = merged.dim(0), c = merged.dim(1), hw = merged.dim(2) * merged.dim(3);
  Tensor pooled = mean_last(reshape(merged, {b, c, hw}));
  return model.classifier(model.head_norm(pooled));
}

}  // namespace gsnet
