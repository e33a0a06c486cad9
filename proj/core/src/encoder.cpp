#include "more/encoder.hpp"

#include <cmath>

#include "more/errors.hpp"

namespace more {

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_size % patch_size != 0)
    throw ValueError("encoder config: image_size must be divisible by patch_size");
  if (num_heads == 0 || embed_dim % num_heads != 0)
    throw ValueError("encoder config: embed_dim must be divisible by num_heads");
  if (num_classes == 0) throw ValueError("encoder config: num_classes must be positive");
  if (embed_dim == 0) throw ValueError("encoder config: embed_dim must be positive");
}

ParamSet init_encoder_params(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg.embed_dim;
  ParamSet p;
  p.add("enc.patch_proj.w", truncated_normal_tensor(rng, {cfg.patch_dim(), d}, 0.02));
  p.add("enc.patch_proj.b", Tensor(Shape{d}));
  p.add("enc.pos_emb", truncated_normal_tensor(rng, {cfg.num_patches(), d}, 0.02));
  p.add("enc.cls_tokens", truncated_normal_tensor(rng, {cfg.num_classes, d}, 0.02));
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const std::string pre = "enc.blk" + std::to_string(b) + ".";
    p.add(pre + "ln1.g", Tensor(Shape{d}, 1.0));
    p.add(pre + "ln1.b", Tensor(Shape{d}));
    p.add(pre + "attn.wq", truncated_normal_tensor(rng, {d, d}, 0.02));
    p.add(pre + "attn.bq", Tensor(Shape{d}));
    p.add(pre + "attn.wk", truncated_normal_tensor(rng, {d, d}, 0.02));
    p.add(pre + "attn.bk", Tensor(Shape{d}));
    p.add(pre + "attn.wv", truncated_normal_tensor(rng, {d, d}, 0.02));
    p.add(pre + "attn.bv", Tensor(Shape{d}));
    p.add(pre + "attn.wo", truncated_normal_tensor(rng, {d, d}, 0.02));
    p.add(pre + "attn.bo", Tensor(Shape{d}));
    p.add(pre + "ln2.g", Tensor(Shape{d}, 1.0));
    p.add(pre + "ln2.b", Tensor(Shape{d}));
    p.add(pre + "mlp.w1", truncated_normal_tensor(rng, {d, 4 * d}, 0.02));
    p.add(pre + "mlp.b1", Tensor(Shape{4 * d}));
    p.add(pre + "mlp.w2", truncated_normal_tensor(rng, {4 * d, d}, 0.02));
    p.add(pre + "mlp.b2", Tensor(Shape{d}));
  }
  return p;
}

std::vector<std::size_t> patchify_index_map(std::size_t image_size, std::size_t patch_size) {
  if (patch_size == 0 || image_size % patch_size != 0)
    throw ValueError("patchify: image size not divisible by patch size");
  const std::size_t g = image_size / patch_size;
  std::vector<std::size_t> map;
  map.reserve(g * g * 3 * patch_size * patch_size);
  for (std::size_t py = 0; py < g; ++py)
    for (std::size_t px = 0; px < g; ++px)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t dy = 0; dy < patch_size; ++dy)
          for (std::size_t dx = 0; dx < patch_size; ++dx) {
            const std::size_t y = py * patch_size + dy;
            const std::size_t x = px * patch_size + dx;
            map.push_back(c * image_size * image_size + y * image_size + x);
          }
  return map;
}

Var patchify(Var image, std::size_t image_size, std::size_t patch_size) {
  const Tensor& im = image.value();
  if (im.shape() != Shape{3, image_size, image_size})
    throw ShapeError("patchify: expected [3x" + std::to_string(image_size) + "x" +
                     std::to_string(image_size) + "], got " + shape_str(im.shape()));
  const std::size_t g = image_size / patch_size;
  auto map = patchify_index_map(image_size, patch_size);
  return permute_gather(image, map, Shape{g * g, 3 * patch_size * patch_size});
}

namespace {

Var attention(Var x, const EncoderConfig& cfg, const ParamVars& pv, const std::string& pre) {
  const std::size_t heads = cfg.num_heads;
  const std::size_t dh = cfg.embed_dim / heads;
  Var q = add_rowvec(matmul(x, pv.get(pre + "attn.wq")), pv.get(pre + "attn.bq"));
  Var k = add_rowvec(matmul(x, pv.get(pre + "attn.wk")), pv.get(pre + "attn.bk"));
  Var v = add_rowvec(matmul(x, pv.get(pre + "attn.wv")), pv.get(pre + "attn.bv"));
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    outs.push_back(matmul(softmax_rows(scores), vh));
  }
  Var merged = concat_cols(outs);
  return add_rowvec(matmul(merged, pv.get(pre + "attn.wo")), pv.get(pre + "attn.bo"));
}

Var mlp(Var x, const ParamVars& pv, const std::string& pre) {
  Var h = gelu(add_rowvec(matmul(x, pv.get(pre + "mlp.w1")), pv.get(pre + "mlp.b1")));
  return add_rowvec(matmul(h, pv.get(pre + "mlp.w2")), pv.get(pre + "mlp.b2"));
}

}  // namespace

TokenBundle encode(Var image, const EncoderConfig& cfg, const ParamVars& pv) {
  cfg.validate();
  if (!image.value().all_finite()) throw ValueError("encode: non-finite input image");
  Var patches = patchify(image, cfg.image_size, cfg.patch_size);
  Var embedded = add_rowvec(matmul(patches, pv.get("enc.patch_proj.w")), pv.get("enc.patch_proj.b"));
  Var with_pos = add(embedded, pv.get("enc.pos_emb"));
  // class tokens carry no positional embedding
  Var x = concat_rows({pv.get("enc.cls_tokens"), with_pos});
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const std::string pre = "enc.blk" + std::to_string(b) + ".";
    x = add(x, attention(layer_norm(x, pv.get(pre + "ln1.g"), pv.get(pre + "ln1.b")), cfg, pv, pre));
    x = add(x, mlp(layer_norm(x, pv.get(pre + "ln2.g"), pv.get(pre + "ln2.b")), pv, pre));
  }
  TokenBundle out;
  out.class_tokens = slice_rows(x, 0, cfg.num_classes);
  out.patch_tokens = slice_rows(x, cfg.num_classes, cfg.num_patches());
  out.n_h = cfg.grid();
  out.n_w = cfg.grid();
  return out;
}

}  // namespace more
