#include "more/losses.hpp"

#include "more/errors.hpp"

namespace more {

Var cls_loss(Var class_logits, const std::vector<int>& labels) {
  std::vector<double> targets(labels.begin(), labels.end());
  return multilabel_soft_margin(class_logits, targets);
}

Var mct_loss(Var q) {
  const std::size_t c = q.value().rows();
  Tape& tape = *q.tape;
  if (c < 2) return tape.constant(Tensor::scalar(0.0));
  Var acc = tape.constant(Tensor::scalar(0.0));
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i + 1; j < c; ++j) {
      acc = add(acc, leaky_relu(cosine(gather_rows(q, {i}), gather_rows(q, {j})), 0.0));
      ++pairs;
    }
  return scale(acc, 1.0 / static_cast<double>(pairs));
}

ParamSet init_decoder_params(std::size_t embed_dim, std::size_t num_classes,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet p;
  p.add("dec.w1", truncated_normal_tensor(rng, {embed_dim, embed_dim}, 0.02));
  p.add("dec.b1", Tensor(Shape{embed_dim}));
  p.add("dec.w2", truncated_normal_tensor(rng, {embed_dim, num_classes + 1}, 0.02));
  p.add("dec.b2", Tensor(Shape{num_classes + 1}));
  return p;
}

Var decode(Var patch_tokens, std::size_t num_classes, const ParamVars& pv) {
  if (pv.get("dec.w1").value().rows() != patch_tokens.value().cols())
    throw ShapeError("decode: embedding width mismatch");
  Var h = gelu(add_rowvec(matmul(patch_tokens, pv.get("dec.w1")), pv.get("dec.b1")));
  Var logits = add_rowvec(matmul(h, pv.get("dec.w2")), pv.get("dec.b2"));
  if (logits.value().cols() != num_classes + 1)
    throw ShapeError("decode: logit width mismatch");
  return logits;
}

Var seg_loss(Var logits, const std::vector<int>& pseudo) {
  std::vector<std::size_t> labels(pseudo.size());
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    if (pseudo[i] < 0) throw ValueError("seg_loss: negative pseudo label");
    labels[i] = static_cast<std::size_t>(pseudo[i]);
  }
  return softmax_cross_entropy(logits, labels);
}

Var total_loss(Var l_cls, Var l_mct, Var l_cre, Var l_ure, Var l_seg,
               const LossWeights& w) {
  Var more_part = add(add(l_cls, l_mct), add(scale(l_cre, w.alpha), scale(l_ure, w.beta)));
  return add(more_part, scale(l_seg, w.gamma));
}

ParamSet init_classifier_params(std::size_t embed_dim, std::size_t num_classes,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet p;
  p.add("cls.w", truncated_normal_tensor(rng, {embed_dim, num_classes}, 0.02));
  return p;
}

Var classification_logits(Var patch_tokens, const ParamVars& pv) {
  return mean_rows(matmul(patch_tokens, pv.get("cls.w")));
}

}  // namespace more
