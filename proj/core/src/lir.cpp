#include "more/lir.hpp"

#include "more/errors.hpp"

namespace more {

RelationMaps split_relations(const ReliabilityMask& mask) {
  RelationMaps out;
  out.n_h = mask.n_h;
  out.n_w = mask.n_w;
  out.confident.resize(mask.labels.size(), 0);
  out.uncertain.resize(mask.labels.size(), 0);
  for (std::size_t p = 0; p < mask.labels.size(); ++p) {
    const int v = mask.labels[p];
    if (v == kUncertainLabel)
      out.uncertain[p] = 1;
    else
      out.confident[p] = v;
  }
  return out;
}

Var cre_loss(Var q, Var patch_tokens, const RelationMaps& maps,
             const std::vector<int>& present, double tau) {
  if (tau <= 0.0) throw ValueError("cre_loss: tau must be positive");
  const std::size_t c = q.value().rows();
  const std::size_t l = patch_tokens.value().rows();
  if (present.size() != c) throw ShapeError("cre_loss: present label size mismatch");
  if (maps.confident.size() != l) throw ShapeError("cre_loss: map size mismatch");

  Var qn = l2_normalize_rows(q);
  Var pn = l2_normalize_rows(patch_tokens);
  Var logits = scale(matmul(qn, transpose(pn)), 1.0 / tau);  // C x L

  Tape& tape = *q.tape;
  Var acc = tape.constant(Tensor::scalar(0.0));
  std::size_t total_pos = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!present[ch]) continue;
    std::vector<std::size_t> positives;
    for (std::size_t p = 0; p < l; ++p)
      if (maps.confident[p] == static_cast<int>(ch) + 1) positives.push_back(p);
    if (positives.empty()) continue;
    Var row = reshape(gather_rows(logits, {ch}), Shape{l});
    Var lse = logsumexp(row);
    Var pos_sum = sum_all(gather_elems(row, positives));
    acc = add(acc, sub(scale(lse, static_cast<double>(positives.size())), pos_sum));
    total_pos += positives.size();
  }
  if (total_pos == 0) return tape.constant(Tensor::scalar(0.0));
  return scale(acc, 1.0 / static_cast<double>(total_pos));
}

UncertainSet kernel_search(const RelationMaps& maps, int d, double phi) {
  if (d < 1 || d % 2 == 0) throw ValueError("kernel_search: d must be odd and >= 1");
  if (phi <= 0.0) throw ValueError("kernel_search: phi must be positive");
  const int nh = static_cast<int>(maps.n_h);
  const int nw = static_cast<int>(maps.n_w);
  const int r = d / 2;
  UncertainSet out;
  for (int i = 0; i < nh; ++i)
    for (int j = 0; j < nw; ++j) {
      if (maps.uncertain[i * nw + j] != 1) continue;
      int score = 0;
      for (int di = -r; di <= r; ++di)
        for (int dj = -r; dj <= r; ++dj) {
          const int y = i + di, x = j + dj;
          if (y < 0 || y >= nh || x < 0 || x >= nw) continue;  // zero padding
          if (maps.confident[y * nw + x] > 0) score += 2;
          if (maps.uncertain[y * nw + x] == 1) score += 1;
        }
      if (static_cast<double>(score) / (d * d) > phi) {
        out.coords.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        out.flat.push_back(static_cast<std::size_t>(i) * maps.n_w + j);
      }
    }
  return out;
}

Var ure_loss(Var q, Var patch_tokens, const UncertainSet& uncertain,
             const std::vector<int>& present) {
  const std::size_t c = q.value().rows();
  if (present.size() != c) throw ShapeError("ure_loss: present label size mismatch");
  Tape& tape = *q.tape;

  std::vector<std::size_t> pos_classes, neg_classes;
  for (std::size_t ch = 0; ch < c; ++ch)
    (present[ch] ? pos_classes : neg_classes).push_back(ch);

  const std::size_t n_pos = pos_classes.size() * uncertain.flat.size();
  const std::size_t n_neg = neg_classes.size() * uncertain.flat.size();
  Var pos_acc = tape.constant(Tensor::scalar(0.0));
  Var neg_acc = tape.constant(Tensor::scalar(0.0));
  for (std::size_t u : uncertain.flat) {
    Var urow = gather_rows(patch_tokens, {u});
    for (std::size_t ch : pos_classes)
      pos_acc = add(pos_acc, affine(cosine(gather_rows(q, {ch}), urow), -1.0, 1.0));
    for (std::size_t ch : neg_classes)
      neg_acc = add(neg_acc, cosine(gather_rows(q, {ch}), urow));
  }
  Var loss = tape.constant(Tensor::scalar(0.0));
  if (n_pos > 0) loss = add(loss, scale(pos_acc, 1.0 / static_cast<double>(n_pos)));
  if (n_neg > 0) loss = add(loss, scale(neg_acc, 1.0 / static_cast<double>(n_neg)));
  return loss;
}

}  // namespace more
