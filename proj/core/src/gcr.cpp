#include "more/gcr.hpp"

#include "more/errors.hpp"

namespace more {

ParamSet init_gcr_params(std::size_t embed_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = embed_dim;
  ParamSet p;
  // projectors start near identity so the initial graph reads raw tokens
  p.add("gcr.head.w", tv::add(identity_matrix(d), truncated_normal_tensor(rng, {d, d}, 0.02)));
  p.add("gcr.head.b", Tensor(Shape{d}));
  p.add("gcr.tail.w", tv::add(identity_matrix(d), truncated_normal_tensor(rng, {d, d}, 0.02)));
  p.add("gcr.tail.b", Tensor(Shape{d}));
  p.add("gcr.fuse.w1", tv::add(identity_matrix(d), truncated_normal_tensor(rng, {d, d}, 0.02)));
  p.add("gcr.fuse.b1", Tensor(Shape{d}));
  p.add("gcr.fuse.w2", truncated_normal_tensor(rng, {d, d}, 0.02));
  p.add("gcr.fuse.b2", Tensor(Shape{d}));
  return p;
}

std::pair<Var, Var> gcr_project(Var class_tokens, Var patch_tokens, const ParamVars& pv) {
  Var heads = add_rowvec(matmul(class_tokens, pv.get("gcr.head.w")), pv.get("gcr.head.b"));
  Var tails = add_rowvec(matmul(patch_tokens, pv.get("gcr.tail.w")), pv.get("gcr.tail.b"));
  return {heads, tails};
}

NeighborSelection select_neighbors(Var head_row, Var tails, std::size_t k) {
  const std::size_t l = tails.value().rows();
  if (k < 1 || k > l)
    throw ValueError("select_neighbors: K=" + std::to_string(k) + " out of range [1, " +
                     std::to_string(l) + "]");
  Var scores = reshape(matmul(head_row, transpose(tails)), Shape{l});
  TopK top = topk(scores, k);
  NeighborSelection sel;
  sel.relations = softmax_rows(reshape(top.values, Shape{1, k}));
  sel.indices = std::move(top.indices);
  return sel;
}

Var edge_embeddings(Var head_row, Var tails, const NeighborSelection& sel) {
  const std::size_t k = sel.indices.size();
  Var selected = gather_rows(tails, sel.indices);                 // K x D
  Var r = reshape(sel.relations, Shape{k});                       // K
  Var head_rep = repeat_rows(head_row, k);                        // K x D
  return add(rows_scale(selected, r), rows_scale(head_rep, affine(r, -1.0, 1.0)));
}

Aggregated aggregate_neighbors(Var head_row, Var edges, Var selected_tails) {
  const std::size_t k = edges.value().rows();
  Var gated = tanh_op(add(repeat_rows(head_row, k), edges));      // K x D
  Var logits = row_sums(mul(selected_tails, gated));              // K
  Var weights = softmax_rows(reshape(logits, Shape{1, k}));       // 1 x K
  Var agg = matmul(weights, selected_tails);                      // 1 x D
  return {agg, weights};
}

Var gcr_fuse(Var heads, Var aggregates, const ParamVars& pv) {
  Var sum_path = leaky_relu(
      add_rowvec(matmul(add(heads, aggregates), pv.get("gcr.fuse.w1")), pv.get("gcr.fuse.b1")));
  Var prod_path = leaky_relu(
      add_rowvec(matmul(mul(aggregates, heads), pv.get("gcr.fuse.w2")), pv.get("gcr.fuse.b2")));
  return add(sum_path, prod_path);
}

GcrOutput gcr_forward(Var class_tokens, Var patch_tokens, const ParamVars& pv, std::size_t k) {
  const std::size_t c = class_tokens.value().rows();
  const std::size_t d = class_tokens.value().cols();
  auto [heads, tails] = gcr_project(class_tokens, patch_tokens, pv);

  GraphCategoryState st;
  st.heads = heads.value();
  st.tails = tails.value();
  st.relations = Tensor(Shape{c, k});
  st.weights = Tensor(Shape{c, k});
  st.edges = Tensor(Shape{c, k, d});
  st.neighbors.resize(c);

  std::vector<Var> agg_rows;
  agg_rows.reserve(c);
  for (std::size_t i = 0; i < c; ++i) {
    Var head_row = gather_rows(heads, {i});
    NeighborSelection sel = select_neighbors(head_row, tails, k);
    Var selected = gather_rows(tails, sel.indices);
    Var edges = edge_embeddings(head_row, tails, sel);
    Aggregated agg = aggregate_neighbors(head_row, edges, selected);
    agg_rows.push_back(agg.value);

    st.neighbors[i] = sel.indices;
    for (std::size_t j = 0; j < k; ++j) {
      st.relations.at(i, j) = sel.relations.value()[j];
      st.weights.at(i, j) = agg.weights.value()[j];
      for (std::size_t e = 0; e < d; ++e)
        st.edges[(i * k + j) * d + e] = edges.value().at(j, e);
    }
  }
  Var aggregates = concat_rows(agg_rows);  // C x D
  Var q = gcr_fuse(heads, aggregates, pv);

  st.aggregate = aggregates.value();
  st.output = q.value();
  return {q, std::move(st)};
}

}  // namespace more
