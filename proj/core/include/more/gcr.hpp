#pragma once

#include <cstdint>

#include "more/autodiff.hpp"
#include "more/params.hpp"

namespace more {

// Everything the class-patch graph produced on one forward pass, as plain
// values for inspection and diagnostics.
struct GraphCategoryState {
  Tensor heads;                                    // C x D
  Tensor tails;                                    // L x D
  Tensor relations;                                // C x K, rows sum to 1
  std::vector<std::vector<std::size_t>> neighbors; // C rows of K patch indices
  Tensor edges;                                    // C x K x D
  Tensor weights;                                  // C x K, rows sum to 1
  Tensor aggregate;                                // C x D
  Tensor output;                                   // C x D
};

struct GcrOutput {
  Var q;  // graph-regularized class tokens, C x D
  GraphCategoryState state;
};

struct NeighborSelection {
  Var relations;                      // 1 x K softmax over selected scores
  std::vector<std::size_t> indices;   // K patch indices, descending score
};

ParamSet init_gcr_params(std::size_t embed_dim, std::uint64_t seed);

std::pair<Var, Var> gcr_project(Var class_tokens, Var patch_tokens, const ParamVars& pv);

// Raw-score top-K neighbor selection for one head row (1 x D).
NeighborSelection select_neighbors(Var head_row, Var tails, std::size_t k);

// e_j = r_j * t_j + (1 - r_j) * h, for the selected neighbors.
Var edge_embeddings(Var head_row, Var tails, const NeighborSelection& sel);

// Gated triplet weighting and convex aggregation over the selected tails.
struct Aggregated {
  Var value;    // 1 x D
  Var weights;  // 1 x K
};
Aggregated aggregate_neighbors(Var head_row, Var edges, Var selected_tails);

Var gcr_fuse(Var heads, Var aggregates, const ParamVars& pv);

GcrOutput gcr_forward(Var class_tokens, Var patch_tokens, const ParamVars& pv, std::size_t k);

}  // namespace more
