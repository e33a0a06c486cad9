#pragma once

#include <cstdint>
#include <vector>

#include "more/autodiff.hpp"
#include "more/params.hpp"

namespace more {

struct LossWeights {
  double alpha = 0.2;
  double beta = 0.1;
  double gamma = 0.12;
};

struct LossReport {
  std::size_t step = 0;
  double l_cls = 0.0;
  double l_mct = 0.0;
  double l_cre = 0.0;
  double l_ure = 0.0;
  double l_more = 0.0;
  double l_seg = 0.0;
  double l_total = 0.0;
};

// Multi-label soft margin over per-class logits.
Var cls_loss(Var class_logits, const std::vector<int>& labels);

// Mean over unordered class-token pairs of max(0, cosine); discrepancy
// surrogate. Zero when C < 2.
Var mct_loss(Var q);

ParamSet init_decoder_params(std::size_t embed_dim, std::size_t num_classes,
                             std::uint64_t seed);

// Two pointwise linear layers with a nonlinearity between; C+1 logits per
// pixel, class 0 = background.
Var decode(Var patch_tokens, std::size_t num_classes, const ParamVars& pv);

Var seg_loss(Var logits, const std::vector<int>& pseudo);

Var total_loss(Var l_cls, Var l_mct, Var l_cre, Var l_ure, Var l_seg,
               const LossWeights& w);

ParamSet init_classifier_params(std::size_t embed_dim, std::size_t num_classes,
                                std::uint64_t seed);

// Per-class scores from mean-pooled raw per-class CAM channels.
Var classification_logits(Var patch_tokens, const ParamVars& pv);

}  // namespace more
