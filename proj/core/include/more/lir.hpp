#pragma once

#include <utility>
#include <vector>

#include "more/autodiff.hpp"
#include "more/cam.hpp"

namespace more {

// Confident map keeps foreground class ids 1..C (0 elsewhere); uncertain map
// is 1 exactly where the reliability mask reads 255.
struct RelationMaps {
  std::vector<int> confident;
  std::vector<int> uncertain;
  std::size_t n_h = 0;
  std::size_t n_w = 0;
};

struct LirConfig {
  double tau = 0.1;
  int kernel_d = 3;
  double phi = 1.2;
};

// Uncertain patches selected by the mining kernel; flat indices into the
// patch-token rows.
struct UncertainSet {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::vector<std::size_t> flat;
};

RelationMaps split_relations(const ReliabilityMask& mask);

// Contrast of class tokens against confident patches. Tokens are
// L2-normalized inside, so logits are cosine / tau. Zero when no positives.
Var cre_loss(Var q, Var patch_tokens, const RelationMaps& maps,
             const std::vector<int>& present, double tau);

// Window sum counts foreground as 2 and uncertain as 1; zero padding at the
// borders. A pixel is selected iff its mask value is 255 and
// score / (d*d) > phi.
UncertainSet kernel_search(const RelationMaps& maps, int d, double phi);

Var ure_loss(Var q, Var patch_tokens, const UncertainSet& uncertain,
             const std::vector<int>& present);

}  // namespace more
