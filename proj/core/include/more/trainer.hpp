#pragma once

#include <random>
#include <vector>

#include "more/cam.hpp"
#include "more/config.hpp"
#include "more/gcr.hpp"
#include "more/lir.hpp"
#include "more/losses.hpp"
#include "more/metrics.hpp"
#include "more/optimizer.hpp"
#include "more/synthdata.hpp"

namespace more {

// Nearest-neighbor upsample of a label grid by an integer factor.
std::vector<int> upsample_nearest(const std::vector<int>& grid, std::size_t n_h,
                                  std::size_t n_w, std::size_t factor);

// Full single-sample forward as plain values, for evaluation and diagnostics.
struct SampleForward {
  Tensor class_tokens;       // C x D
  Tensor patch_tokens;       // L x D
  Tensor q;                  // C x D
  GraphCategoryState gcr_state;
  ActivationMap cam;
  ActivationMap lam;
  ReliabilityMask mask;
  RelationMaps relations;
  UncertainSet uncertain;
  std::vector<int> pseudo;     // from LAM
  std::vector<int> seg_pred;   // decoder argmax per pixel
  std::vector<double> cls_prob;  // per-class sigmoid
};

struct EvalResult {
  MetricsReport seed;   // LAM pseudo labels vs ground truth
  MetricsReport mask;   // decoder predictions vs ground truth
  double exact_match = 0.0;
};

class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);
  Trainer(const RunConfig& cfg, ParamSet params);

  // One optimization step; deterministic given config and seed.
  LossReport train_step();

  SampleForward forward_sample(const SyntheticSample& sample) const;
  EvalResult evaluate(const std::vector<SyntheticSample>& split) const;

  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  std::size_t step() const { return step_; }
  const std::vector<SyntheticSample>& train_split() const { return train_; }
  std::vector<SyntheticSample> make_val_split() const;
  const RunConfig& config() const { return cfg_; }

 private:
  static ParamSet init_all_params(const RunConfig& cfg);

  RunConfig cfg_;
  ParamSet params_;
  AdamW opt_;
  std::vector<SyntheticSample> train_;
  std::mt19937_64 batch_rng_;
  std::size_t step_ = 0;
};

}  // namespace more
