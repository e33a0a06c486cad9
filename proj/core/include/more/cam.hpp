#pragma once

#include <vector>

#include "more/tensor.hpp"

namespace more {

// Per-class spatial score map, scores laid out [n_h x n_w x C] row-major.
struct ActivationMap {
  enum class Kind { CAM, LAM };
  Tensor scores;
  std::size_t n_h = 0;
  std::size_t n_w = 0;
  std::size_t num_classes = 0;
  Kind kind = Kind::CAM;

  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return scores[(i * n_w + j) * num_classes + c];
  }
};

constexpr int kUncertainLabel = 255;

// Tri-valued reliability map: 0 background, 1..C foreground, 255 uncertain.
struct ReliabilityMask {
  std::vector<int> labels;  // n_h * n_w
  std::size_t n_h = 0;
  std::size_t n_w = 0;
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;

  int at(std::size_t i, std::size_t j) const { return labels[i * n_w + j]; }
};

// present[c] != 0 marks classes in the image-level label; absent channels are
// zeroed before normalization and argmax.
ActivationMap compute_cam(const Tensor& patch_tokens, const Tensor& w_cls,
                          std::size_t n_h, std::size_t n_w,
                          const std::vector<int>& present);

ActivationMap compute_lam(const Tensor& q, const Tensor& patch_tokens,
                          std::size_t n_h, std::size_t n_w,
                          const std::vector<int>& present);

ReliabilityMask multi_threshold_filter(const ActivationMap& map, double lambda_lo,
                                       double lambda_hi);

std::vector<int> to_pseudo_label(const ActivationMap& map, double bg_threshold);

}  // namespace more
