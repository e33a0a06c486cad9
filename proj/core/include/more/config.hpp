#pragma once

#include <cstdint>
#include <string>

#include "more/encoder.hpp"
#include "more/lir.hpp"
#include "more/losses.hpp"
#include "more/optimizer.hpp"
#include "more/synthdata.hpp"

namespace more {

// Flat key=value run configuration. Unknown keys are rejected; every key has
// a default.
struct RunConfig {
  // encoder
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t num_heads = 4;
  std::size_t num_classes = 3;
  // graph aggregation; 0 means half the patch count
  std::size_t k_neighbors = 0;
  bool use_gcr = true;  // false: raw class tokens feed the relation losses
  // reliability thresholds
  double lambda_lo = 0.25;
  double lambda_hi = 0.70;
  double bg_threshold = 0.45;
  // relation losses
  double tau = 0.2;
  int kernel_d = 3;
  double phi = 1.2;
  // loss weights
  double alpha = 0.2;
  double beta = 0.1;
  double gamma = 0.12;
  // optimizer / loop
  double lr = 3e-3;
  double weight_decay = 1e-2;
  std::size_t batch_size = 8;
  std::size_t steps = 2000;
  std::size_t warmup_steps = 50;
  std::size_t checkpoint_every = 500;
  bool seg_encoder_grad = true;
  // data
  std::size_t train_samples = 256;
  std::size_t val_samples = 64;
  std::uint64_t data_seed = 7;
  std::uint64_t seed = 1;
  std::size_t shapes_min = 1;
  std::size_t shapes_max = 3;
  std::string out_dir = "runs/out";

  std::size_t effective_k() const {
    const std::size_t l = (image_size / patch_size) * (image_size / patch_size);
    return k_neighbors == 0 ? l / 2 : k_neighbors;
  }
  EncoderConfig encoder() const {
    return {image_size, patch_size, embed_dim, depth, num_heads, num_classes};
  }
  SynthConfig synth() const { return {num_classes, image_size, shapes_min, shapes_max}; }
  LirConfig lir() const { return {tau, kernel_d, phi}; }
  LossWeights weights() const { return {alpha, beta, gamma}; }
  AdamWConfig adamw() const { return {lr, 0.9, 0.999, 1e-8, weight_decay}; }

  void validate() const;
  std::string echo() const;  // canonical key=value text
  static RunConfig parse_text(const std::string& text);
  static RunConfig load(const std::string& path);
};

}  // namespace more
