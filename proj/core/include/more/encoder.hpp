#pragma once

#include <cstdint>

#include "more/autodiff.hpp"
#include "more/params.hpp"

namespace more {

struct EncoderConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t num_heads = 4;
  std::size_t num_classes = 3;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }
  void validate() const;
};

// Class tokens (C x D), patch tokens (L x D) and their grid geometry.
struct TokenBundle {
  Var class_tokens;
  Var patch_tokens;
  std::size_t n_h = 0;
  std::size_t n_w = 0;
};

ParamSet init_encoder_params(const EncoderConfig& cfg, std::uint64_t seed);

// Flat source index for every element of the patchified layout, channel-major
// within each patch, patches ordered top-left first.
std::vector<std::size_t> patchify_index_map(std::size_t image_size, std::size_t patch_size);

Var patchify(Var image, std::size_t image_size, std::size_t patch_size);

TokenBundle encode(Var image, const EncoderConfig& cfg, const ParamVars& pv);

}  // namespace more
