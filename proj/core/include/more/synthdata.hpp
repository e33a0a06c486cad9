#pragma once

#include <cstdint>
#include <vector>

#include "more/tensor.hpp"

namespace more {

struct SynthConfig {
  std::size_t num_classes = 3;
  std::size_t image_size = 64;
  std::size_t shapes_min = 1;
  std::size_t shapes_max = 3;
};

// image in [0,1], mask values 0..C, labels multi-hot of length C.
struct SyntheticSample {
  Tensor image;             // 3 x H x W
  std::vector<int> mask;    // H * W
  std::vector<int> labels;  // C
};

// Deterministic per seed. Classes map to fixed (shape, hue) pairs; every
// drawn shape covers between 4% and 40% of the image.
SyntheticSample generate_sample(std::uint64_t seed, const SynthConfig& cfg);

std::vector<SyntheticSample> generate_split(std::uint64_t seed, std::size_t n,
                                            const SynthConfig& cfg);

}  // namespace more
