#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "more/tensor.hpp"

namespace more {

// Binary portable graymap (P5), maxval 255.
void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
               std::size_t width, std::size_t height);

// Binary portable pixmap (P6), interleaved RGB, maxval 255.
void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb,
               std::size_t width, std::size_t height);

// [0,1] channel-planar image tensor [3 x H x W] to P6.
void write_image_ppm(const std::string& path, const Tensor& image);

// Label grid written verbatim (0 / class id / 255).
void write_label_pgm(const std::string& path, const std::vector<int>& labels,
                     std::size_t width, std::size_t height);

// [0,1] scores scaled to 0..255.
void write_scores_pgm(const std::string& path, const std::vector<double>& scores,
                      std::size_t width, std::size_t height);

}  // namespace more
