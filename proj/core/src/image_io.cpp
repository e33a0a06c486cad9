#include "more/image_io.hpp"

#include <algorithm>
#include <fstream>

#include "more/errors.hpp"

namespace more {

namespace {

void write_pnm(const std::string& path, const char* magic,
               const std::vector<std::uint8_t>& bytes, std::size_t width,
               std::size_t height) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValueError("cannot open " + path);
  out << magic << "\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValueError("write failed for " + path);
}

}  // namespace

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& pixels,
               std::size_t width, std::size_t height) {
  if (pixels.size() != width * height) throw ShapeError("write_pgm: pixel count mismatch");
  write_pnm(path, "P5", pixels, width, height);
}

void write_ppm(const std::string& path, const std::vector<std::uint8_t>& rgb,
               std::size_t width, std::size_t height) {
  if (rgb.size() != 3 * width * height) throw ShapeError("write_ppm: pixel count mismatch");
  write_pnm(path, "P6", rgb, width, height);
}

void write_image_ppm(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || image.shape()[0] != 3)
    throw ShapeError("write_image_ppm: expected [3 x H x W]");
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  std::vector<std::uint8_t> rgb(3 * h * w);
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      rgb[p * 3 + c] = static_cast<std::uint8_t>(
          std::clamp(image[c * h * w + p], 0.0, 1.0) * 255.0 + 0.5);
  write_ppm(path, rgb, w, h);
}

void write_label_pgm(const std::string& path, const std::vector<int>& labels,
                     std::size_t width, std::size_t height) {
  std::vector<std::uint8_t> px(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 255) throw ValueError("write_label_pgm: label out of byte range");
    px[i] = static_cast<std::uint8_t>(labels[i]);
  }
  write_pgm(path, px, width, height);
}

void write_scores_pgm(const std::string& path, const std::vector<double>& scores,
                      std::size_t width, std::size_t height) {
  std::vector<std::uint8_t> px(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    px[i] = static_cast<std::uint8_t>(std::clamp(scores[i], 0.0, 1.0) * 255.0 + 0.5);
  write_pgm(path, px, width, height);
}

}  // namespace more
