#include "more/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "more/errors.hpp"

namespace more {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  return {r + m, g + m, b + m};
}

enum class ShapeKind { Circle, Triangle, Square };

ShapeKind class_shape(std::size_t cls1) { // 1-based class id
  switch ((cls1 - 1) % 3) {
    case 0: return ShapeKind::Circle;
    case 1: return ShapeKind::Triangle;
    default: return ShapeKind::Square;
  }
}

double class_hue(std::size_t cls1) {
  static const double hues[6] = {0.0, 120.0, 240.0, 60.0, 180.0, 300.0};
  return hues[(cls1 - 1) % 6];
}

// Pixel set of one shape instance, already clipped to the image.
std::vector<std::size_t> rasterize(ShapeKind kind, std::size_t img, double cx, double cy,
                                   double a, double b) {
  std::vector<std::size_t> px;
  const int n = static_cast<int>(img);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double fx = x + 0.5, fy = y + 0.5;
      bool inside = false;
      switch (kind) {
        case ShapeKind::Circle: {
          const double dx = fx - cx, dy = fy - cy;
          inside = dx * dx + dy * dy <= a * a;
          break;
        }
        case ShapeKind::Square:
          inside = std::abs(fx - cx) <= a / 2.0 && std::abs(fy - cy) <= b / 2.0;
          break;
        case ShapeKind::Triangle: {
          // isoceles, apex up: base width a, height b, centered at (cx, cy)
          const double top = cy - b / 2.0, bottom = cy + b / 2.0;
          if (fy < top || fy > bottom) break;
          const double frac = (fy - top) / b;  // 0 at apex, 1 at base
          inside = std::abs(fx - cx) <= frac * a / 2.0;
          break;
        }
      }
      if (inside) px.push_back(static_cast<std::size_t>(y) * img + x);
    }
  return px;
}

}  // namespace

SyntheticSample generate_sample(std::uint64_t seed, const SynthConfig& cfg) {
  if (cfg.num_classes < 2) throw ValueError("generate_sample: need at least 2 classes");
  if (cfg.shapes_min < 1 || cfg.shapes_max < cfg.shapes_min)
    throw ValueError("generate_sample: bad shapes-per-image range");
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const std::size_t img = cfg.image_size;
  const std::size_t hw = img * img;
  const double min_area = 0.04 * static_cast<double>(hw);
  const double max_area = 0.40 * static_cast<double>(hw);

  SyntheticSample s;
  s.image = Tensor(Shape{3, img, img});
  s.mask.assign(hw, 0);
  s.labels.assign(cfg.num_classes, 0);

  // textured background: low-amplitude value noise with a mild per-image tint
  const double tint[3] = {0.95 + 0.1 * u01(rng), 0.95 + 0.1 * u01(rng), 0.95 + 0.1 * u01(rng)};
  for (std::size_t p = 0; p < hw; ++p) {
    const double v = 0.28 + 0.14 * u01(rng);
    for (std::size_t c = 0; c < 3; ++c)
      s.image[c * hw + p] = std::clamp(v * tint[c], 0.0, 1.0);
  }

  std::size_t count = cfg.shapes_min +
      static_cast<std::size_t>(u01(rng) * static_cast<double>(cfg.shapes_max - cfg.shapes_min + 1));
  count = std::min({count, cfg.shapes_max, cfg.num_classes});

  std::vector<std::size_t> classes(cfg.num_classes);
  for (std::size_t i = 0; i < cfg.num_classes; ++i) classes[i] = i + 1;
  for (std::size_t i = cfg.num_classes; i > 1; --i)
    std::swap(classes[i - 1], classes[static_cast<std::size_t>(u01(rng) * i)]);
  classes.resize(count);

  for (std::size_t cls : classes) {
    const ShapeKind kind = class_shape(cls);
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      double a = 0, b = 0, half_w = 0, half_h = 0;
      const double scale = static_cast<double>(img) / 64.0;
      // once half the attempts are burned, draw only small shapes so a
      // crowded image still admits a placement
      const double span = attempt < 50 ? 1.0 : 0.25;
      switch (kind) {
        case ShapeKind::Circle:
          a = (8.0 + span * 6.0 * u01(rng)) * scale;
          half_w = half_h = a;
          break;
        case ShapeKind::Square:
          a = (14.0 + span * 12.0 * u01(rng)) * scale;
          b = a;
          half_w = half_h = a / 2.0;
          break;
        case ShapeKind::Triangle:
          a = (20.0 + span * 10.0 * u01(rng)) * scale;   // base width
          b = (17.0 + span * 10.0 * u01(rng)) * scale;   // height
          half_w = a / 2.0;
          half_h = b / 2.0;
          break;
      }
      const double margin = 1.0;
      const double lo_x = half_w + margin, hi_x = img - half_w - margin;
      const double lo_y = half_h + margin, hi_y = img - half_h - margin;
      if (hi_x <= lo_x || hi_y <= lo_y) continue;
      const double cx = lo_x + (hi_x - lo_x) * u01(rng);
      const double cy = lo_y + (hi_y - lo_y) * u01(rng);
      auto px = rasterize(kind, img, cx, cy, a, b);
      if (px.size() < min_area || px.size() > max_area) continue;
      bool overlap = false;
      for (std::size_t p : px)
        if (s.mask[p] != 0) {
          overlap = true;
          break;
        }
      if (overlap) continue;

      const double hue = class_hue(cls) + (u01(rng) * 2.0 - 1.0) * 36.0;  // +-10% of 360
      const double sat = 0.75 + 0.15 * u01(rng);
      const double val = 0.70 + 0.20 * u01(rng);
      for (std::size_t p : px) {
        const double jitter = 1.0 + (u01(rng) * 2.0 - 1.0) * 0.03;
        const Rgb c = hsv_to_rgb(hue, sat, std::clamp(val * jitter, 0.0, 1.0));
        s.image[0 * hw + p] = std::clamp(c.r, 0.0, 1.0);
        s.image[1 * hw + p] = std::clamp(c.g, 0.0, 1.0);
        s.image[2 * hw + p] = std::clamp(c.b, 0.0, 1.0);
        s.mask[p] = static_cast<int>(cls);
      }
      s.labels[cls - 1] = 1;
      placed = true;
    }
    if (!placed)
      throw PlacementError("generate_sample: could not place class " + std::to_string(cls) +
                           " after 100 attempts (seed " + std::to_string(seed) + ")");
  }
  return s;
}

std::vector<SyntheticSample> generate_split(std::uint64_t seed, std::size_t n,
                                            const SynthConfig& cfg) {
  if (n < 1) throw ValueError("generate_split: n must be >= 1");
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(seed + i, cfg));
  return out;
}

}  // namespace more
