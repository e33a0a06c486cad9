#include "more/cam.hpp"

#include <algorithm>

namespace more {

namespace {

// Min-max normalize each present class channel to [0,1]; zero absent channels.
void normalize_channels(ActivationMap& map, const std::vector<int>& present) {
  const std::size_t hw = map.n_h * map.n_w;
  const std::size_t c = map.num_classes;
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!present[ch]) {
      for (std::size_t p = 0; p < hw; ++p) map.scores[p * c + ch] = 0.0;
      continue;
    }
    double lo = map.scores[ch], hi = map.scores[ch];
    for (std::size_t p = 0; p < hw; ++p) {
      lo = std::min(lo, map.scores[p * c + ch]);
      hi = std::max(hi, map.scores[p * c + ch]);
    }
    const double range = hi - lo;
    // a numerically flat channel carries no localization signal; zero it
    // instead of amplifying roundoff noise to full scale
    const double flat = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
    for (std::size_t p = 0; p < hw; ++p)
      map.scores[p * c + ch] = range > flat ? (map.scores[p * c + ch] - lo) / range : 0.0;
  }
}

}  // namespace

ActivationMap compute_cam(const Tensor& patch_tokens, const Tensor& w_cls,
                          std::size_t n_h, std::size_t n_w,
                          const std::vector<int>& present) {
  const std::size_t l = patch_tokens.rows();
  if (l != n_h * n_w) throw ShapeError("compute_cam: token count does not match grid");
  if (w_cls.rows() != patch_tokens.cols())
    throw ShapeError("compute_cam: classifier width mismatch");
  const std::size_t c = w_cls.cols();
  if (present.size() != c) throw ShapeError("compute_cam: present label size mismatch");

  ActivationMap map;
  map.scores = tv::matmul(patch_tokens, w_cls);  // L x C, same layout as n_h x n_w x C
  map.scores = Tensor::from({n_h, n_w, c},
                            std::vector<double>(map.scores.data(), map.scores.data() + l * c));
  map.n_h = n_h;
  map.n_w = n_w;
  map.num_classes = c;
  map.kind = ActivationMap::Kind::CAM;
  normalize_channels(map, present);
  return map;
}

ActivationMap compute_lam(const Tensor& q, const Tensor& patch_tokens,
                          std::size_t n_h, std::size_t n_w,
                          const std::vector<int>& present) {
  const std::size_t l = patch_tokens.rows();
  if (l != n_h * n_w) throw ShapeError("compute_lam: token count does not match grid");
  const std::size_t c = q.rows();
  const std::size_t d = q.cols();
  if (patch_tokens.cols() != d) throw ShapeError("compute_lam: embedding width mismatch");
  if (present.size() != c) throw ShapeError("compute_lam: present label size mismatch");

  ActivationMap map;
  map.scores = Tensor(Shape{n_h, n_w, c});
  map.n_h = n_h;
  map.n_w = n_w;
  map.num_classes = c;
  map.kind = ActivationMap::Kind::LAM;
  std::vector<double> qrow(d), prow(d);
  for (std::size_t p = 0; p < l; ++p) {
    for (std::size_t e = 0; e < d; ++e) prow[e] = patch_tokens.at(p, e);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t e = 0; e < d; ++e) qrow[e] = q.at(ch, e);
      map.scores[p * c + ch] =
          tv::cosine_similarity(Tensor::from({d}, qrow), Tensor::from({d}, prow));
    }
  }
  normalize_channels(map, present);
  return map;
}

ReliabilityMask multi_threshold_filter(const ActivationMap& map, double lambda_lo,
                                       double lambda_hi) {
  if (!(0.0 < lambda_lo && lambda_lo < lambda_hi && lambda_hi < 1.0))
    throw ValueError("multi_threshold_filter: need 0 < lambda_lo < lambda_hi < 1");
  ReliabilityMask out;
  out.n_h = map.n_h;
  out.n_w = map.n_w;
  out.lambda_lo = lambda_lo;
  out.lambda_hi = lambda_hi;
  const std::size_t hw = map.n_h * map.n_w;
  const std::size_t c = map.num_classes;
  out.labels.resize(hw);
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t best = 0;
    double mx = map.scores[p * c];
    for (std::size_t ch = 1; ch < c; ++ch)
      if (map.scores[p * c + ch] > mx) {  // ties break to lowest class id
        mx = map.scores[p * c + ch];
        best = ch;
      }
    if (mx > lambda_hi)
      out.labels[p] = static_cast<int>(best) + 1;
    else if (mx < lambda_lo)
      out.labels[p] = 0;
    else
      out.labels[p] = kUncertainLabel;
  }
  return out;
}

std::vector<int> to_pseudo_label(const ActivationMap& map, double bg_threshold) {
  const std::size_t hw = map.n_h * map.n_w;
  const std::size_t c = map.num_classes;
  std::vector<int> out(hw);
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t best = 0;
    double mx = map.scores[p * c];
    for (std::size_t ch = 1; ch < c; ++ch)
      if (map.scores[p * c + ch] > mx) {
        mx = map.scores[p * c + ch];
        best = ch;
      }
    out[p] = mx < bg_threshold ? 0 : static_cast<int>(best) + 1;
  }
  return out;
}

}  // namespace more
