#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "more/cam.hpp"

using namespace more;

namespace {

ActivationMap make_map(std::size_t nh, std::size_t nw, std::size_t c,
                       std::vector<double> scores) {
  ActivationMap m;
  m.n_h = nh;
  m.n_w = nw;
  m.num_classes = c;
  m.scores = Tensor::from({nh, nw, c}, std::move(scores));
  return m;
}

}  // namespace

TEST_CASE("zero classifier weights give an all-zero map") {
  Tensor tokens = Tensor::from({4, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  Tensor w(Shape{3, 2});
  ActivationMap m = compute_cam(tokens, w, 2, 2, {1, 1});
  for (std::size_t i = 0; i < m.scores.size(); ++i) CHECK(m.scores[i] == 0.0);
}

TEST_CASE("single patch map equals normalized token projection") {
  Tensor tokens = Tensor::from({1, 2}, {1.0, 2.0});
  Tensor w = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  ActivationMap m = compute_cam(tokens, w, 1, 1, {1, 1});
  // single cell per channel: min == max, normalization collapses to 0
  CHECK(m.scores[0] == 0.0);
  CHECK(m.scores[1] == 0.0);
}

TEST_CASE("cam against a naive loop") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 1);
  const std::size_t l = 9, d = 5, c = 3;
  Tensor tokens(Shape{l, d}), w(Shape{d, c});
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = nd(rng);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = nd(rng);
  const std::vector<int> present = {1, 0, 1};
  ActivationMap m = compute_cam(tokens, w, 3, 3, present);

  for (std::size_t ch = 0; ch < c; ++ch) {
    std::vector<double> raw(l);
    for (std::size_t p = 0; p < l; ++p) {
      raw[p] = 0.0;
      for (std::size_t e = 0; e < d; ++e) raw[p] += tokens.at(p, e) * w.at(e, ch);
    }
    if (!present[ch]) {
      for (std::size_t p = 0; p < l; ++p) CHECK(m.scores[p * c + ch] == 0.0);
      continue;
    }
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    for (std::size_t p = 0; p < l; ++p)
      CHECK(m.scores[p * c + ch] == doctest::Approx((raw[p] - lo) / (hi - lo)).epsilon(1e-12));
  }
}

TEST_CASE("threshold filter branch examples") {
  ActivationMap m = make_map(1, 3, 2,
      {0.8, 0.3,    // max 0.8 > 0.7 -> class 1
       0.1, 0.2,    // max 0.2 < 0.25 -> background
       0.5, 0.4});  // 0.25 <= 0.5 <= 0.7 -> uncertain
  ReliabilityMask mask = multi_threshold_filter(m, 0.25, 0.7);
  CHECK(mask.labels[0] == 1);
  CHECK(mask.labels[1] == 0);
  CHECK(mask.labels[2] == kUncertainLabel);
}

TEST_CASE("threshold filter ties break to the lowest class id") {
  ActivationMap m = make_map(1, 1, 3, {0.9, 0.9, 0.2});
  ReliabilityMask mask = multi_threshold_filter(m, 0.25, 0.7);
  CHECK(mask.labels[0] == 1);
}

TEST_CASE("threshold filter validates the threshold order") {
  ActivationMap m = make_map(1, 1, 2, {0.5, 0.5});
  CHECK_THROWS_AS(multi_threshold_filter(m, 0.7, 0.25), ValueError);
  CHECK_THROWS_AS(multi_threshold_filter(m, 0.0, 0.7), ValueError);
  CHECK_THROWS_AS(multi_threshold_filter(m, 0.25, 1.0), ValueError);
}

TEST_CASE("lam of parallel tokens collapses after normalization") {
  // q row parallel to every patch row: cosine 1 everywhere, constant channel
  // min-max normalizes to all zeros
  Tensor q = Tensor::from({1, 2}, {1.0, 0.0});
  Tensor pat = Tensor::from({4, 2}, {2, 0, 3, 0, 0.5, 0, 7, 0});
  ActivationMap m = compute_lam(q, pat, 2, 2, {1});
  for (std::size_t i = 0; i < m.scores.size(); ++i) CHECK(m.scores[i] == 0.0);
}

TEST_CASE("lam of orthogonal tokens is a zero channel") {
  Tensor q = Tensor::from({1, 2}, {1.0, 0.0});
  Tensor pat = Tensor::from({2, 2}, {0.0, 1.0, 0.0, 2.0});
  ActivationMap m = compute_lam(q, pat, 1, 2, {1});
  for (std::size_t i = 0; i < m.scores.size(); ++i) CHECK(m.scores[i] == 0.0);
}

TEST_CASE("lam against a per-pixel cosine loop") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 1);
  const std::size_t l = 9, d = 4, c = 2;
  Tensor q(Shape{c, d}), pat(Shape{l, d});
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = nd(rng);
  for (std::size_t i = 0; i < pat.size(); ++i) pat[i] = nd(rng);
  ActivationMap m = compute_lam(q, pat, 3, 3, {1, 1});

  for (std::size_t ch = 0; ch < c; ++ch) {
    std::vector<double> raw(l);
    for (std::size_t p = 0; p < l; ++p) {
      double dp = 0, nq = 0, np = 0;
      for (std::size_t e = 0; e < d; ++e) {
        dp += q.at(ch, e) * pat.at(p, e);
        nq += q.at(ch, e) * q.at(ch, e);
        np += pat.at(p, e) * pat.at(p, e);
      }
      raw[p] = dp / (std::sqrt(nq) * std::sqrt(np) + 1e-12);
    }
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    for (std::size_t p = 0; p < l; ++p)
      CHECK(m.scores[p * c + ch] ==
            doctest::Approx((raw[p] - lo) / (hi - lo)).epsilon(1e-12));
  }
}

TEST_CASE("pseudo labels") {
  // all below threshold -> background everywhere
  ActivationMap low = make_map(1, 2, 2, {0.1, 0.2, 0.3, 0.05});
  std::vector<int> bg = to_pseudo_label(low, 0.45);
  CHECK(bg == std::vector<int>{0, 0});

  // one hot high channel -> that class everywhere
  ActivationMap hot = make_map(1, 2, 2, {0.05, 0.9, 0.1, 0.95});
  CHECK(to_pseudo_label(hot, 0.45) == std::vector<int>{2, 2});

  // mixed 2x2 hand case
  ActivationMap mix = make_map(2, 2, 2,
      {0.9, 0.1,     // class 1
       0.2, 0.7,     // class 2
       0.3, 0.2,     // background
       0.46, 0.46}); // tie at threshold -> class 1
  CHECK(to_pseudo_label(mix, 0.45) == std::vector<int>{1, 2, 0, 1});
}

TEST_CASE("partition invariant on random maps") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int it = 0; it < 100; ++it) {
    ActivationMap m;
    m.n_h = 4;
    m.n_w = 4;
    m.num_classes = 3;
    m.scores = Tensor(Shape{4, 4, 3});
    for (std::size_t i = 0; i < m.scores.size(); ++i) m.scores[i] = u01(rng);
    ReliabilityMask mask = multi_threshold_filter(m, 0.25, 0.7);
    for (int v : mask.labels)
      CHECK((v == 0 || (v >= 1 && v <= 3) || v == kUncertainLabel));
  }
}
