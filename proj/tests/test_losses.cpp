#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "more/losses.hpp"

using namespace more;

namespace {

Tensor randn(std::mt19937_64& rng, Shape shape) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("soft margin at zero logits is ln 2") {
  Tape t;
  Var loss = cls_loss(t.leaf(Tensor(Shape{3})), {1, 0, 1});
  CHECK(loss.value().scalar_value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("saturated correct logits drive the loss to zero") {
  Tape t;
  Var loss = cls_loss(t.leaf(Tensor::from({3}, {40.0, 40.0, 40.0})), {1, 1, 1});
  CHECK(loss.value().scalar_value() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("soft margin against a naive per-class loop") {
  std::mt19937_64 rng(3);
  Tensor z = randn(rng, {4});
  const std::vector<int> y = {1, 0, 0, 1};
  Tape t;
  const double got = cls_loss(t.leaf(z), y).value().scalar_value();
  double want = 0.0;
  for (std::size_t c = 0; c < 4; ++c)
    want += y[c] ? -std::log(sigmoid(z[c])) : -std::log(sigmoid(-z[c]));
  want /= 4.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("token discrepancy of orthogonal rows is zero") {
  Tape t;
  Var loss = mct_loss(t.leaf(Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0})));
  CHECK(loss.value().scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("token discrepancy of identical rows is one") {
  Tape t;
  Var loss = mct_loss(t.leaf(Tensor::from({2, 3}, {1.0, 2.0, 3.0, 1.0, 2.0, 3.0})));
  CHECK(loss.value().scalar_value() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("token discrepancy against a pairwise loop") {
  std::mt19937_64 rng(5);
  Tensor q = randn(rng, {3, 4});
  Tape t;
  const double got = mct_loss(t.leaf(q)).value().scalar_value();
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) {
      double dp = 0, ni = 0, nj = 0;
      for (std::size_t e = 0; e < 4; ++e) {
        dp += q.at(i, e) * q.at(j, e);
        ni += q.at(i, e) * q.at(i, e);
        nj += q.at(j, e) * q.at(j, e);
      }
      const double cs = dp / (std::sqrt(ni) * std::sqrt(nj) + 1e-12);
      want += std::max(0.0, cs);
    }
  want /= 3.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("single class token has zero discrepancy") {
  Tape t;
  CHECK(mct_loss(t.leaf(Tensor::from({1, 3}, {1.0, 2.0, 3.0}))).value().scalar_value() == 0.0);
}

TEST_CASE("zero decoder weights give uniform logits") {
  const std::size_t d = 4, c = 2;
  ParamSet p;
  p.add("dec.w1", Tensor(Shape{d, d}));
  p.add("dec.b1", Tensor(Shape{d}));
  p.add("dec.w2", Tensor(Shape{d, c + 1}));
  p.add("dec.b2", Tensor(Shape{c + 1}));
  std::mt19937_64 rng(7);
  Tape t;
  ParamVars pv(t, p);
  Tensor logits = decode(t.leaf(randn(rng, {6, d})), c, pv).value();
  CHECK(logits.shape() == Shape{6, c + 1});
  for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits[i] == 0.0);
}

TEST_CASE("decoder output shape and gradient") {
  const std::size_t d = 4, c = 3;
  ParamSet p = init_decoder_params(d, c, 11);
  std::mt19937_64 rng(11);
  Tensor pat = randn(rng, {9, d});
  std::vector<int> pseudo = {0, 1, 2, 3, 0, 1, 2, 3, 0};
  auto f = [&](const Tensor& xv) {
    Tape t;
    Var x = t.leaf(xv);
    ParamVars pv(t, p);
    Var logits = decode(x, c, pv);
    CHECK(logits.value().shape() == Shape{9, c + 1});
    Var loss = seg_loss(logits, pseudo);
    t.backward(loss);
    return std::make_pair(loss.value().scalar_value(), t.grad(x));
  };
  CHECK(finite_diff_check(f, pat, 1e-4) < 1e-4);
}

TEST_CASE("uniform segmentation logits give ln 3") {
  Tape t;
  Var loss = seg_loss(t.leaf(Tensor(Shape{5, 3})), {0, 1, 2, 0, 1});
  CHECK(loss.value().scalar_value() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("saturated correct segmentation logits vanish") {
  Tensor z(Shape{2, 3});
  z.at(0, 1) = 50.0;
  z.at(1, 2) = 50.0;
  Tape t;
  CHECK(seg_loss(t.leaf(z), {1, 2}).value().scalar_value() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("segmentation loss against a per-pixel loop") {
  std::mt19937_64 rng(13);
  Tensor z = randn(rng, {16, 4});
  std::vector<int> y(16);
  std::uniform_int_distribution<int> cls(0, 3);
  for (auto& v : y) v = cls(rng);
  Tape t;
  const double got = seg_loss(t.leaf(z), y).value().scalar_value();
  double want = 0.0;
  for (std::size_t p = 0; p < 16; ++p) {
    double mx = z.at(p, 0);
    for (std::size_t c = 1; c < 4; ++c) mx = std::max(mx, z.at(p, c));
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += std::exp(z.at(p, c) - mx);
    want += mx + std::log(s) - z.at(p, static_cast<std::size_t>(y[p]));
  }
  want /= 16.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("total loss arithmetic") {
  const LossWeights w;
  Tape t;
  auto c = [&](double v) { return t.leaf(Tensor::scalar(v)); };
  CHECK(total_loss(c(0), c(0), c(0), c(0), c(0), w).value().scalar_value() == 0.0);
  CHECK(total_loss(c(1), c(1), c(1), c(1), c(1), w).value().scalar_value() ==
        doctest::Approx(2.42).epsilon(1e-12));

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int it = 0; it < 20; ++it) {
    const double a = u(rng), b = u(rng), cr = u(rng), ur = u(rng), sg = u(rng);
    const double got = total_loss(c(a), c(b), c(cr), c(ur), c(sg), w).value().scalar_value();
    CHECK(got == doctest::Approx(a + b + 0.2 * cr + 0.1 * ur + 0.12 * sg).epsilon(1e-12));
  }
}

TEST_CASE("classification logits shape") {
  const std::size_t d = 5, c = 3;
  ParamSet p = init_classifier_params(d, c, 19);
  CHECK(p.get("cls.w").shape() == Shape{d, c});
  std::mt19937_64 rng(19);
  Tape t;
  ParamVars pv(t, p);
  Var logits = classification_logits(t.leaf(randn(rng, {8, d})), pv);
  CHECK(logits.value().size() == c);
}
