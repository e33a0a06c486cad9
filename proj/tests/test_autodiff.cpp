#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "more/autodiff.hpp"
#include "more/gcr.hpp"
#include "more/lir.hpp"
#include "more/losses.hpp"

using namespace more;

namespace {

Tensor randn(std::mt19937_64& rng, Shape shape) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

template <typename BuildFn>
double fd(const Tensor& x0, BuildFn build, double step = 1e-5) {
  auto f = [&](const Tensor& xv) {
    Tape t;
    Var x = t.leaf(xv);
    Var loss = build(t, x);
    t.backward(loss);
    return std::make_pair(loss.value().scalar_value(), t.grad(x));
  };
  return finite_diff_check(f, x0, step);
}

}  // namespace

TEST_CASE("tensor shape and access") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK(t.all_finite());
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("matmul identity") {
  Tape t;
  Var a = t.leaf(Tensor::from({2, 2}, {1, 0, 0, 1}));
  Var b = t.leaf(Tensor::from({2, 2}, {3, 4, 5, 6}));
  Tensor out = matmul(a, b).value();
  CHECK(out[0] == 3);
  CHECK(out[1] == 4);
  CHECK(out[2] == 5);
  CHECK(out[3] == 6);
}

TEST_CASE("matmul hand arithmetic") {
  Tape t;
  Var a = t.leaf(Tensor::from({1, 2}, {1, 2}));
  Var b = t.leaf(Tensor::from({2, 1}, {3, 4}));
  CHECK(matmul(a, b).value().scalar_value() == 11);
}

TEST_CASE("matmul gradient of sum equals ones times b transposed") {
  std::mt19937_64 rng(7);
  Tensor av = randn(rng, {5, 7});
  Tensor bv = randn(rng, {7, 3});
  Tape t;
  Var a = t.leaf(av);
  Var b = t.leaf(bv);
  Var loss = sum_all(matmul(a, b));
  t.backward(loss);
  Tensor ga = t.grad(a);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) {
      double want = 0.0;
      for (std::size_t k = 0; k < 3; ++k) want += bv.at(j, k);
      CHECK(ga.at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  const double err = fd(av, [&](Tape& tp, Var x) { return sum_all(matmul(x, tp.constant(bv))); });
  CHECK(err < 1e-6);
}

TEST_CASE("softmax symmetry and stabilization") {
  Tape t;
  Tensor s1 = softmax_rows(t.leaf(Tensor::from({2}, {0, 0}))).value();
  CHECK(s1[0] == doctest::Approx(0.5).epsilon(1e-12));
  Tensor s2 = softmax_rows(t.leaf(Tensor::from({2}, {1000, 1000}))).value();
  CHECK(s2.all_finite());
  CHECK(s2[0] == doctest::Approx(0.5).epsilon(1e-12));
  Tensor s3 = softmax_rows(t.leaf(Tensor::from({2}, {std::log(2.0), 0}))).value();
  CHECK(s3[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(s3[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("topk examples") {
  Tape t;
  TopK a = topk(t.leaf(Tensor::from({3}, {0.1, 0.9, 0.5})), 2);
  CHECK(a.indices == std::vector<std::size_t>{1, 2});
  CHECK(a.values.value()[0] == 0.9);
  CHECK(a.values.value()[1] == 0.5);

  TopK full = topk(t.leaf(Tensor::from({4}, {3, 1, 4, 1})), 4);
  CHECK(full.indices == std::vector<std::size_t>{2, 0, 1, 3});  // ties -> lowest index

  std::mt19937_64 rng(11);
  Tensor x = randn(rng, {100});
  TopK got = topk(t.leaf(x), 37);
  std::vector<std::pair<double, std::size_t>> pairs;
  for (std::size_t i = 0; i < 100; ++i) pairs.emplace_back(x[i], i);
  std::sort(pairs.begin(), pairs.end(), [](auto& l, auto& r) {
    return l.first != r.first ? l.first > r.first : l.second < r.second;
  });
  for (std::size_t i = 0; i < 37; ++i) CHECK(got.indices[i] == pairs[i].second);
  CHECK_THROWS_AS(topk(t.leaf(x), 0), ValueError);
  CHECK_THROWS_AS(topk(t.leaf(x), 101), ValueError);
}

TEST_CASE("cosine examples") {
  Tape t;
  CHECK(cosine(t.leaf(Tensor::from({2}, {1, 0})), t.leaf(Tensor::from({2}, {0, 1})))
            .value().scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine(t.leaf(Tensor::from({2}, {2, 0})), t.leaf(Tensor::from({2}, {5, 0})))
            .value().scalar_value() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cosine(t.leaf(Tensor::from({2}, {1, 1})), t.leaf(Tensor::from({2}, {1, 0})))
            .value().scalar_value() == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
  // zero vector -> 0 by convention
  CHECK(cosine(t.leaf(Tensor::from({2}, {0, 0})), t.leaf(Tensor::from({2}, {1, 0})))
            .value().scalar_value() == 0.0);
}

TEST_CASE("activation examples") {
  Tape t;
  CHECK(tanh_op(t.leaf(Tensor::scalar(0.0))).value().scalar_value() == 0.0);
  CHECK(leaky_relu(t.leaf(Tensor::scalar(-1.0))).value().scalar_value() ==
        doctest::Approx(-0.01).epsilon(1e-15));
  // tanh'(0.3) = 1 - tanh^2(0.3)
  Tensor x = Tensor::scalar(0.3);
  Tape t2;
  Var v = t2.leaf(x);
  Var loss = sum_all(tanh_op(v));
  t2.backward(loss);
  const double want = 1.0 - std::tanh(0.3) * std::tanh(0.3);
  CHECK(t2.grad(v).scalar_value() == doctest::Approx(want).epsilon(1e-12));
  CHECK(fd(x, [](Tape& tp, Var y) { return sum_all(tanh_op(y)); }) < 1e-7);
}

TEST_CASE("backward basics") {
  std::mt19937_64 rng(3);
  Tensor xv = randn(rng, {4});
  Tape t;
  Var x = t.leaf(xv);
  t.backward(sum_all(x));
  Tensor g = t.grad(x);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == 1.0);

  Tape t2;
  Var y = t2.leaf(xv);
  t2.backward(dot(y, y));
  Tensor g2 = t2.grad(y);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g2[i] == doctest::Approx(2.0 * xv[i]).epsilon(1e-12));
}

TEST_CASE("second backward rejected, non-scalar loss rejected") {
  Tape t;
  Var x = t.leaf(Tensor::from({2}, {1, 2}));
  Var loss = sum_all(x);
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), ValueError);
  Tape t2;
  Var v = t2.leaf(Tensor::from({2}, {1, 2}));
  CHECK_THROWS_AS(t2.backward(v), ValueError);
}

TEST_CASE("log of non-positive input") {
  Tape t;
  CHECK_THROWS_AS(log_op(t.leaf(Tensor::from({2}, {1.0, 0.0}))), NumericError);
  CHECK_THROWS_AS(log_op(t.leaf(Tensor::from({1}, {-2.0}))), NumericError);
}

TEST_CASE("gradient of unreached node is zeros") {
  Tape t;
  Var x = t.leaf(Tensor::from({2}, {1, 2}));
  Var unused = t.leaf(Tensor::from({3}, {1, 2, 3}));
  t.backward(sum_all(x));
  Tensor g = t.grad(unused);
  CHECK(g.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("finite_diff_check anchors") {
  std::mt19937_64 rng(17);
  Tensor x = randn(rng, {6});
  CHECK(fd(x, [](Tape& t, Var v) { return dot(v, v); }) < 1e-7);

  Tensor logits = randn(rng, {4, 3});
  CHECK(fd(logits, [](Tape& t, Var v) {
          return softmax_cross_entropy(v, {0, 2, 1, 1});
        }) < 1e-5);

  Tensor q = randn(rng, {2, 4});
  Tensor pat = randn(rng, {6, 4});
  RelationMaps maps;
  maps.n_h = 1;
  maps.n_w = 6;
  maps.confident = {1, 0, 2, 0, 1, 0};
  maps.uncertain = {0, 1, 0, 0, 0, 1};
  CHECK(fd(q, [&](Tape& t, Var v) {
          return cre_loss(v, t.constant(pat), maps, {1, 1}, 0.25);
        }) < 1e-4);
}

TEST_CASE("composite graph parameter gradients") {
  // C=2, L=9, D=4: every parameter of the aggregation passes finite differences
  std::mt19937_64 rng(23);
  const std::size_t c = 2, l = 9, d = 4, k = 3;
  Tensor tok = randn(rng, {c, d});
  Tensor pat = randn(rng, {l, d});
  ParamSet gp = init_gcr_params(d, 77);
  RelationMaps maps;
  maps.n_h = 3;
  maps.n_w = 3;
  maps.confident = {1, 1, 0, 2, 0, 0, 0, 0, 1};
  maps.uncertain = {0, 0, 1, 0, 1, 0, 1, 0, 0};
  UncertainSet sel = kernel_search(maps, 3, 0.4);
  REQUIRE(!sel.flat.empty());

  for (const auto& [name, value] : gp.items()) {
    auto f = [&](const Tensor& xv) {
      ParamSet local = gp;
      local.get(name) = xv;
      Tape t;
      ParamVars pv(t, local);
      GcrOutput g = gcr_forward(t.constant(tok), t.constant(pat), pv, k);
      Var loss = add(add(cre_loss(g.q, t.constant(pat), maps, {1, 1}, 0.25),
                         ure_loss(g.q, t.constant(pat), sel, {1, 0})),
                     mct_loss(g.q));
      t.backward(loss);
      return std::make_pair(loss.value().scalar_value(), t.grad(pv.get(name)));
    };
    CHECK_MESSAGE(finite_diff_check(f, value, 1e-5) < 1e-4, name);
  }
}

TEST_CASE("elementwise op gradients") {
  std::mt19937_64 rng(31);
  Tensor x = randn(rng, {3, 4});
  CHECK(fd(x, [](Tape& t, Var v) { return sum_all(gelu(v)); }, 1e-4) < 1e-6);
  CHECK(fd(x, [](Tape& t, Var v) { return sum_all(softplus(v)); }) < 1e-6);
  CHECK(fd(x, [](Tape& t, Var v) { return sum_all(exp_op(v)); }) < 1e-6);
  CHECK(fd(x, [](Tape& t, Var v) { return logsumexp(v); }) < 1e-6);
  // weight the rows so the probe is not constant (softmax rows sum to one)
  const Tensor w = randn(rng, {3, 4});
  CHECK(fd(x, [&](Tape& t, Var v) { return sum_all(mul(softmax_rows(v), t.constant(w))); }) <
        1e-6);
  Tensor g = randn(rng, {4});
  Tensor b = randn(rng, {4});
  CHECK(fd(x, [&](Tape& t, Var v) {
          return sum_all(mul(layer_norm(v, t.leaf(g), t.leaf(b)), t.constant(w)));
        }) < 1e-5);
}
