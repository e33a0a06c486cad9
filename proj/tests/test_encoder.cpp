#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "more/encoder.hpp"

using namespace more;

TEST_CASE("config validation") {
  EncoderConfig bad{60, 8, 32, 2, 4, 3};  // 60 not divisible by 8
  CHECK_THROWS_AS(bad.validate(), ValueError);
  EncoderConfig bad2{64, 8, 30, 2, 4, 3};  // 30 not divisible by 4 heads
  CHECK_THROWS_AS(bad2.validate(), ValueError);
  EncoderConfig ok{64, 8, 32, 2, 4, 3};
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.num_patches() == 64);
  CHECK(ok.patch_dim() == 192);
}

TEST_CASE("init determinism and shapes") {
  EncoderConfig cfg{64, 8, 32, 2, 4, 3};
  ParamSet a = init_encoder_params(cfg, 42);
  ParamSet b = init_encoder_params(cfg, 42);
  REQUIRE(a.count() == b.count());
  for (std::size_t i = 0; i < a.count(); ++i) {
    CHECK(a.items()[i].first == b.items()[i].first);
    const Tensor& ta = a.items()[i].second;
    const Tensor& tb = b.items()[i].second;
    REQUIRE(ta.size() == tb.size());
    for (std::size_t j = 0; j < ta.size(); ++j) CHECK(ta[j] == tb[j]);
  }
  ParamSet c = init_encoder_params(cfg, 43);
  bool any_diff = false;
  for (std::size_t j = 0; j < a.get("enc.patch_proj.w").size(); ++j)
    any_diff = any_diff || a.get("enc.patch_proj.w")[j] != c.get("enc.patch_proj.w")[j];
  CHECK(any_diff);

  CHECK(a.get("enc.cls_tokens").shape() == Shape{3, 32});
  CHECK(a.get("enc.pos_emb").shape() == Shape{64, 32});
  CHECK(a.get("enc.patch_proj.w").shape() == Shape{192, 32});
}

TEST_CASE("parameter count matches hand formula") {
  EncoderConfig cfg{64, 8, 32, 2, 4, 3};
  ParamSet p = init_encoder_params(cfg, 1);
  const std::size_t d = 32, pd = 192, l = 64, c = 3;
  const std::size_t per_block =
      2 * (d + d)            // two layer norms, gamma + beta
      + 4 * (d * d + d)      // wq wk wv wo with biases
      + (d * 4 * d + 4 * d)  // mlp in
      + (4 * d * d + d);     // mlp out
  const std::size_t want = (pd * d + d)  // patch projection
                           + l * d       // positions
                           + c * d       // class tokens
                           + 2 * per_block;
  CHECK(p.scalar_count() == want);
}

TEST_CASE("patchify single patch is a channel-major flatten") {
  Tape t;
  Tensor img(Shape{3, 8, 8});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  Tensor out = patchify(t.leaf(img), 8, 8).value();
  REQUIRE(out.shape() == Shape{1, 192});
  for (std::size_t i = 0; i < 192; ++i) CHECK(out[i] == static_cast<double>(i));
}

TEST_CASE("patchify orders patches TL TR BL BR") {
  Tape t;
  const std::size_t hw = 16 * 16;
  Tensor img(Shape{3, 16, 16});
  // mark each 8x8 quadrant with a distinct constant on channel 0
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x)
      img[y * 16 + x] = static_cast<double>((y / 8) * 2 + (x / 8) + 1);
  Tensor out = patchify(t.leaf(img), 16, 8).value();
  REQUIRE(out.shape() == Shape{4, 192});
  for (std::size_t p = 0; p < 4; ++p)
    CHECK(out.at(p, 0) == static_cast<double>(p + 1));
  (void)hw;
}

TEST_CASE("patchify round trip") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 1);
  Tensor img(Shape{3, 16, 16});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = nd(rng);
  const auto map = patchify_index_map(16, 8);
  Tape t;
  Tensor flat = patchify(t.leaf(img), 16, 8).value();
  Tensor back(Shape{3, 16, 16});
  for (std::size_t i = 0; i < map.size(); ++i) back[map[i]] = flat[i];
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);
}

TEST_CASE("encode output contract") {
  EncoderConfig cfg{32, 8, 16, 2, 4, 3};
  ParamSet p = init_encoder_params(cfg, 9);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0, 1);
  Tensor img(Shape{3, 32, 32});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = nd(rng);
  Tape t;
  ParamVars pv(t, p);
  TokenBundle out = encode(t.constant(img), cfg, pv);
  CHECK(out.class_tokens.value().shape() == Shape{3, 16});
  CHECK(out.patch_tokens.value().shape() == Shape{16, 16});
  CHECK(out.n_h == 4);
  CHECK(out.n_w == 4);
  CHECK(out.class_tokens.value().all_finite());
  CHECK(out.patch_tokens.value().all_finite());
}

TEST_CASE("zero depth is the identity stack") {
  EncoderConfig cfg{16, 8, 8, 0, 2, 2};
  ParamSet p = init_encoder_params(cfg, 3);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd(0, 1);
  Tensor img(Shape{3, 16, 16});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = nd(rng);
  Tape t;
  ParamVars pv(t, p);
  TokenBundle out = encode(t.constant(img), cfg, pv);

  // class tokens pass through untouched
  const Tensor& cls = p.get("enc.cls_tokens");
  for (std::size_t i = 0; i < cls.size(); ++i)
    CHECK(out.class_tokens.value()[i] == cls[i]);

  // patch tokens equal projected patches plus positions
  Tape t2;
  Tensor flat = patchify(t2.leaf(img), 16, 8).value();
  const Tensor& w = p.get("enc.patch_proj.w");
  const Tensor& b = p.get("enc.patch_proj.b");
  const Tensor& pos = p.get("enc.pos_emb");
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 8; ++j) {
      double want = b[j] + pos.at(r, j);
      for (std::size_t e = 0; e < flat.cols(); ++e) want += flat.at(r, e) * w.at(e, j);
      CHECK(out.patch_tokens.value().at(r, j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("encoder gradient vs finite differences") {
  EncoderConfig cfg{16, 8, 8, 1, 2, 2};
  ParamSet p = init_encoder_params(cfg, 21);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(0, 0.5);
  Tensor img(Shape{3, 16, 16});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = nd(rng);
  auto f = [&](const Tensor& xv) {
    Tape t;
    Var x = t.leaf(xv);
    ParamVars pv(t, p);
    Var loss = mean_all(encode(x, cfg, pv).class_tokens);
    t.backward(loss);
    return std::make_pair(loss.value().scalar_value(), t.grad(x));
  };
  CHECK(finite_diff_check(f, img, 1e-5) < 1e-4);
}
