#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tokendrive/nn/checkpoint.hpp"
#include "tokendrive/nn/encoder.hpp"

using namespace tokendrive;

namespace {

nn::EncoderConfig tiny_config(uint64_t seed) {
  nn::EncoderConfig cfg;
  cfg.cam_h = 8;
  cfg.cam_w = 16;
  cfg.cam_c = 2;
  cfg.bev_h = 8;
  cfg.bev_w = 8;
  cfg.bev_c = 3;
  cfg.c1 = 3;
  cfg.c2 = 4;
  cfg.pool1 = 2;
  cfg.pool2 = 2;
  cfg.patch = 2;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.layers = 4;
  cfg.ffn_mult = 2;
  cfg.seed = seed;
  return cfg;
}

Tensor3 random_tensor(int h, int w, int c, Rng& rng, double scale = 1.0) {
  Tensor3 t(h, w, c);
  for (auto& v : t.a) v = rng.uniform(-scale, scale);
  return t;
}

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (auto& v : m.a) v = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

TEST_SUITE("perception") {

TEST_CASE("branch stride arithmetic: 40x176x3 -> 10x44x32") {
  nn::EncoderConfig cfg;  // defaults
  const auto params = nn::make_encoder(cfg);
  Rng rng(1);
  const Tensor3 cam = random_tensor(40, 176, 3, rng);
  const Tensor3 out = nn::branch_forward(params.image, cam, cfg.pool1, cfg.pool2, nullptr);
  CHECK(out.h == 10);
  CHECK(out.w == 44);
  CHECK(out.c == 32);
}

TEST_CASE("paper-scale config reaches 40x176 after the first block") {
  // 160x704 input with block downsamples (4, 2)
  nn::EncoderConfig cfg;
  cfg.cam_h = 160;
  cfg.cam_w = 704;
  cfg.pool1 = 4;
  cfg.pool2 = 2;
  cfg.c1 = 4;  // keep the test light; channel widths do not affect shapes
  cfg.c2 = 4;
  const auto params = nn::make_encoder(cfg);
  Rng rng(2);
  const Tensor3 cam = random_tensor(160, 704, 3, rng, 0.1);
  nn::ConvBlockCache cache;
  const Tensor3 first = nn::conv_block_forward(params.image.c1, cam, cfg.pool1, &cache);
  CHECK(first.h == 40);
  CHECK(first.w == 176);
  const Tensor3 second = nn::conv_block_forward(params.image.c2, first, cfg.pool2, nullptr);
  CHECK(second.h == 20);
  CHECK(second.w == 88);
}

TEST_CASE("all-zero input with zero bias gives all-zero branch output") {
  auto cfg = tiny_config(3);
  auto params = nn::make_encoder(cfg);
  std::fill(params.image.c1.b.begin(), params.image.c1.b.end(), 0.0);
  std::fill(params.image.c2.b.begin(), params.image.c2.b.end(), 0.0);
  const Tensor3 zero(cfg.cam_h, cfg.cam_w, cfg.cam_c);
  const Tensor3 out = nn::branch_forward(params.image, zero, cfg.pool1, cfg.pool2, nullptr);
  for (double v : out.a) CHECK(v == 0.0);
}

TEST_CASE("cross-modal attention: 2 tokens, identity projections, equal values") {
  nn::FusionParams p;
  p.wq = Mat(1, 1);
  p.wk = Mat(1, 1);
  p.wv = Mat(1, 1);
  p.m1_w = Mat(1, 1);
  p.m2_w = Mat(1, 1);
  p.wq(0, 0) = p.wk(0, 0) = p.wv(0, 0) = 1.0;
  p.m1_w(0, 0) = p.m2_w(0, 0) = 1.0;
  p.m1_b = {0.0};
  p.m2_b = {0.0};
  Tensor3 f_im(1, 1, 1), f_li(1, 1, 1);
  f_im.at(0, 0, 0) = 1.0;
  f_li.at(0, 0, 0) = 1.0;
  Tensor3 out_im, out_li;
  nn::FusionCache cache;
  nn::fusion_forward(p, f_im, f_li, out_im, out_li, &cache);
  // softmax of equal scores is uniform, attention output equals the values
  CHECK(cache.attn(0, 0) == doctest::Approx(0.5));
  CHECK(cache.attn(0, 1) == doctest::Approx(0.5));
  CHECK(cache.attn_out(0, 0) == doctest::Approx(1.0));
  CHECK(cache.attn_out(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("attention weight rows sum to one") {
  Rng rng(12);
  const int c = 4;
  nn::FusionParams p;
  p.wq = random_mat(c, c, rng);
  p.wk = random_mat(c, c, rng);
  p.wv = random_mat(c, c, rng);
  p.m1_w = random_mat(c, c, rng);
  p.m2_w = random_mat(c, c, rng);
  p.m1_b.assign(c, 0.1);
  p.m2_b.assign(c, -0.1);
  const Tensor3 f_im = random_tensor(2, 3, c, rng);
  const Tensor3 f_li = random_tensor(2, 2, c, rng);
  Tensor3 out_im, out_li;
  nn::FusionCache cache;
  nn::fusion_forward(p, f_im, f_li, out_im, out_li, &cache);
  for (int i = 0; i < cache.attn.rows; ++i) {
    double sum = 0;
    for (int j = 0; j < cache.attn.cols; ++j) {
      CHECK(cache.attn(i, j) >= 0.0);
      sum += cache.attn(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(out_im.h == f_im.h);
  CHECK(out_li.c == c);
}

TEST_CASE("fusion matches the straight-line dense oracle to 1e-12") {
  Rng rng(77);
  const int c = 4;
  nn::FusionParams p;
  p.wq = random_mat(c, c, rng);
  p.wk = random_mat(c, c, rng);
  p.wv = random_mat(c, c, rng);
  p.m1_w = random_mat(c, c, rng);
  p.m2_w = random_mat(c, c, rng);
  p.m1_b = {0.3, -0.2, 0.05, 0.0};
  p.m2_b = {-0.1, 0.4, 0.0, 0.2};
  // 6 image + 4 lidar tokens
  const Tensor3 f_im = random_tensor(2, 3, c, rng);
  const Tensor3 f_li = random_tensor(2, 2, c, rng);
  Tensor3 out_im, out_li;
  nn::fusion_forward(p, f_im, f_li, out_im, out_li, nullptr);

  Mat fim(6, c), fli(4, c);
  std::copy(f_im.a.begin(), f_im.a.end(), fim.a.begin());
  std::copy(f_li.a.begin(), f_li.a.end(), fli.a.begin());
  const auto naive =
      oracles::naive_fusion(fim, fli, p.wq, p.wk, p.wv, p.m1_w, p.m1_b, p.m2_w, p.m2_b);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < c; ++j)
      CHECK(out_im.a[i * c + j] == doctest::Approx(naive.out_im(i, j)).epsilon(1e-12));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < c; ++j)
      CHECK(out_li.a[i * c + j] == doctest::Approx(naive.out_li(i, j)).epsilon(1e-12));
}

TEST_CASE("tokenize pads 20x88 to 32x96 and yields 12 tokens") {
  nn::EncoderConfig cfg;
  cfg.cam_h = 80;   // -> 20x88 after /4
  cfg.cam_w = 352;
  cfg.bev_h = 64;
  cfg.bev_w = 64;
  const auto params = nn::make_encoder(cfg);
  Rng rng(4);
  const Tensor3 f_im = random_tensor(20, 88, cfg.c2, rng);
  const Tensor3 f_li = random_tensor(16, 16, cfg.c2, rng);
  const auto jt = nn::tokenize(params, f_im, f_li, nullptr);
  // ceil(20/16) * ceil(88/16) = 2 * 6 = 12 image tokens, 1 bev token
  int image_tokens = 0;
  for (int s : jt.segment) image_tokens += s == 0;
  CHECK(image_tokens == 12);
  CHECK(jt.tokens.rows == 13);
  CHECK(jt.tokens.cols == cfg.dim);
}

TEST_CASE("positional embedding separates identical patches") {
  auto cfg = tiny_config(9);
  const auto params = nn::make_encoder(cfg);
  // identical content in every patch
  Tensor3 f_im(4, 4, cfg.c2), f_li(2, 2, cfg.c2);
  for (int i = 0; i < f_im.h; ++i)
    for (int j = 0; j < f_im.w; ++j)
      for (int ch = 0; ch < f_im.c; ++ch) f_im.at(i, j, ch) = 0.25 * ch;
  const auto jt = nn::tokenize(params, f_im, f_li, nullptr);
  // patches (0,0) and (0,1) share content and segment, so only PE differs
  bool differ = false;
  for (int j = 0; j < cfg.dim; ++j)
    if (jt.tokens(0, j) != jt.tokens(1, j)) differ = true;
  CHECK(differ);
  const auto pe00 = nn::positional_embedding(0, 0, cfg.dim);
  const auto pe01 = nn::positional_embedding(0, 1, cfg.dim);
  for (int j = 0; j < cfg.dim; ++j)
    CHECK(jt.tokens(0, j) - jt.tokens(1, j) ==
          doctest::Approx(pe00[j] - pe01[j]).epsilon(1e-12));
}

TEST_CASE("image and BEV tokens of the same content differ by SE(0) - SE(1)") {
  auto cfg = tiny_config(10);
  cfg.cam_h = 8;
  cfg.cam_w = 8;  // same spatial layout for both modalities
  auto params = nn::make_encoder(cfg);
  params.patch_proj_lidar = params.patch_proj_image;  // equal projections
  params.patch_bias_lidar = params.patch_bias_image;
  Rng rng(6);
  for (auto& v : params.segment_embed.a) v = rng.uniform(-0.5, 0.5);
  const Tensor3 content = random_tensor(2, 2, cfg.c2, rng);
  const auto jt = nn::tokenize(params, content, content, nullptr);
  REQUIRE(jt.tokens.rows == 2);
  for (int j = 0; j < cfg.dim; ++j) {
    const double diff = jt.tokens(0, j) - jt.tokens(1, j);
    CHECK(diff ==
          doctest::Approx(params.segment_embed(0, j) - params.segment_embed(1, j)).epsilon(1e-12));
  }
}

TEST_CASE("encoder with zero-output weights is the identity") {
  auto cfg = tiny_config(11);
  auto params = nn::make_encoder(cfg);
  for (auto& l : params.layers) {
    l.wo.zero();
    std::fill(l.bo.begin(), l.bo.end(), 0.0);
    l.ff2.zero();
    std::fill(l.fb2.begin(), l.fb2.end(), 0.0);
  }
  Rng rng(8);
  const Mat tokens = random_mat(5, cfg.dim, rng);
  const Mat out = nn::encode_tokens(params, tokens, nullptr);
  for (size_t i = 0; i < tokens.a.size(); ++i) CHECK(out.a[i] == doctest::Approx(tokens.a[i]));
}

TEST_CASE("encoder is permutation equivariant") {
  auto cfg = tiny_config(13);
  const auto params = nn::make_encoder(cfg);
  Rng rng(14);
  Mat tokens = random_mat(5, cfg.dim, rng);
  const Mat out = nn::encode_tokens(params, tokens, nullptr);
  // swap tokens 1 and 3
  Mat permuted = tokens;
  for (int j = 0; j < cfg.dim; ++j) std::swap(permuted(1, j), permuted(3, j));
  const Mat out_p = nn::encode_tokens(params, permuted, nullptr);
  for (int j = 0; j < cfg.dim; ++j) {
    CHECK(out_p(1, j) == doctest::Approx(out(3, j)).epsilon(1e-12));
    CHECK(out_p(3, j) == doctest::Approx(out(1, j)).epsilon(1e-12));
    CHECK(out_p(0, j) == doctest::Approx(out(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("encoder output matches a small dense recomputation") {
  // N = 3, D = 4, one layer, one head: recompute by hand-rolled loops
  nn::EncoderConfig cfg = tiny_config(21);
  cfg.dim = 4;
  cfg.heads = 1;
  cfg.layers = 1;
  cfg.ffn_mult = 2;
  const auto params = nn::make_encoder(cfg);
  Rng rng(22);
  const Mat x = random_mat(3, 4, rng);
  const Mat got = nn::encode_tokens(params, x, nullptr);

  // naive recomputation
  const auto& l = params.layers[0];
  auto layernorm = [](const Mat& m) {
    Mat y(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i) {
      double mean = 0, var = 0;
      for (int j = 0; j < m.cols; ++j) mean += m(i, j);
      mean /= m.cols;
      for (int j = 0; j < m.cols; ++j) var += (m(i, j) - mean) * (m(i, j) - mean);
      var /= m.cols;
      for (int j = 0; j < m.cols; ++j) y(i, j) = (m(i, j) - mean) / std::sqrt(var + 1e-5);
    }
    return y;
  };
  auto linear = [](const Mat& x2, const Mat& w, const std::vector<double>& b) {
    Mat y(x2.rows, w.cols);
    for (int i = 0; i < x2.rows; ++i)
      for (int j = 0; j < w.cols; ++j) {
        double s = b[j];
        for (int k = 0; k < x2.cols; ++k) s += x2(i, k) * w(k, j);
        y(i, j) = s;
      }
    return y;
  };
  const Mat ln1 = layernorm(x);
  const Mat q = linear(ln1, l.wq, l.bq), k = linear(ln1, l.wk, l.bk), v = linear(ln1, l.wv, l.bv);
  Mat attn(3, 3);
  for (int i = 0; i < 3; ++i) {
    double mx = -1e300;
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int d = 0; d < 4; ++d) s += q(i, d) * k(j, d);
      attn(i, j) = s / 2.0;  // sqrt(d_head) = 2
      mx = std::max(mx, attn(i, j));
    }
    double sum = 0;
    for (int j = 0; j < 3; ++j) {
      attn(i, j) = std::exp(attn(i, j) - mx);
      sum += attn(i, j);
    }
    for (int j = 0; j < 3; ++j) attn(i, j) /= sum;
  }
  Mat ctx(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int d = 0; d < 4; ++d) {
      double s = 0;
      for (int j = 0; j < 3; ++j) s += attn(i, j) * v(j, d);
      ctx(i, d) = s;
    }
  Mat x_mid = linear(ctx, l.wo, l.bo);
  for (size_t i = 0; i < x_mid.a.size(); ++i) x_mid.a[i] += x.a[i];
  const Mat ln2 = layernorm(x_mid);
  Mat hidden = linear(ln2, l.ff1, l.fb1);
  for (auto& h : hidden.a) h = std::tanh(h);
  Mat expect = linear(hidden, l.ff2, l.fb2);
  for (size_t i = 0; i < expect.a.size(); ++i) expect.a[i] += x_mid.a[i];

  for (size_t i = 0; i < expect.a.size(); ++i)
    CHECK(got.a[i] == doctest::Approx(expect.a[i]).epsilon(1e-12));
}

TEST_CASE("encode_frame is deterministic") {
  auto cfg = tiny_config(31);
  const auto params = nn::make_encoder(cfg);
  Rng rng(32);
  const Tensor3 cam = random_tensor(cfg.cam_h, cfg.cam_w, cfg.cam_c, rng);
  const Tensor3 bev = random_tensor(cfg.bev_h, cfg.bev_w, cfg.bev_c, rng);
  const auto a = nn::encode_frame(params, cam, bev, nullptr);
  const auto b = nn::encode_frame(params, cam, bev, nullptr);
  CHECK(a.pooled == b.pooled);
  CHECK(a.joint.tokens.a == b.joint.tokens.a);
}

TEST_CASE("gradient checks per stage (finite differences)") {
  for (uint64_t seed : {101ull, 202ull}) {
    Rng rng(seed);

    SUBCASE("conv block") {
      auto cfg = tiny_config(seed);
      auto params = nn::make_encoder(cfg);
      const Tensor3 in = random_tensor(6, 8, cfg.cam_c, rng);
      const Tensor3 w = random_tensor(3, 4, cfg.c1, rng);  // loss weights
      auto loss = [&] {
        const Tensor3 out = nn::conv_block_forward(params.image.c1, in, 2, nullptr);
        double l = 0;
        for (size_t i = 0; i < out.a.size(); ++i) l += out.a[i] * w.a[i];
        return l;
      };
      auto grads = nn::make_like(params);
      nn::ConvBlockCache cache;
      nn::conv_block_forward(params.image.c1, in, 2, &cache);
      Tensor3 dout = w;
      nn::conv_block_backward(params.image.c1, cache, 2, dout, grads.image.c1);

      std::vector<nn::ParamRef> prefs{{"w", &params.image.c1.w.a, {}, true},
                                      {"b", &params.image.c1.b, {}, true}};
      std::vector<nn::ParamRef> grefs{{"w", &grads.image.c1.w.a, {}, true},
                                      {"b", &grads.image.c1.b, {}, true}};
      const auto r = oracles::finite_difference_check(prefs, grefs, loss, seed);
      CHECK(r.max_rel < 1e-4);
    }

    SUBCASE("fusion") {
      const int c = 4;
      nn::FusionParams p;
      p.wq = random_mat(c, c, rng);
      p.wk = random_mat(c, c, rng);
      p.wv = random_mat(c, c, rng);
      p.m1_w = random_mat(c, c, rng);
      p.m2_w = random_mat(c, c, rng);
      p.m1_b.assign(c, 0.05);
      p.m2_b.assign(c, -0.05);
      const Tensor3 f_im = random_tensor(2, 3, c, rng);
      const Tensor3 f_li = random_tensor(2, 2, c, rng);
      const Tensor3 w_im = random_tensor(2, 3, c, rng);
      const Tensor3 w_li = random_tensor(2, 2, c, rng);
      auto loss = [&] {
        Tensor3 oi, ol;
        nn::fusion_forward(p, f_im, f_li, oi, ol, nullptr);
        double l = 0;
        for (size_t i = 0; i < oi.a.size(); ++i) l += oi.a[i] * w_im.a[i];
        for (size_t i = 0; i < ol.a.size(); ++i) l += ol.a[i] * w_li.a[i];
        return l;
      };
      nn::FusionParams g = p;
      g.wq.zero();
      g.wk.zero();
      g.wv.zero();
      g.m1_w.zero();
      g.m2_w.zero();
      std::fill(g.m1_b.begin(), g.m1_b.end(), 0.0);
      std::fill(g.m2_b.begin(), g.m2_b.end(), 0.0);
      nn::FusionCache cache;
      Tensor3 oi, ol;
      nn::fusion_forward(p, f_im, f_li, oi, ol, &cache);
      nn::fusion_backward(p, cache, w_im, w_li, g, nullptr, nullptr);

      std::vector<nn::ParamRef> prefs{
          {"wq", &p.wq.a, {}, true},   {"wk", &p.wk.a, {}, true},   {"wv", &p.wv.a, {}, true},
          {"m1w", &p.m1_w.a, {}, true}, {"m1b", &p.m1_b, {}, true}, {"m2w", &p.m2_w.a, {}, true},
          {"m2b", &p.m2_b, {}, true}};
      std::vector<nn::ParamRef> grefs{
          {"wq", &g.wq.a, {}, true},   {"wk", &g.wk.a, {}, true},   {"wv", &g.wv.a, {}, true},
          {"m1w", &g.m1_w.a, {}, true}, {"m1b", &g.m1_b, {}, true}, {"m2w", &g.m2_w.a, {}, true},
          {"m2b", &g.m2_b, {}, true}};
      const auto r = oracles::finite_difference_check(prefs, grefs, loss, seed);
      CHECK(r.max_rel < 1e-4);
    }

    SUBCASE("full pipeline: branches, fusion, tokenizer, encoder, pooled loss") {
      auto cfg = tiny_config(seed + 5);
      auto params = nn::make_encoder(cfg);
      const Tensor3 cam = random_tensor(cfg.cam_h, cfg.cam_w, cfg.cam_c, rng, 0.5);
      const Tensor3 bev = random_tensor(cfg.bev_h, cfg.bev_w, cfg.bev_c, rng, 0.5);
      std::vector<double> w(cfg.dim);
      for (auto& v : w) v = rng.uniform(-1, 1);
      auto loss = [&] {
        const auto enc = nn::encode_frame(params, cam, bev, nullptr);
        double l = 0;
        for (int j = 0; j < cfg.dim; ++j) l += w[j] * enc.pooled[j];
        return l;
      };
      auto grads = nn::make_like(params);
      nn::EncodeCache cache;
      nn::encode_frame(params, cam, bev, &cache);
      nn::encode_frame_backward(params, cache, w, nullptr, grads);
      const auto r = oracles::finite_difference_check(collect_params(params),
                                                      collect_params(grads), loss, seed, 24);
      CHECK(r.max_rel < 1e-4);
    }

    SUBCASE("fusion after block 1 (config variant)") {
      auto cfg = tiny_config(seed + 9);
      cfg.fuse_after_block = 1;
      auto params = nn::make_encoder(cfg);
      const Tensor3 cam = random_tensor(cfg.cam_h, cfg.cam_w, cfg.cam_c, rng, 0.5);
      const Tensor3 bev = random_tensor(cfg.bev_h, cfg.bev_w, cfg.bev_c, rng, 0.5);
      std::vector<double> w(cfg.dim);
      for (auto& v : w) v = rng.uniform(-1, 1);
      auto loss = [&] {
        const auto enc = nn::encode_frame(params, cam, bev, nullptr);
        double l = 0;
        for (int j = 0; j < cfg.dim; ++j) l += w[j] * enc.pooled[j];
        return l;
      };
      auto grads = nn::make_like(params);
      nn::EncodeCache cache;
      nn::encode_frame(params, cam, bev, &cache);
      nn::encode_frame_backward(params, cache, w, nullptr, grads);
      const auto r = oracles::finite_difference_check(collect_params(params),
                                                      collect_params(grads), loss, seed, 16);
      CHECK(r.max_rel < 1e-4);
    }
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradient") {
  auto cfg = tiny_config(55);
  auto params = nn::make_encoder(cfg);
  Rng rng(56);
  const Tensor3 cam = random_tensor(cfg.cam_h, cfg.cam_w, cfg.cam_c, rng);
  const Tensor3 bev = random_tensor(cfg.bev_h, cfg.bev_w, cfg.bev_c, rng);
  auto grads = nn::make_like(params);
  nn::EncodeCache cache;
  nn::encode_frame(params, cam, bev, &cache);
  const std::vector<double> zero(cfg.dim, 0.0);
  nn::encode_frame_backward(params, cache, zero, nullptr, grads);
  for (const auto& ref : collect_params(grads))
    for (double v : *ref.data) CHECK(v == 0.0);
}

TEST_CASE("gradient of a sum of upstreams is the sum of gradients") {
  auto cfg = tiny_config(66);
  auto params = nn::make_encoder(cfg);
  Rng rng(67);
  const Tensor3 cam = random_tensor(cfg.cam_h, cfg.cam_w, cfg.cam_c, rng);
  const Tensor3 bev = random_tensor(cfg.bev_h, cfg.bev_w, cfg.bev_c, rng);
  std::vector<double> u1(cfg.dim), u2(cfg.dim), u12(cfg.dim);
  for (int j = 0; j < cfg.dim; ++j) {
    u1[j] = rng.uniform(-1, 1);
    u2[j] = rng.uniform(-1, 1);
    u12[j] = u1[j] + u2[j];
  }
  nn::EncodeCache cache;
  nn::encode_frame(params, cam, bev, &cache);
  auto g1 = nn::make_like(params), g2 = nn::make_like(params), g12 = nn::make_like(params);
  nn::encode_frame_backward(params, cache, u1, nullptr, g1);
  nn::encode_frame_backward(params, cache, u2, nullptr, g2);
  nn::encode_frame_backward(params, cache, u12, nullptr, g12);
  auto r1 = collect_params(g1), r2 = collect_params(g2), r12 = collect_params(g12);
  for (size_t t = 0; t < r1.size(); ++t)
    for (size_t i = 0; i < r1[t].data->size(); ++i)
      CHECK((*r12[t].data)[i] ==
            doctest::Approx((*r1[t].data)[i] + (*r2[t].data)[i]).epsilon(1e-9));
}

TEST_CASE("checkpoint save/load restores every tensor") {
  auto cfg = tiny_config(77);
  auto params = nn::make_encoder(cfg);
  const std::string path = "td_test_ckpt.bin";
  nn::save_checkpoint(path, collect_params(params));
  auto other = nn::make_encoder(cfg);
  Rng rng(78);
  for (auto& ref : collect_params(other))
    for (auto& v : *ref.data) v = rng.uniform(-1, 1);
  nn::load_checkpoint(path, collect_params(other));
  auto a = collect_params(params), b = collect_params(other);
  for (size_t t = 0; t < a.size(); ++t) CHECK(*a[t].data == *b[t].data);
  std::remove(path.c_str());
}

}  // TEST_SUITE
