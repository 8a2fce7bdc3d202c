#include "tokendrive/nn/encoder.hpp"

#include <cmath>

#include "tokendrive/rng.hpp"

namespace tokendrive::nn {

namespace {

constexpr double kLnEps = 1e-5;

void init_mat(Mat& m, int rows, int cols, int fan_in, Rng& rng) {
  m = Mat(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : m.a) v = rng.uniform(-bound, bound);
}

void init_vec(std::vector<double>& v, int n, int fan_in, Rng& rng) {
  v.assign(n, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : v) x = rng.uniform(-bound, bound);
}

Conv3x3 make_conv(int in_c, int out_c, Rng& rng) {
  Conv3x3 c;
  c.in_c = in_c;
  c.out_c = out_c;
  init_mat(c.w, out_c, in_c * 9, in_c * 9, rng);
  init_vec(c.b, out_c, in_c * 9, rng);
  return c;
}

void layernorm_forward(const Mat& x, LnCache& cache) {
  cache.y = Mat(x.rows, x.cols);
  cache.rstd.assign(x.rows, 0.0);
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x.row(i);
    double mean = 0.0;
    for (int j = 0; j < x.cols; ++j) mean += xr[j];
    mean /= x.cols;
    double var = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= x.cols;
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    cache.rstd[i] = rstd;
    double* yr = cache.y.row(i);
    for (int j = 0; j < x.cols; ++j) yr[j] = (xr[j] - mean) * rstd;
  }
}

// dx for parameter-free layer normalization.
void layernorm_backward(const LnCache& cache, const Mat& dy, Mat& dx) {
  const int rows = cache.y.rows, cols = cache.y.cols;
  if (dx.rows != rows || dx.cols != cols) dx = Mat(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const double* yr = cache.y.row(i);
    const double* dyr = dy.row(i);
    double mean_dy = 0.0, mean_dyy = 0.0;
    for (int j = 0; j < cols; ++j) {
      mean_dy += dyr[j];
      mean_dyy += dyr[j] * yr[j];
    }
    mean_dy /= cols;
    mean_dyy /= cols;
    double* dxr = dx.row(i);
    for (int j = 0; j < cols; ++j)
      dxr[j] = cache.rstd[i] * (dyr[j] - mean_dy - yr[j] * mean_dyy);
  }
}

void softmax_rows(Mat& m) {
  for (int i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    double mx = r[0];
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < m.cols; ++j) r[j] *= inv;
  }
}

// dscores given the softmax output p and dattn.
void softmax_backward_rows(const Mat& p, const Mat& dp, Mat& dscores) {
  if (dscores.rows != p.rows || dscores.cols != p.cols) dscores = Mat(p.rows, p.cols);
  for (int i = 0; i < p.rows; ++i) {
    const double* pr = p.row(i);
    const double* dpr = dp.row(i);
    double dot = 0.0;
    for (int j = 0; j < p.cols; ++j) dot += pr[j] * dpr[j];
    double* dr = dscores.row(i);
    for (int j = 0; j < p.cols; ++j) dr[j] = pr[j] * (dpr[j] - dot);
  }
}

Mat copy_rows(const Mat& src, int r0, int n) {
  Mat out(n, src.cols);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < src.cols; ++j) out(i, j) = src(r0 + i, j);
  return out;
}

void add_rows(Mat& dst, int r0, const Mat& src) {
  for (int i = 0; i < src.rows; ++i)
    for (int j = 0; j < src.cols; ++j) dst(r0 + i, j) += src(i, j);
}

void add_col_sums(std::vector<double>& acc, const Mat& m) {
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    for (int j = 0; j < m.cols; ++j) acc[j] += r[j];
  }
}

Mat flatten_map(const Tensor3& t) {
  Mat m(t.h * t.w, t.c);
  std::copy(t.a.begin(), t.a.end(), m.a.begin());
  return m;
}

Tensor3 unflatten_map(const Mat& m, int h, int w) {
  Tensor3 t(h, w, m.cols);
  std::copy(m.a.begin(), m.a.end(), t.a.begin());
  return t;
}

}  // namespace

void EncoderConfig::validate() const {
  if (dim % 4 != 0) throw ShapeMismatch("encoder dim must be divisible by 4");
  if (dim % heads != 0) throw ShapeMismatch("encoder dim must be divisible by heads");
  if (patch <= 0 || pool1 <= 0 || pool2 <= 0) throw ShapeMismatch("bad encoder config");
  const int p12 = pool1 * pool2;
  if (cam_h % p12 || cam_w % p12 || bev_h % p12 || bev_w % p12)
    throw ShapeMismatch("sensor dims must be divisible by the branch downsample factor");
}

EncoderParams make_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderParams p;
  p.cfg = cfg;
  Rng rng(cfg.seed ^ 0x7f4a7c15ull);
  p.image.c1 = make_conv(cfg.cam_c, cfg.c1, rng);
  p.image.c2 = make_conv(cfg.c1, cfg.c2, rng);
  p.lidar.c1 = make_conv(cfg.bev_c, cfg.c1, rng);
  p.lidar.c2 = make_conv(cfg.c1, cfg.c2, rng);

  const int fc = cfg.fusion_channels();
  init_mat(p.fusion.wq, fc, fc, fc, rng);
  init_mat(p.fusion.wk, fc, fc, fc, rng);
  init_mat(p.fusion.wv, fc, fc, fc, rng);
  init_mat(p.fusion.m1_w, fc, fc, fc, rng);
  init_mat(p.fusion.m2_w, fc, fc, fc, rng);
  init_vec(p.fusion.m1_b, fc, fc, rng);
  init_vec(p.fusion.m2_b, fc, fc, rng);

  const int patch_dim = cfg.patch * cfg.patch * cfg.c2;
  init_mat(p.patch_proj_image, patch_dim, cfg.dim, patch_dim, rng);
  init_mat(p.patch_proj_lidar, patch_dim, cfg.dim, patch_dim, rng);
  init_vec(p.patch_bias_image, cfg.dim, patch_dim, rng);
  init_vec(p.patch_bias_lidar, cfg.dim, patch_dim, rng);
  p.segment_embed = Mat(2, cfg.dim);  // starts at zero

  p.layers.resize(cfg.layers);
  for (auto& l : p.layers) {
    init_mat(l.wq, cfg.dim, cfg.dim, cfg.dim, rng);
    init_mat(l.wk, cfg.dim, cfg.dim, cfg.dim, rng);
    init_mat(l.wv, cfg.dim, cfg.dim, cfg.dim, rng);
    init_mat(l.wo, cfg.dim, cfg.dim, cfg.dim, rng);
    init_vec(l.bq, cfg.dim, cfg.dim, rng);
    init_vec(l.bk, cfg.dim, cfg.dim, rng);
    init_vec(l.bv, cfg.dim, cfg.dim, rng);
    init_vec(l.bo, cfg.dim, cfg.dim, rng);
    const int hidden = cfg.ffn_mult * cfg.dim;
    init_mat(l.ff1, cfg.dim, hidden, cfg.dim, rng);
    init_vec(l.fb1, hidden, cfg.dim, rng);
    init_mat(l.ff2, hidden, cfg.dim, hidden, rng);
    init_vec(l.fb2, cfg.dim, hidden, rng);
  }
  return p;
}

EncoderParams make_like(const EncoderParams& src) {
  EncoderParams p = src;
  auto refs = collect_params(p);
  zero_grads(refs);
  return p;
}

std::vector<ParamRef> collect_params(EncoderParams& p) {
  std::vector<ParamRef> refs;
  auto mat = [&](const std::string& name, Mat& m) {
    refs.push_back({name, &m.a, {m.rows, m.cols}, true});
  };
  auto vec = [&](const std::string& name, std::vector<double>& v) {
    refs.push_back({name, &v, {static_cast<int>(v.size())}, true});
  };
  auto branch = [&](const std::string& prefix, BranchParams& b) {
    mat(prefix + ".c1.w", b.c1.w);
    vec(prefix + ".c1.b", b.c1.b);
    mat(prefix + ".c2.w", b.c2.w);
    vec(prefix + ".c2.b", b.c2.b);
  };
  branch("enc.image", p.image);
  branch("enc.lidar", p.lidar);
  mat("enc.fusion.wq", p.fusion.wq);
  mat("enc.fusion.wk", p.fusion.wk);
  mat("enc.fusion.wv", p.fusion.wv);
  mat("enc.fusion.m1_w", p.fusion.m1_w);
  vec("enc.fusion.m1_b", p.fusion.m1_b);
  mat("enc.fusion.m2_w", p.fusion.m2_w);
  vec("enc.fusion.m2_b", p.fusion.m2_b);
  mat("enc.patch_proj_image", p.patch_proj_image);
  vec("enc.patch_bias_image", p.patch_bias_image);
  mat("enc.patch_proj_lidar", p.patch_proj_lidar);
  vec("enc.patch_bias_lidar", p.patch_bias_lidar);
  mat("enc.segment_embed", p.segment_embed);
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const std::string prefix = "enc.layer" + std::to_string(i);
    auto& l = p.layers[i];
    mat(prefix + ".wq", l.wq);
    vec(prefix + ".bq", l.bq);
    mat(prefix + ".wk", l.wk);
    vec(prefix + ".bk", l.bk);
    mat(prefix + ".wv", l.wv);
    vec(prefix + ".bv", l.bv);
    mat(prefix + ".wo", l.wo);
    vec(prefix + ".bo", l.bo);
    mat(prefix + ".ff1", l.ff1);
    vec(prefix + ".fb1", l.fb1);
    mat(prefix + ".ff2", l.ff2);
    vec(prefix + ".fb2", l.fb2);
  }
  return refs;
}

Tensor3 conv_block_forward(const Conv3x3& p, const Tensor3& in, int pool, ConvBlockCache* cache) {
  if (in.c != p.in_c) throw ShapeMismatch("conv: channel mismatch");
  if (in.h % pool || in.w % pool) throw ShapeMismatch("conv: dims not divisible by pool");
  Tensor3 act(in.h, in.w, p.out_c);
  for (int i = 0; i < in.h; ++i) {
    for (int j = 0; j < in.w; ++j) {
      for (int o = 0; o < p.out_c; ++o) {
        double s = p.b[o];
        const double* wrow = p.w.row(o);
        for (int ci = 0; ci < p.in_c; ++ci) {
          for (int di = 0; di < 3; ++di) {
            const int ii = i + di - 1;
            if (ii < 0 || ii >= in.h) continue;
            for (int dj = 0; dj < 3; ++dj) {
              const int jj = j + dj - 1;
              if (jj < 0 || jj >= in.w) continue;
              s += wrow[ci * 9 + di * 3 + dj] * in.at(ii, jj, ci);
            }
          }
        }
        act.at(i, j, o) = std::tanh(s);
      }
    }
  }
  Tensor3 out(in.h / pool, in.w / pool, p.out_c);
  const double inv = 1.0 / (pool * pool);
  for (int i = 0; i < out.h; ++i)
    for (int j = 0; j < out.w; ++j)
      for (int o = 0; o < p.out_c; ++o) {
        double s = 0.0;
        for (int a = 0; a < pool; ++a)
          for (int b = 0; b < pool; ++b) s += act.at(i * pool + a, j * pool + b, o);
        out.at(i, j, o) = s * inv;
      }
  if (cache) {
    cache->input = in;
    cache->tanh_out = std::move(act);
  }
  return out;
}

Tensor3 conv_block_backward(const Conv3x3& p, const ConvBlockCache& cache, int pool,
                            const Tensor3& dout, Conv3x3& grad) {
  const Tensor3& in = cache.input;
  const Tensor3& y = cache.tanh_out;
  Tensor3 din(in.h, in.w, in.c);
  const double inv = 1.0 / (pool * pool);
  // walk full-resolution cells; dpre = dout/pool^2 * (1 - tanh^2)
  for (int i = 0; i < y.h; ++i) {
    for (int j = 0; j < y.w; ++j) {
      for (int o = 0; o < p.out_c; ++o) {
        const double g = dout.at(i / pool, j / pool, o) * inv;
        if (g == 0.0) continue;
        const double yo = y.at(i, j, o);
        const double dpre = g * (1.0 - yo * yo);
        grad.b[o] += dpre;
        double* gw = grad.w.row(o);
        const double* wrow = p.w.row(o);
        for (int ci = 0; ci < p.in_c; ++ci) {
          for (int di = 0; di < 3; ++di) {
            const int ii = i + di - 1;
            if (ii < 0 || ii >= in.h) continue;
            for (int dj = 0; dj < 3; ++dj) {
              const int jj = j + dj - 1;
              if (jj < 0 || jj >= in.w) continue;
              const int idx = ci * 9 + di * 3 + dj;
              gw[idx] += dpre * in.at(ii, jj, ci);
              din.at(ii, jj, ci) += dpre * wrow[idx];
            }
          }
        }
      }
    }
  }
  return din;
}

Tensor3 branch_forward(const BranchParams& p, const Tensor3& in, int pool1, int pool2,
                       BranchCache* cache) {
  Tensor3 mid = conv_block_forward(p.c1, in, pool1, cache ? &cache->b1 : nullptr);
  return conv_block_forward(p.c2, mid, pool2, cache ? &cache->b2 : nullptr);
}

void fusion_forward(const FusionParams& p, const Tensor3& f_im, const Tensor3& f_li,
                    Tensor3& out_im, Tensor3& out_li, FusionCache* cache) {
  if (f_im.c != f_li.c || f_im.c != p.wq.rows) throw ShapeMismatch("fusion: channel mismatch");
  FusionCache local;
  FusionCache& cc = cache ? *cache : local;
  cc.n_im = f_im.h * f_im.w;
  cc.n_li = f_li.h * f_li.w;
  cc.c = f_im.c;
  cc.im_h = f_im.h;
  cc.im_w = f_im.w;
  cc.li_h = f_li.h;
  cc.li_w = f_li.w;

  const int n = cc.n_im + cc.n_li;
  cc.x = Mat(n, cc.c);
  std::copy(f_im.a.begin(), f_im.a.end(), cc.x.a.begin());
  std::copy(f_li.a.begin(), f_li.a.end(), cc.x.a.begin() + f_im.a.size());

  matmul(cc.x, p.wq, cc.q);
  matmul(cc.x, p.wk, cc.k);
  matmul(cc.x, p.wv, cc.v);
  matmul_nt(cc.q, cc.k, cc.attn);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cc.c));
  for (auto& s : cc.attn.a) s *= scale;
  softmax_rows(cc.attn);
  matmul(cc.attn, cc.v, cc.attn_out);

  Mat ao_im = copy_rows(cc.attn_out, 0, cc.n_im);
  Mat ao_li = copy_rows(cc.attn_out, cc.n_im, cc.n_li);
  matmul(ao_im, p.m2_w, cc.im_mlp);
  add_row_bias(cc.im_mlp, p.m2_b);
  matmul(ao_li, p.m1_w, cc.li_mlp);
  add_row_bias(cc.li_mlp, p.m1_b);
  layernorm_forward(cc.im_mlp, cc.im_ln);
  layernorm_forward(cc.li_mlp, cc.li_ln);

  out_im = Tensor3(f_im.h, f_im.w, cc.c);
  out_li = Tensor3(f_li.h, f_li.w, cc.c);
  for (size_t i = 0; i < out_im.a.size(); ++i) out_im.a[i] = f_im.a[i] + cc.im_ln.y.a[i];
  for (size_t i = 0; i < out_li.a.size(); ++i) out_li.a[i] = f_li.a[i] + cc.li_ln.y.a[i];
  check_finite(out_im.a, "fusion output (image)");
  check_finite(out_li.a, "fusion output (lidar)");
}

void fusion_backward(const FusionParams& p, const FusionCache& cc, const Tensor3& dout_im,
                     const Tensor3& dout_li, FusionParams& grad, Tensor3* din_im,
                     Tensor3* din_li) {
  const int n = cc.n_im + cc.n_li;
  Mat dx(n, cc.c);
  Mat d_im(cc.n_im, cc.c);
  std::copy(dout_im.a.begin(), dout_im.a.end(), d_im.a.begin());
  Mat d_li(cc.n_li, cc.c);
  std::copy(dout_li.a.begin(), dout_li.a.end(), d_li.a.begin());

  // residual
  add_rows(dx, 0, d_im);
  add_rows(dx, cc.n_im, d_li);

  Mat dim_mlp, dli_mlp;
  layernorm_backward(cc.im_ln, d_im, dim_mlp);
  layernorm_backward(cc.li_ln, d_li, dli_mlp);

  Mat ao_im = copy_rows(cc.attn_out, 0, cc.n_im);
  Mat ao_li = copy_rows(cc.attn_out, cc.n_im, cc.n_li);
  matmul_tn(ao_im, dim_mlp, grad.m2_w, true);
  add_col_sums(grad.m2_b, dim_mlp);
  matmul_tn(ao_li, dli_mlp, grad.m1_w, true);
  add_col_sums(grad.m1_b, dli_mlp);

  Mat dao(n, cc.c);
  Mat dao_im, dao_li;
  matmul_nt(dim_mlp, p.m2_w, dao_im);
  matmul_nt(dli_mlp, p.m1_w, dao_li);
  add_rows(dao, 0, dao_im);
  add_rows(dao, cc.n_im, dao_li);

  Mat dattn, dv;
  matmul_nt(dao, cc.v, dattn);
  matmul_tn(cc.attn, dao, dv);
  Mat dscores;
  softmax_backward_rows(cc.attn, dattn, dscores);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cc.c));
  for (auto& s : dscores.a) s *= scale;
  Mat dq, dk;
  matmul(dscores, cc.k, dq);
  matmul_tn(dscores, cc.q, dk);

  matmul_tn(cc.x, dq, grad.wq, true);
  matmul_tn(cc.x, dk, grad.wk, true);
  matmul_tn(cc.x, dv, grad.wv, true);
  Mat tmp;
  matmul_nt(dq, p.wq, tmp);
  for (size_t i = 0; i < dx.a.size(); ++i) dx.a[i] += tmp.a[i];
  matmul_nt(dk, p.wk, tmp);
  for (size_t i = 0; i < dx.a.size(); ++i) dx.a[i] += tmp.a[i];
  matmul_nt(dv, p.wv, tmp);
  for (size_t i = 0; i < dx.a.size(); ++i) dx.a[i] += tmp.a[i];

  if (din_im) {
    *din_im = Tensor3(cc.im_h, cc.im_w, cc.c);
    std::copy(dx.a.begin(), dx.a.begin() + din_im->a.size(), din_im->a.begin());
  }
  if (din_li) {
    *din_li = Tensor3(cc.li_h, cc.li_w, cc.c);
    std::copy(dx.a.begin() + static_cast<size_t>(cc.n_im) * cc.c, dx.a.end(),
              din_li->a.begin());
  }
}

std::vector<double> positional_embedding(int row, int col, int dim) {
  std::vector<double> pe(dim, 0.0);
  const int half = dim / 2;
  for (int i = 0; i < half / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / half);
    pe[2 * i] = std::sin(row * freq);
    pe[2 * i + 1] = std::cos(row * freq);
    pe[half + 2 * i] = std::sin(col * freq);
    pe[half + 2 * i + 1] = std::cos(col * freq);
  }
  return pe;
}

namespace {

Tensor3 pad_to_patch(const Tensor3& t, int patch) {
  const int ph = (t.h + patch - 1) / patch * patch;
  const int pw = (t.w + patch - 1) / patch * patch;
  if (ph == t.h && pw == t.w) return t;
  Tensor3 out(ph, pw, t.c);
  for (int i = 0; i < t.h; ++i)
    for (int j = 0; j < t.w; ++j)
      for (int c = 0; c < t.c; ++c) out.at(i, j, c) = t.at(i, j, c);
  return out;
}

Mat extract_patches(const Tensor3& padded, int patch) {
  const int pr = padded.h / patch;
  const int pc = padded.w / patch;
  Mat out(pr * pc, patch * patch * padded.c);
  for (int r = 0; r < pr; ++r) {
    for (int c = 0; c < pc; ++c) {
      double* row = out.row(r * pc + c);
      int idx = 0;
      for (int a = 0; a < patch; ++a)
        for (int b = 0; b < patch; ++b)
          for (int ch = 0; ch < padded.c; ++ch)
            row[idx++] = padded.at(r * patch + a, c * patch + b, ch);
    }
  }
  return out;
}

void scatter_patches(const Mat& dpatches, Tensor3& dpadded, int patch) {
  const int pc = dpadded.w / patch;
  for (int t = 0; t < dpatches.rows; ++t) {
    const int r = t / pc;
    const int c = t % pc;
    const double* row = dpatches.row(t);
    int idx = 0;
    for (int a = 0; a < patch; ++a)
      for (int b = 0; b < patch; ++b)
        for (int ch = 0; ch < dpadded.c; ++ch)
          dpadded.at(r * patch + a, c * patch + b, ch) += row[idx++];
  }
}

}  // namespace

JointTokens tokenize(const EncoderParams& p, const Tensor3& f_im, const Tensor3& f_li,
                     TokenizeCache* cache) {
  const int patch = p.cfg.patch;
  const int dim = p.cfg.dim;
  TokenizeCache local;
  TokenizeCache& cc = cache ? *cache : local;
  cc.padded_im = pad_to_patch(f_im, patch);
  cc.padded_li = pad_to_patch(f_li, patch);
  cc.patches_im = extract_patches(cc.padded_im, patch);
  cc.patches_li = extract_patches(cc.padded_li, patch);
  if (cc.patches_im.cols != p.patch_proj_image.rows)
    throw ShapeMismatch("tokenize: patch dim mismatch");

  Mat tok_im, tok_li;
  matmul(cc.patches_im, p.patch_proj_image, tok_im);
  add_row_bias(tok_im, p.patch_bias_image);
  matmul(cc.patches_li, p.patch_proj_lidar, tok_li);
  add_row_bias(tok_li, p.patch_bias_lidar);

  JointTokens jt;
  jt.tokens = Mat(tok_im.rows + tok_li.rows, dim);
  const int im_pc = cc.padded_im.w / patch;
  const int li_pc = cc.padded_li.w / patch;
  for (int t = 0; t < tok_im.rows; ++t) {
    const int r = t / im_pc, c = t % im_pc;
    const auto pe = positional_embedding(r, c, dim);
    for (int j = 0; j < dim; ++j)
      jt.tokens(t, j) = tok_im(t, j) + pe[j] + p.segment_embed(0, j);
    jt.segment.push_back(0);
    jt.positions.emplace_back(r, c);
  }
  for (int t = 0; t < tok_li.rows; ++t) {
    const int r = t / li_pc, c = t % li_pc;
    const auto pe = positional_embedding(r, c, dim);
    for (int j = 0; j < dim; ++j)
      jt.tokens(tok_im.rows + t, j) = tok_li(t, j) + pe[j] + p.segment_embed(1, j);
    jt.segment.push_back(1);
    jt.positions.emplace_back(r, c);
  }
  return jt;
}

void tokenize_backward(const EncoderParams& p, const TokenizeCache& cc, const Mat& dtokens,
                       EncoderParams& grad, Tensor3* din_im, Tensor3* din_li) {
  const int patch = p.cfg.patch;
  const int n_im = cc.patches_im.rows;
  const int n_li = cc.patches_li.rows;
  Mat dtok_im = copy_rows(dtokens, 0, n_im);
  Mat dtok_li = copy_rows(dtokens, n_im, n_li);

  for (int t = 0; t < n_im; ++t)
    for (int j = 0; j < dtokens.cols; ++j) grad.segment_embed(0, j) += dtok_im(t, j);
  for (int t = 0; t < n_li; ++t)
    for (int j = 0; j < dtokens.cols; ++j) grad.segment_embed(1, j) += dtok_li(t, j);

  matmul_tn(cc.patches_im, dtok_im, grad.patch_proj_image, true);
  add_col_sums(grad.patch_bias_image, dtok_im);
  matmul_tn(cc.patches_li, dtok_li, grad.patch_proj_lidar, true);
  add_col_sums(grad.patch_bias_lidar, dtok_li);

  if (din_im) {
    Mat dpatches;
    matmul_nt(dtok_im, p.patch_proj_image, dpatches);
    Tensor3 dpadded(cc.padded_im.h, cc.padded_im.w, cc.padded_im.c);
    scatter_patches(dpatches, dpadded, patch);
    *din_im = Tensor3(din_im->h, din_im->w, din_im->c);
    for (int i = 0; i < din_im->h; ++i)
      for (int j = 0; j < din_im->w; ++j)
        for (int c = 0; c < din_im->c; ++c) din_im->at(i, j, c) = dpadded.at(i, j, c);
  }
  if (din_li) {
    Mat dpatches;
    matmul_nt(dtok_li, p.patch_proj_lidar, dpatches);
    Tensor3 dpadded(cc.padded_li.h, cc.padded_li.w, cc.padded_li.c);
    scatter_patches(dpatches, dpadded, patch);
    *din_li = Tensor3(din_li->h, din_li->w, din_li->c);
    for (int i = 0; i < din_li->h; ++i)
      for (int j = 0; j < din_li->w; ++j)
        for (int c = 0; c < din_li->c; ++c) din_li->at(i, j, c) = dpadded.at(i, j, c);
  }
}

namespace {

Mat attn_layer_forward(const AttnLayerParams& p, const Mat& x, int heads, AttnLayerCache* cache) {
  AttnLayerCache local;
  AttnLayerCache& cc = cache ? *cache : local;
  const int n = x.rows, d = x.cols;
  const int dh = d / heads;
  cc.x_in = x;
  layernorm_forward(x, cc.ln1);
  matmul(cc.ln1.y, p.wq, cc.q);
  add_row_bias(cc.q, p.bq);
  matmul(cc.ln1.y, p.wk, cc.k);
  add_row_bias(cc.k, p.bk);
  matmul(cc.ln1.y, p.wv, cc.v);
  add_row_bias(cc.v, p.bv);

  cc.attn.assign(heads, Mat());
  cc.ctx = Mat(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    Mat& a = cc.attn[h];
    a = Mat(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int t = 0; t < dh; ++t) s += cc.q(i, off + t) * cc.k(j, off + t);
        a(i, j) = s * scale;
      }
    softmax_rows(a);
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < dh; ++t) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += a(i, j) * cc.v(j, off + t);
        cc.ctx(i, off + t) = s;
      }
  }

  Mat attn_proj;
  matmul(cc.ctx, p.wo, attn_proj);
  add_row_bias(attn_proj, p.bo);
  cc.x_mid = Mat(n, d);
  for (size_t i = 0; i < cc.x_mid.a.size(); ++i) cc.x_mid.a[i] = x.a[i] + attn_proj.a[i];

  layernorm_forward(cc.x_mid, cc.ln2);
  matmul(cc.ln2.y, p.ff1, cc.ffn_hidden);
  add_row_bias(cc.ffn_hidden, p.fb1);
  for (auto& v : cc.ffn_hidden.a) v = std::tanh(v);
  Mat ffn_out;
  matmul(cc.ffn_hidden, p.ff2, ffn_out);
  add_row_bias(ffn_out, p.fb2);
  Mat out(n, d);
  for (size_t i = 0; i < out.a.size(); ++i) out.a[i] = cc.x_mid.a[i] + ffn_out.a[i];
  return out;
}

Mat attn_layer_backward(const AttnLayerParams& p, const AttnLayerCache& cc, int heads,
                        const Mat& dout, AttnLayerParams& grad) {
  const int n = cc.x_in.rows, d = cc.x_in.cols;
  const int dh = d / heads;

  // FFN path
  Mat dffn_out = dout;
  matmul_tn(cc.ffn_hidden, dffn_out, grad.ff2, true);
  add_col_sums(grad.fb2, dffn_out);
  Mat dhidden;
  matmul_nt(dffn_out, p.ff2, dhidden);
  for (size_t i = 0; i < dhidden.a.size(); ++i) {
    const double y = cc.ffn_hidden.a[i];
    dhidden.a[i] *= 1.0 - y * y;
  }
  matmul_tn(cc.ln2.y, dhidden, grad.ff1, true);
  add_col_sums(grad.fb1, dhidden);
  Mat dln2y;
  matmul_nt(dhidden, p.ff1, dln2y);
  Mat dx_mid;
  layernorm_backward(cc.ln2, dln2y, dx_mid);
  for (size_t i = 0; i < dx_mid.a.size(); ++i) dx_mid.a[i] += dout.a[i];

  // attention path
  Mat dattn_proj = dx_mid;
  matmul_tn(cc.ctx, dattn_proj, grad.wo, true);
  add_col_sums(grad.bo, dattn_proj);
  Mat dctx;
  matmul_nt(dattn_proj, p.wo, dctx);

  Mat dq(n, d), dk(n, d), dv(n, d);
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    const Mat& a = cc.attn[h];
    Mat da(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int t = 0; t < dh; ++t) s += dctx(i, off + t) * cc.v(j, off + t);
        da(i, j) = s;
      }
    // dv_h = a^T * dctx_h
    for (int j = 0; j < n; ++j)
      for (int t = 0; t < dh; ++t) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += a(i, j) * dctx(i, off + t);
        dv(j, off + t) = s;
      }
    Mat dscores;
    softmax_backward_rows(a, da, dscores);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (auto& s : dscores.a) s *= scale;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < dh; ++t) {
        double sq = 0.0;
        for (int j = 0; j < n; ++j) sq += dscores(i, j) * cc.k(j, off + t);
        dq(i, off + t) = sq;
      }
    for (int j = 0; j < n; ++j)
      for (int t = 0; t < dh; ++t) {
        double sk = 0.0;
        for (int i = 0; i < n; ++i) sk += dscores(i, j) * cc.q(i, off + t);
        dk(j, off + t) = sk;
      }
  }

  matmul_tn(cc.ln1.y, dq, grad.wq, true);
  add_col_sums(grad.bq, dq);
  matmul_tn(cc.ln1.y, dk, grad.wk, true);
  add_col_sums(grad.bk, dk);
  matmul_tn(cc.ln1.y, dv, grad.wv, true);
  add_col_sums(grad.bv, dv);

  Mat dln1y, tmp;
  matmul_nt(dq, p.wq, dln1y);
  matmul_nt(dk, p.wk, tmp);
  for (size_t i = 0; i < dln1y.a.size(); ++i) dln1y.a[i] += tmp.a[i];
  matmul_nt(dv, p.wv, tmp);
  for (size_t i = 0; i < dln1y.a.size(); ++i) dln1y.a[i] += tmp.a[i];

  Mat dx;
  layernorm_backward(cc.ln1, dln1y, dx);
  for (size_t i = 0; i < dx.a.size(); ++i) dx.a[i] += dx_mid.a[i];
  return dx;
}

}  // namespace

Mat encode_tokens(const EncoderParams& p, const Mat& tokens, std::vector<AttnLayerCache>* caches) {
  if (tokens.cols != p.cfg.dim) throw ShapeMismatch("encode: token width mismatch");
  if (caches) caches->assign(p.layers.size(), AttnLayerCache{});
  Mat x = tokens;
  for (size_t i = 0; i < p.layers.size(); ++i)
    x = attn_layer_forward(p.layers[i], x, p.cfg.heads, caches ? &(*caches)[i] : nullptr);
  check_finite(x.a, "encoder output");
  return x;
}

Mat encode_tokens_backward(const EncoderParams& p, const std::vector<AttnLayerCache>& caches,
                           const Mat& dout, EncoderParams& grad) {
  Mat dx = dout;
  for (size_t i = p.layers.size(); i-- > 0;)
    dx = attn_layer_backward(p.layers[i], caches[i], p.cfg.heads, dx, grad.layers[i]);
  return dx;
}

FrameEncoding encode_frame(const EncoderParams& p, const Tensor3& camera, const Tensor3& bev,
                           EncodeCache* cache) {
  const EncoderConfig& cfg = p.cfg;
  if (camera.h != cfg.cam_h || camera.w != cfg.cam_w || camera.c != cfg.cam_c)
    throw ShapeMismatch("encode_frame: camera shape");
  if (bev.h != cfg.bev_h || bev.w != cfg.bev_w || bev.c != cfg.bev_c)
    throw ShapeMismatch("encode_frame: bev shape");

  EncodeCache local;
  EncodeCache& cc = cache ? *cache : local;
  Tensor3 im_map, li_map;
  if (cfg.fuse_after_block == 1) {
    Tensor3 im1 = conv_block_forward(p.image.c1, camera, cfg.pool1, cache ? &cc.image.b1 : nullptr);
    Tensor3 li1 = conv_block_forward(p.lidar.c1, bev, cfg.pool1, cache ? &cc.lidar.b1 : nullptr);
    Tensor3 fim, fli;
    fusion_forward(p.fusion, im1, li1, fim, fli, cache ? &cc.fusion : nullptr);
    im_map = conv_block_forward(p.image.c2, fim, cfg.pool2, cache ? &cc.image.b2 : nullptr);
    li_map = conv_block_forward(p.lidar.c2, fli, cfg.pool2, cache ? &cc.lidar.b2 : nullptr);
  } else {
    Tensor3 im2 = branch_forward(p.image, camera, cfg.pool1, cfg.pool2, cache ? &cc.image : nullptr);
    Tensor3 li2 = branch_forward(p.lidar, bev, cfg.pool1, cfg.pool2, cache ? &cc.lidar : nullptr);
    fusion_forward(p.fusion, im2, li2, im_map, li_map, cache ? &cc.fusion : nullptr);
  }

  FrameEncoding out;
  out.joint = tokenize(p, im_map, li_map, cache ? &cc.tokenize : nullptr);
  cc.encoded = encode_tokens(p, out.joint.tokens, cache ? &cc.layers : nullptr);
  out.joint.tokens = cc.encoded;

  out.pooled.assign(cfg.dim, 0.0);
  const int n = out.joint.tokens.rows;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cfg.dim; ++j) out.pooled[j] += out.joint.tokens(i, j);
  for (auto& v : out.pooled) v /= n;
  check_finite(out.pooled, "pooled encoding");
  return out;
}

void encode_frame_backward(const EncoderParams& p, const EncodeCache& cc,
                           const std::vector<double>& dpooled, const Mat* dtokens,
                           EncoderParams& grad) {
  const EncoderConfig& cfg = p.cfg;
  const int n = cc.encoded.rows;
  Mat denc(n, cfg.dim);
  if (!dpooled.empty()) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < cfg.dim; ++j) denc(i, j) += dpooled[j] / n;
  }
  if (dtokens) {
    for (size_t i = 0; i < denc.a.size(); ++i) denc.a[i] += dtokens->a[i];
  }
  Mat dtok = encode_tokens_backward(p, cc.layers, denc, grad);

  // shapes of the maps that fed tokenize
  const int im_h = cc.fusion.im_h, im_w = cc.fusion.im_w;
  const int li_h = cc.fusion.li_h, li_w = cc.fusion.li_w;

  if (cfg.fuse_after_block == 1) {
    // tokenize consumed the block-2 outputs
    Tensor3 dtok_im(cc.image.b2.input.h / cfg.pool2, cc.image.b2.input.w / cfg.pool2, cfg.c2);
    Tensor3 dtok_li(cc.lidar.b2.input.h / cfg.pool2, cc.lidar.b2.input.w / cfg.pool2, cfg.c2);
    tokenize_backward(p, cc.tokenize, dtok, grad, &dtok_im, &dtok_li);
    Tensor3 dfused_im = conv_block_backward(p.image.c2, cc.image.b2, cfg.pool2, dtok_im, grad.image.c2);
    Tensor3 dfused_li = conv_block_backward(p.lidar.c2, cc.lidar.b2, cfg.pool2, dtok_li, grad.lidar.c2);
    Tensor3 db1_im, db1_li;
    fusion_backward(p.fusion, cc.fusion, dfused_im, dfused_li, grad.fusion, &db1_im, &db1_li);
    conv_block_backward(p.image.c1, cc.image.b1, cfg.pool1, db1_im, grad.image.c1);
    conv_block_backward(p.lidar.c1, cc.lidar.b1, cfg.pool1, db1_li, grad.lidar.c1);
  } else {
    Tensor3 dmap_im(im_h, im_w, cfg.c2);
    Tensor3 dmap_li(li_h, li_w, cfg.c2);
    tokenize_backward(p, cc.tokenize, dtok, grad, &dmap_im, &dmap_li);
    Tensor3 db2_im, db2_li;
    fusion_backward(p.fusion, cc.fusion, dmap_im, dmap_li, grad.fusion, &db2_im, &db2_li);
    Tensor3 db1_im = conv_block_backward(p.image.c2, cc.image.b2, cfg.pool2, db2_im, grad.image.c2);
    Tensor3 db1_li = conv_block_backward(p.lidar.c2, cc.lidar.b2, cfg.pool2, db2_li, grad.lidar.c2);
    conv_block_backward(p.image.c1, cc.image.b1, cfg.pool1, db1_im, grad.image.c1);
    conv_block_backward(p.lidar.c1, cc.lidar.b1, cfg.pool1, db1_li, grad.lidar.c1);
  }
}

}  // namespace tokendrive::nn
