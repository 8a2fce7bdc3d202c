#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tokendrive/nn/params.hpp"
#include "tokendrive/tensor.hpp"

namespace tokendrive::nn {

struct EncoderConfig {
  int cam_h = 40, cam_w = 176, cam_c = 3;
  int bev_h = 64, bev_w = 64, bev_c = 4;
  int c1 = 16, c2 = 32;        // branch channel widths (paper scale: 72, 216)
  int pool1 = 2, pool2 = 2;    // per-block downsample factors
  int fuse_after_block = 2;    // apply the cross-modal attention after block 1 or 2
  int patch = 16;              // semantic word size
  int dim = 64;                // token width D (paper scale: 512)
  int heads = 4;
  int layers = 4;
  int ffn_mult = 2;
  uint64_t seed = 1;

  int fusion_channels() const { return fuse_after_block == 1 ? c1 : c2; }
  void validate() const;  // throws ShapeMismatch on inconsistent dims
};

struct Conv3x3 {
  int in_c = 0, out_c = 0;
  Mat w;                     // out_c x (in_c * 9)
  std::vector<double> b;     // out_c
};

struct BranchParams {
  Conv3x3 c1, c2;
};

struct FusionParams {
  Mat wq, wk, wv;            // C x C
  Mat m1_w, m2_w;            // C x C; m1 feeds the LiDAR rows, m2 the image rows
  std::vector<double> m1_b, m2_b;
};

struct AttnLayerParams {
  Mat wq, wk, wv, wo;        // D x D
  std::vector<double> bq, bk, bv, bo;
  Mat ff1;                   // D x (ffn_mult * D)
  std::vector<double> fb1;
  Mat ff2;                   // (ffn_mult * D) x D
  std::vector<double> fb2;
};

struct EncoderParams {
  EncoderConfig cfg;
  BranchParams image, lidar;
  FusionParams fusion;
  Mat patch_proj_image, patch_proj_lidar;  // (patch^2 * C) x D
  std::vector<double> patch_bias_image, patch_bias_lidar;
  Mat segment_embed;                       // 2 x D, zero-initialized
  std::vector<AttnLayerParams> layers;
};

// Fresh parameters, uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), seeded.
EncoderParams make_encoder(const EncoderConfig& cfg);
// Same shapes, all zeros (gradient accumulator).
EncoderParams make_like(const EncoderParams& p);
// Flat named views over every tensor, in a stable order.
std::vector<ParamRef> collect_params(EncoderParams& p);

struct JointTokens {
  Mat tokens;                                   // N x D, embeddings already added
  std::vector<int> segment;                     // 0 = range view, 1 = BEV
  std::vector<std::pair<int, int>> positions;   // patch (row, col)
};

// ---- caches for the backward pass ----

struct LnCache {
  std::vector<double> rstd;
  Mat y;  // normalized output
};

struct ConvBlockCache {
  Tensor3 input;
  Tensor3 tanh_out;  // post-activation, pre-pool
};

struct BranchCache {
  ConvBlockCache b1, b2;
};

struct FusionCache {
  int n_im = 0, n_li = 0, c = 0;
  int im_h = 0, im_w = 0, li_h = 0, li_w = 0;
  Mat x;                   // concatenated input tokens
  Mat q, k, v;
  Mat attn;                // row-softmax weights
  Mat attn_out;
  Mat im_mlp, li_mlp;      // pre-normalization MLP outputs
  LnCache im_ln, li_ln;
};

struct TokenizeCache {
  Tensor3 padded_im, padded_li;
  Mat patches_im, patches_li;  // one flattened patch per row
};

struct AttnLayerCache {
  Mat x_in;
  LnCache ln1;
  Mat q, k, v;
  std::vector<Mat> attn;   // per head, N x N
  Mat ctx;
  Mat x_mid;
  LnCache ln2;
  Mat ffn_hidden;          // tanh(ln2.y * ff1 + fb1)
};

struct EncodeCache {
  BranchCache image, lidar;
  FusionCache fusion;
  TokenizeCache tokenize;
  std::vector<AttnLayerCache> layers;
  Mat encoded;             // final token matrix
};

// ---- stage operations (each independently checkable) ----

// conv 3x3 (stride 1, zero pad) -> tanh -> mean pool. Output spatial dims are
// input / pool.
Tensor3 conv_block_forward(const Conv3x3& p, const Tensor3& in, int pool, ConvBlockCache* cache);
Tensor3 conv_block_backward(const Conv3x3& p, const ConvBlockCache& cache, int pool,
                            const Tensor3& dout, Conv3x3& grad);

Tensor3 branch_forward(const BranchParams& p, const Tensor3& in, int pool1, int pool2,
                       BranchCache* cache);

// Eq.-1 style fusion: joint attention over the concatenated token sequence,
// per-modality MLP heads, layer normalization, residual add.
void fusion_forward(const FusionParams& p, const Tensor3& f_im, const Tensor3& f_li,
                    Tensor3& out_im, Tensor3& out_li, FusionCache* cache);
void fusion_backward(const FusionParams& p, const FusionCache& cache, const Tensor3& dout_im,
                     const Tensor3& dout_li, FusionParams& grad, Tensor3* din_im, Tensor3* din_li);

// Fixed 2D sinusoidal positional embedding; dim must be divisible by 4.
std::vector<double> positional_embedding(int row, int col, int dim);

JointTokens tokenize(const EncoderParams& p, const Tensor3& f_im, const Tensor3& f_li,
                     TokenizeCache* cache);
void tokenize_backward(const EncoderParams& p, const TokenizeCache& cache, const Mat& dtokens,
                       EncoderParams& grad, Tensor3* din_im, Tensor3* din_li);

// Pre-norm transformer encoder stack; token count and width preserved.
Mat encode_tokens(const EncoderParams& p, const Mat& tokens, std::vector<AttnLayerCache>* caches);
Mat encode_tokens_backward(const EncoderParams& p, const std::vector<AttnLayerCache>& caches,
                           const Mat& dout, EncoderParams& grad);

// ---- full pipeline ----

struct FrameEncoding {
  JointTokens joint;
  std::vector<double> pooled;  // mean over tokens, length D
};

FrameEncoding encode_frame(const EncoderParams& p, const Tensor3& camera, const Tensor3& bev,
                           EncodeCache* cache);
// dpooled and/or dtokens feed the backward pass; parameter gradients
// accumulate into `grad`.
void encode_frame_backward(const EncoderParams& p, const EncodeCache& cache,
                           const std::vector<double>& dpooled, const Mat* dtokens,
                           EncoderParams& grad);

}  // namespace tokendrive::nn
