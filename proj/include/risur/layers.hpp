#pragma once

#include <random>
#include <vector>

#include "risur/ops.hpp"

namespace risur {

// Batch normalization with learnable affine and running statistics. Running
// averages use momentum 0.9 (weight kept on the old value) and are updated
// only in training mode when update_running is set.
struct BatchNorm {
  Tensor gamma, beta;  // [C]
  std::vector<float> running_mean, running_var;
  float momentum = 0.9f;
  float eps = 1e-5f;

  BatchNorm() = default;
  explicit BatchNorm(int c);

  Tensor apply(const Tensor& x, Binder& bind, bool training, bool update_running = true);
};

struct SelfAttentionParams {
  Tensor wq, wk, wv;  // [C, C]
  Tensor bq, bk, bv;  // optional biases, disabled by default
  bool residual = false;

  int width() const { return wq.defined() ? wq.shape()[0] : 0; }
};

// Single-head attention softmax(Q K^T / sqrt(C)) V over the middle axis of
// [B, L, C]; rank-4 input [B, N, K, C] folds (B, N) into the batch axis.
// attn_out, when non-null, receives the attention matrix [batch, L, L].
Tensor self_attention(const Tensor& x, SelfAttentionParams& p, Binder& bind,
                      Tensor* attn_out = nullptr);

struct RISurConvParams {
  int in_width = 14, c_prev = 0, c_embed = 0, c_out = 0;
  Tensor embed_w1, embed_b1, embed_w2, embed_b2;
  BatchNorm embed_bn1, embed_bn2, concat_bn;
  SelfAttentionParams sa1, sa2;
  Tensor concat_w, concat_b;
  bool use_sa1 = true, use_sa2 = true;
};

RISurConvParams make_risurconv_params(int in_width, int c_prev, int c_embed, int c_out,
                                      bool qkv_bias, std::mt19937_64& rng);

// The convolution stage: embed MLP (two BN+ReLU layers), SA over neighbors,
// concat of previous-layer features, linear+BN+ReLU, maxpool over neighbors,
// SA over reference points. risp: [B, N, K, in_width]; f_prev (optional):
// [B, N, K, c_prev] pre-gathered by the caller. Returns [B, N, c_out].
Tensor risurconv_forward(const Tensor& risp, const Tensor& f_prev, RISurConvParams& p,
                         Binder& bind, bool training, bool update_running = true);

struct EncoderParams {
  int heads = 8;
  SelfAttentionParams mha;
  Tensor wo, bo;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

EncoderParams make_encoder_params(int c, int heads, int ff_hidden, bool qkv_bias,
                                  std::mt19937_64& rng);

// Post-norm transformer block: LN(x + MHA(x)), then LN(y + FF(y)).
Tensor transformer_encoder(const Tensor& x, EncoderParams& p, Binder& bind);

// Uniform Kaiming (fan-in) and Xavier initializers, row-major [fan_in, fan_out].
Tensor kaiming_uniform(int fan_in, int fan_out, std::mt19937_64& rng);
Tensor xavier_uniform(int fan_in, int fan_out, std::mt19937_64& rng);

struct Adam {
  float lr = 1e-3f, beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  int t = 0;
  std::vector<std::vector<float>> m, v;

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);
};

}  // namespace risur
