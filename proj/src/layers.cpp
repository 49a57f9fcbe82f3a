#include "risur/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace risur {

BatchNorm::BatchNorm(int c)
    : gamma(Tensor::full({c}, 1.0f)),
      beta(Tensor::zeros({c})),
      running_mean(c, 0.0f),
      running_var(c, 1.0f) {}

Tensor BatchNorm::apply(const Tensor& x, Binder& bind, bool training, bool update_running) {
  Tensor g = bind(gamma), b = bind(beta);
  if (!training) return batch_norm_eval(x, g, b, running_mean, running_var, eps);
  std::vector<float> bm, bv;
  Tensor y = batch_norm_train(x, g, b, &bm, &bv, eps);
  if (update_running) {
    for (size_t i = 0; i < bm.size(); ++i) {
      running_mean[i] = momentum * running_mean[i] + (1.0f - momentum) * bm[i];
      running_var[i] = momentum * running_var[i] + (1.0f - momentum) * bv[i];
    }
  }
  return y;
}

Tensor self_attention(const Tensor& x, SelfAttentionParams& p, Binder& bind, Tensor* attn_out) {
  int c = x.dim(-1);
  if (c != p.width()) throw std::invalid_argument("self_attention: width mismatch");
  Tensor in = x;
  bool folded = false;
  std::vector<int> orig_shape = x.shape();
  if (x.rank() == 4) {
    in = reshape(x, {x.shape()[0] * x.shape()[1], x.shape()[2], c});
    folded = true;
  } else if (x.rank() != 3) {
    throw std::invalid_argument("self_attention: input must be rank 3 or 4");
  }

  Tensor q = linear(in, bind(p.wq), p.bq.defined() ? bind(p.bq) : Tensor{});
  Tensor k = linear(in, bind(p.wk), p.bk.defined() ? bind(p.bk) : Tensor{});
  Tensor v = linear(in, bind(p.wv), p.bv.defined() ? bind(p.bv) : Tensor{});
  Tensor scores = scale(matmul(q, k, true), 1.0f / std::sqrt(static_cast<float>(c)));
  Tensor attn = softmax(scores, -1);
  if (attn_out) *attn_out = attn.detached();
  Tensor out = matmul(attn, v);
  if (p.residual) out = add(in, out);
  if (folded) out = reshape(out, orig_shape);
  return out;
}

RISurConvParams make_risurconv_params(int in_width, int c_prev, int c_embed, int c_out,
                                      bool qkv_bias, std::mt19937_64& rng) {
  RISurConvParams p;
  p.in_width = in_width;
  p.c_prev = c_prev;
  p.c_embed = c_embed;
  p.c_out = c_out;
  p.embed_w1 = kaiming_uniform(in_width, c_embed, rng);
  p.embed_b1 = Tensor::zeros({c_embed});
  p.embed_w2 = kaiming_uniform(c_embed, c_embed, rng);
  p.embed_b2 = Tensor::zeros({c_embed});
  p.embed_bn1 = BatchNorm(c_embed);
  p.embed_bn2 = BatchNorm(c_embed);
  auto make_sa = [&](int width) {
    SelfAttentionParams sa;
    sa.wq = xavier_uniform(width, width, rng);
    sa.wk = xavier_uniform(width, width, rng);
    sa.wv = xavier_uniform(width, width, rng);
    if (qkv_bias) {
      sa.bq = Tensor::zeros({width});
      sa.bk = Tensor::zeros({width});
      sa.bv = Tensor::zeros({width});
    }
    return sa;
  };
  p.sa1 = make_sa(c_embed);
  p.concat_w = kaiming_uniform(c_embed + c_prev, c_out, rng);
  p.concat_b = Tensor::zeros({c_out});
  p.concat_bn = BatchNorm(c_out);
  p.sa2 = make_sa(c_out);
  return p;
}

Tensor risurconv_forward(const Tensor& risp, const Tensor& f_prev, RISurConvParams& p,
                         Binder& bind, bool training, bool update_running) {
  if (risp.rank() != 4) throw std::invalid_argument("risurconv: risp must be [B, N, K, C]");
  if (risp.dim(-1) != p.in_width)
    throw std::invalid_argument("risurconv: descriptor width mismatch");
  if (p.c_prev > 0) {
    if (!f_prev.defined() || f_prev.rank() != 4 || f_prev.dim(-1) != p.c_prev)
      throw std::invalid_argument("risurconv: previous-feature width mismatch");
  } else if (f_prev.defined()) {
    throw std::invalid_argument("risurconv: unexpected previous features");
  }

  Tensor h = relu(p.embed_bn1.apply(linear(risp, bind(p.embed_w1), bind(p.embed_b1)), bind,
                                    training, update_running));
  h = relu(p.embed_bn2.apply(linear(h, bind(p.embed_w2), bind(p.embed_b2)), bind, training,
                             update_running));
  if (p.use_sa1) h = self_attention(h, p.sa1, bind);
  if (p.c_prev > 0) h = concat_last(f_prev, h);
  h = relu(p.concat_bn.apply(linear(h, bind(p.concat_w), bind(p.concat_b)), bind, training,
                             update_running));
  h = maxpool(h, 2);
  if (p.use_sa2) h = self_attention(h, p.sa2, bind);
  return h;
}

EncoderParams make_encoder_params(int c, int heads, int ff_hidden, bool qkv_bias,
                                  std::mt19937_64& rng) {
  if (c % heads != 0)
    throw std::invalid_argument("encoder: width must be divisible by head count");
  EncoderParams p;
  p.heads = heads;
  p.mha.wq = xavier_uniform(c, c, rng);
  p.mha.wk = xavier_uniform(c, c, rng);
  p.mha.wv = xavier_uniform(c, c, rng);
  if (qkv_bias) {
    p.mha.bq = Tensor::zeros({c});
    p.mha.bk = Tensor::zeros({c});
    p.mha.bv = Tensor::zeros({c});
  }
  p.wo = xavier_uniform(c, c, rng);
  p.bo = Tensor::zeros({c});
  p.ln1_g = Tensor::full({c}, 1.0f);
  p.ln1_b = Tensor::zeros({c});
  p.ln2_g = Tensor::full({c}, 1.0f);
  p.ln2_b = Tensor::zeros({c});
  p.ff_w1 = kaiming_uniform(c, ff_hidden, rng);
  p.ff_b1 = Tensor::zeros({ff_hidden});
  p.ff_w2 = kaiming_uniform(ff_hidden, c, rng);
  p.ff_b2 = Tensor::zeros({c});
  return p;
}

Tensor transformer_encoder(const Tensor& x, EncoderParams& p, Binder& bind) {
  if (x.rank() != 3) throw std::invalid_argument("encoder: input must be [B, L, C]");
  int b = x.shape()[0], l = x.shape()[1], c = x.shape()[2];
  if (c % p.heads != 0) throw std::invalid_argument("encoder: width not divisible by heads");
  int dh = c / p.heads;

  Tensor q = linear(x, bind(p.mha.wq), p.mha.bq.defined() ? bind(p.mha.bq) : Tensor{});
  Tensor k = linear(x, bind(p.mha.wk), p.mha.bk.defined() ? bind(p.mha.bk) : Tensor{});
  Tensor v = linear(x, bind(p.mha.wv), p.mha.bv.defined() ? bind(p.mha.bv) : Tensor{});
  auto split = [&](const Tensor& t) {
    return reshape(permute(reshape(t, {b, l, p.heads, dh}), {0, 2, 1, 3}), {b * p.heads, l, dh});
  };
  Tensor qh = split(q), kh = split(k), vh = split(v);
  Tensor attn = softmax(scale(matmul(qh, kh, true), 1.0f / std::sqrt(static_cast<float>(dh))), -1);
  Tensor ctx = matmul(attn, vh);
  ctx = reshape(permute(reshape(ctx, {b, p.heads, l, dh}), {0, 2, 1, 3}), {b, l, c});
  Tensor mha = linear(ctx, bind(p.wo), bind(p.bo));

  Tensor y = layer_norm(add(x, mha), bind(p.ln1_g), bind(p.ln1_b));
  Tensor ff = linear(relu(linear(y, bind(p.ff_w1), bind(p.ff_b1))), bind(p.ff_w2), bind(p.ff_b2));
  return layer_norm(add(y, ff), bind(p.ln2_g), bind(p.ln2_b));
}

namespace {

Tensor uniform_init(int fan_in, int fan_out, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> values(static_cast<size_t>(fan_in) * fan_out);
  for (auto& v : values) v = static_cast<float>(dist(rng));
  return Tensor({fan_in, fan_out}, std::move(values));
}

}  // namespace

Tensor kaiming_uniform(int fan_in, int fan_out, std::mt19937_64& rng) {
  return uniform_init(fan_in, fan_out, std::sqrt(6.0 / fan_in), rng);
}

Tensor xavier_uniform(int fan_in, int fan_out, std::mt19937_64& rng) {
  return uniform_init(fan_in, fan_out, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: grad count mismatch");
  if (m.empty()) {
    m.resize(params.size());
    v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m[i].assign(static_cast<size_t>(params[i]->size()), 0.0f);
      v[i].assign(static_cast<size_t>(params[i]->size()), 0.0f);
    }
  }
  ++t;
  double bc1 = 1.0 - std::pow(static_cast<double>(beta1), t);
  double bc2 = 1.0 - std::pow(static_cast<double>(beta2), t);
  for (size_t i = 0; i < params.size(); ++i) {
    float* w = params[i]->data();
    const float* g = grads[i].data();
    auto& mi = m[i];
    auto& vi = v[i];
    for (size_t j = 0; j < mi.size(); ++j) {
      mi[j] = beta1 * mi[j] + (1.0f - beta1) * g[j];
      vi[j] = beta2 * vi[j] + (1.0f - beta2) * g[j] * g[j];
      float mhat = static_cast<float>(mi[j] / bc1);
      float vhat = static_cast<float>(vi[j] / bc2);
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace risur
