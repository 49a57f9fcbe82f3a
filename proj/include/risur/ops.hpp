#pragma once

#include <vector>

#include "risur/tensor.hpp"

namespace risur {

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float s);

// Batched matrix product. a: [batch..., M, K]; b: [batch..., K, N] (or
// [batch..., N, K] with transpose_b), or rank-2 b shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Affine map over the last axis. w: [Cin, Cout], optional b: [Cout].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});

Tensor relu(const Tensor& x);

// Softmax along `axis` (negative axes allowed). Rows sum to 1.
Tensor softmax(const Tensor& x, int axis);

// Max-reduction removing `axis`; gradient routes to the argmax slot, ties to
// the lowest index.
Tensor maxpool(const Tensor& x, int axis);

// Concatenation along the last axis; leading dims must match.
Tensor concat_last(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);

// f: [B, Np, C]; idx: B*N*K entries in [0, Np). Returns [B, N, K, C] with
// out[b,n,k] = f[b, idx[(b*N+n)*K+k]]. Backward scatter-adds in index order.
Tensor gather_neighbors(const Tensor& f, const std::vector<int>& idx, int n, int k);

// Normalization over the last axis with per-channel affine parameters.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// Batch statistics over all leading axes per channel (last axis). Training
// form requires >= 2 rows and reports the biased batch statistics through
// batch_mean/batch_var for the caller's running averages.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        std::vector<float>* batch_mean, std::vector<float>* batch_var,
                        float eps = 1e-5f);
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<float>& mean, const std::vector<float>& var,
                       float eps = 1e-5f);

// Mean negative log-likelihood of softmax(logits) at the labels. logits:
// [B, C]; labels: B entries in [0, C). Fused log-softmax for stability.
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels);

Tensor sum_all(const Tensor& x);

}  // namespace risur
