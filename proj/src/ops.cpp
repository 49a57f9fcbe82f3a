#include "risur/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace risur {

namespace {

using Buf = std::shared_ptr<std::vector<float>>;

Tape* tape_of(std::initializer_list<const Tensor*> ts) {
  Tape* t = nullptr;
  for (const Tensor* x : ts) {
    if (!x || !x->defined() || !x->on_tape()) continue;
    if (!t)
      t = x->tape();
    else if (t != x->tape())
      throw std::invalid_argument("ops: inputs belong to different tapes");
  }
  return t;
}

Tensor finish(Tape* t, std::vector<int> shape, std::vector<float> values,
              Tape::BackwardFn backward) {
  if (!t) return Tensor(std::move(shape), std::move(values));
  return t->make_node(std::move(shape), std::move(values), std::move(backward));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

void axpy(std::vector<float>& dst, const std::vector<float>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// c += a (M x K) * b (K x N); plain loops in an order the compiler vectorizes.
void gemm_acc(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::int64_t>(i) * k;
    float* crow = c + static_cast<std::int64_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      float av = arow[l];
      const float* brow = b + static_cast<std::int64_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose_into(const float* src, int rows, int cols, float* dst) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) dst[static_cast<std::int64_t>(j) * rows + i] = src[static_cast<std::int64_t>(i) * cols + j];
}

std::int64_t leading_product(const std::vector<int>& shape, int upto) {
  std::int64_t n = 1;
  for (int i = 0; i < upto; ++i) n *= shape[i];
  return n;
}

int normalize_axis(const Tensor& x, int axis, const char* op) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument(std::string(op) + ": axis out of range");
  return axis;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  Tape* t = tape_of({&a, &b});
  int na = a.on_tape() ? a.node() : -1, nb = b.on_tape() ? b.node() : -1;
  return finish(t, a.shape(), std::move(out), [na, nb](Tape& tp, const std::vector<float>& g) {
    if (na >= 0) axpy(tp.grad_buffer(na), g);
    if (nb >= 0) axpy(tp.grad_buffer(nb), g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<float> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
  Tape* t = tape_of({&a, &b});
  int na = a.on_tape() ? a.node() : -1, nb = b.on_tape() ? b.node() : -1;
  return finish(t, a.shape(), std::move(out), [na, nb](Tape& tp, const std::vector<float>& g) {
    if (na >= 0) axpy(tp.grad_buffer(na), g);
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      for (size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<float> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  Tape* t = tape_of({&a, &b});
  int na = a.on_tape() ? a.node() : -1, nb = b.on_tape() ? b.node() : -1;
  Buf da = a.buffer(), db = b.buffer();
  return finish(t, a.shape(), std::move(out),
                [na, nb, da, db](Tape& tp, const std::vector<float>& g) {
                  if (na >= 0) {
                    auto& ga = tp.grad_buffer(na);
                    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * (*db)[i];
                  }
                  if (nb >= 0) {
                    auto& gb = tp.grad_buffer(nb);
                    for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * (*da)[i];
                  }
                });
}

Tensor scale(const Tensor& x, float s) {
  std::vector<float> out(x.values());
  for (auto& v : out) v *= s;
  Tape* t = tape_of({&x});
  int nx = x.on_tape() ? x.node() : -1;
  return finish(t, x.shape(), std::move(out), [nx, s](Tape& tp, const std::vector<float>& g) {
    if (nx < 0) return;
    auto& gx = tp.grad_buffer(nx);
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * s;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() < 2 || b.rank() < 2) throw std::invalid_argument("matmul: rank must be >= 2");
  bool shared_b = b.rank() == 2 && a.rank() > 2;
  if (!shared_b && a.rank() != b.rank())
    throw std::invalid_argument("matmul: rank mismatch");
  if (!shared_b)
    for (int i = 0; i + 2 < a.rank(); ++i)
      if (a.shape()[i] != b.shape()[i]) throw std::invalid_argument("matmul: batch dims differ");

  int m = a.shape()[a.rank() - 2];
  int ka = a.shape()[a.rank() - 1];
  int kb = transpose_b ? b.shape()[b.rank() - 1] : b.shape()[b.rank() - 2];
  int n = transpose_b ? b.shape()[b.rank() - 2] : b.shape()[b.rank() - 1];
  if (ka != kb) throw std::invalid_argument("matmul: inner dimensions differ");
  int k = ka;
  std::int64_t batch = leading_product(a.shape(), a.rank() - 2);

  std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  std::vector<float> out(static_cast<size_t>(batch) * m * n, 0.0f);

  const float* ap = a.data();
  const float* bp = b.data();
  std::int64_t bstride = shared_b ? 0 : static_cast<std::int64_t>(k) * n;
  std::vector<float> scratch;
  if (transpose_b) {
    scratch.resize(static_cast<size_t>(k) * n);
    if (shared_b) transpose_into(bp, n, k, scratch.data());  // stored [N, K] -> use [K, N]
  }
  for (std::int64_t i = 0; i < batch; ++i) {
    const float* bi;
    if (!transpose_b) {
      bi = bp + i * bstride;
    } else {
      if (!shared_b) transpose_into(bp + i * bstride, n, k, scratch.data());
      bi = scratch.data();
    }
    gemm_acc(ap + i * static_cast<std::int64_t>(m) * k, bi,
             out.data() + i * static_cast<std::int64_t>(m) * n, m, k, n);
  }

  Tape* t = tape_of({&a, &b});
  int na = a.on_tape() ? a.node() : -1, nb = b.on_tape() ? b.node() : -1;
  Buf da = a.buffer(), db = b.buffer();
  auto bw = [na, nb, da, db, m, k, n, batch, shared_b, transpose_b](
                Tape& tp, const std::vector<float>& g) {
    std::int64_t bstride2 = shared_b ? 0 : static_cast<std::int64_t>(k) * n;
    if (na >= 0) {
      auto& ga = tp.grad_buffer(na);
      std::vector<float> scratch(static_cast<size_t>(k) * n);
      for (std::int64_t i = 0; i < batch; ++i) {
        const float* gi = g.data() + i * static_cast<std::int64_t>(m) * n;
        const float* bi = db->data() + i * bstride2;
        float* gai = ga.data() + i * static_cast<std::int64_t>(m) * k;
        if (transpose_b) {
          gemm_acc(gi, bi, gai, m, n, k);  // dA = dC * B, B stored [N, K]
        } else {
          transpose_into(bi, k, n, scratch.data());
          gemm_acc(gi, scratch.data(), gai, m, n, k);  // dA = dC * B^T
        }
      }
    }
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      std::vector<float> scratch(std::max(static_cast<size_t>(m) * k, static_cast<size_t>(m) * n));
      for (std::int64_t i = 0; i < batch; ++i) {
        const float* gi = g.data() + i * static_cast<std::int64_t>(m) * n;
        const float* ai = da->data() + i * static_cast<std::int64_t>(m) * k;
        float* gbi = gb.data() + (shared_b ? 0 : i * bstride2);
        if (transpose_b) {
          transpose_into(gi, m, n, scratch.data());
          gemm_acc(scratch.data(), ai, gbi, n, m, k);  // dB = dC^T * A -> [N, K]
        } else {
          transpose_into(ai, m, k, scratch.data());
          gemm_acc(scratch.data(), gi, gbi, k, m, n);  // dB = A^T * dC -> [K, N]
        }
      }
    }
  };
  return finish(t, std::move(out_shape), std::move(out), std::move(bw));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw std::invalid_argument("linear: weight must be rank 2");
  int cin = w.shape()[0], cout = w.shape()[1];
  if (x.dim(-1) != cin) throw std::invalid_argument("linear: input width mismatch");
  bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.shape()[0] != cout))
    throw std::invalid_argument("linear: bias width mismatch");

  std::int64_t rows = x.size() / cin;
  std::vector<float> out(static_cast<size_t>(rows) * cout, 0.0f);
  gemm_acc(x.data(), w.data(), out.data(), static_cast<int>(rows), cin, cout);
  if (has_bias) {
    const float* bp = b.data();
    for (std::int64_t r = 0; r < rows; ++r) {
      float* orow = out.data() + r * cout;
      for (int j = 0; j < cout; ++j) orow[j] += bp[j];
    }
  }
  std::vector<int> out_shape(x.shape());
  out_shape.back() = cout;

  Tape* t = tape_of({&x, &w, &b});
  int nx = x.on_tape() ? x.node() : -1;
  int nw = w.on_tape() ? w.node() : -1;
  int nb = has_bias && b.on_tape() ? b.node() : -1;
  Buf dx = x.buffer(), dw = w.buffer();
  auto bw = [nx, nw, nb, dx, dw, rows, cin, cout](Tape& tp, const std::vector<float>& g) {
    if (nx >= 0) {
      auto& gx = tp.grad_buffer(nx);
      std::vector<float> wt(static_cast<size_t>(cin) * cout);
      transpose_into(dw->data(), cin, cout, wt.data());
      gemm_acc(g.data(), wt.data(), gx.data(), static_cast<int>(rows), cout, cin);
    }
    if (nw >= 0) {
      auto& gw = tp.grad_buffer(nw);
      std::vector<float> xt(static_cast<size_t>(cin) * rows);
      transpose_into(dx->data(), static_cast<int>(rows), cin, xt.data());
      gemm_acc(xt.data(), g.data(), gw.data(), cin, static_cast<int>(rows), cout);
    }
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      for (std::int64_t r = 0; r < rows; ++r) {
        const float* grow = g.data() + r * cout;
        for (int j = 0; j < cout; ++j) gb[j] += grow[j];
      }
    }
  };
  return finish(t, std::move(out_shape), std::move(out), std::move(bw));
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.values());
  for (auto& v : out) v = v > 0.0f ? v : 0.0f;
  Tape* t = tape_of({&x});
  int nx = x.on_tape() ? x.node() : -1;
  Buf dx = x.buffer();
  return finish(t, x.shape(), std::move(out), [nx, dx](Tape& tp, const std::vector<float>& g) {
    if (nx < 0) return;
    auto& gx = tp.grad_buffer(nx);
    for (size_t i = 0; i < gx.size(); ++i)
      if ((*dx)[i] > 0.0f) gx[i] += g[i];
  });
}

Tensor softmax(const Tensor& x, int axis) {
  axis = normalize_axis(x, axis, "softmax");
  int a = x.shape()[axis];
  if (a == 0) throw std::invalid_argument("softmax: empty axis");
  std::int64_t outer = leading_product(x.shape(), axis);
  std::int64_t inner = x.size() / (outer * a);

  std::vector<float> out(x.values().size());
  const float* xp = x.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      std::int64_t base = (o * a) * inner + i;
      float mx = xp[base];
      for (int j = 1; j < a; ++j) mx = std::max(mx, xp[base + j * inner]);
      double sum = 0.0;
      for (int j = 0; j < a; ++j) {
        float e = std::exp(xp[base + j * inner] - mx);
        out[base + j * inner] = e;
        sum += e;
      }
      float inv = static_cast<float>(1.0 / sum);
      for (int j = 0; j < a; ++j) out[base + j * inner] *= inv;
    }

  Tape* t = tape_of({&x});
  int nx = x.on_tape() ? x.node() : -1;
  Buf dy = std::make_shared<std::vector<float>>(out);  // keep y for the backward
  auto bw = [nx, dy, outer, inner, a](Tape& tp, const std::vector<float>& g) {
    if (nx < 0) return;
    auto& gx = tp.grad_buffer(nx);
    const float* y = dy->data();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < inner; ++i) {
        std::int64_t base = (o * a) * inner + i;
        double dot = 0.0;
        for (int j = 0; j < a; ++j) dot += static_cast<double>(g[base + j * inner]) * y[base + j * inner];
        for (int j = 0; j < a; ++j) {
          std::int64_t idx = base + j * inner;
          gx[idx] += y[idx] * (g[idx] - static_cast<float>(dot));
        }
      }
  };
  return finish(t, x.shape(), std::move(out), std::move(bw));
}

Tensor maxpool(const Tensor& x, int axis) {
  axis = normalize_axis(x, axis, "maxpool");
  int a = x.shape()[axis];
  if (a < 1) throw std::invalid_argument("maxpool: empty axis");
  std::int64_t outer = leading_product(x.shape(), axis);
  std::int64_t inner = x.size() / (outer * a);

  std::vector<int> out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.shape()[i]);
  std::vector<float> out(static_cast<size_t>(outer) * inner);
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  const float* xp = x.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      std::int64_t base = (o * a) * inner + i;
      float best = xp[base];
      int bj = 0;
      for (int j = 1; j < a; ++j) {
        float v = xp[base + j * inner];
        if (v > best) {  // ties keep the lowest index
          best = v;
          bj = j;
        }
      }
      out[o * inner + i] = best;
      (*argmax)[o * inner + i] = bj;
    }

  Tape* t = tape_of({&x});
  int nx = x.on_tape() ? x.node() : -1;
  auto bw = [nx, argmax, outer, inner, a](Tape& tp, const std::vector<float>& g) {
    if (nx < 0) return;
    auto& gx = tp.grad_buffer(nx);
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < inner; ++i) {
        int j = (*argmax)[o * inner + i];
        gx[(o * a + j) * inner + i] += g[o * inner + i];
      }
  };
  return finish(t, std::move(out_shape), std::move(out), std::move(bw));
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw std::invalid_argument("concat_last: rank mismatch");
  for (int i = 0; i + 1 < a.rank(); ++i)
    if (a.shape()[i] != b.shape()[i])
      throw std::invalid_argument("concat_last: leading dims differ");
  int ca = a.shape().back(), cb = b.shape().back();
  std::int64_t rows = a.size() / ca;
  std::vector<float> out(static_cast<size_t>(rows) * (ca + cb));
  const float* ap = a.data();
  const float* bp = b.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy(ap + r * ca, ap + (r + 1) * ca, out.begin() + r * (ca + cb));
    std::copy(bp + r * cb, bp + (r + 1) * cb, out.begin() + r * (ca + cb) + ca);
  }
  std::vector<int> out_shape(a.shape());
  out_shape.back() = ca + cb;

  Tape* t = tape_of({&a, &b});
  int na = a.on_tape() ? a.node() : -1, nb = b.on_tape() ? b.node() : -1;
  auto bw = [na, nb, rows, ca, cb](Tape& tp, const std::vector<float>& g) {
    if (na >= 0) {
      auto& ga = tp.grad_buffer(na);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < ca; ++j) ga[r * ca + j] += g[r * (ca + cb) + j];
    }
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < cb; ++j) gb[r * cb + j] += g[r * (ca + cb) + ca + j];
    }
  };
  return finish(t, std::move(out_shape), std::move(out), std::move(bw));
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  if (n != x.size()) throw std::invalid_argument("reshape: element count mismatch");
  Tape* t = tape_of({&x});
  int nx = x.on_tape() ? x.node() : -1;
  std::vector<float> out(x.values());
  return finish(t, std::move(shape), std::move(out), [nx](Tape& tp, const std::vector<float>& g) {
    if (nx < 0) return;
    axpy(tp.grad_buffer(nx), g);
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  int r = x.rank();
  if (static_cast<int>(axes.size()) != r) throw std::invalid_argument("permute: rank mismatch");
  std::vector<char> seen(r, 0);
  for (int a : axes) {
    if (a < 0 || a >= r || seen[a]) throw std::invalid_argument("permute: invalid axes");
    seen[a] = 1;
  }
  std::vector<int> out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = x.shape()[axes[i]];

  std::vector<std::int64_t> in_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];
  // Stride of the input axis that output axis i walks over.
  auto mapping = std::make_shared<std::vector<std::int64_t>>(r);
  for (int i = 0; i < r; ++i) (*mapping)[i] = in_strides[axes[i]];

  std::int64_t n = x.size();
  std::vector<float> out(static_cast<size_t>(n));
  const float* xp = x.data();
  std::vector<int> coord(r, 0);
  auto out_shape_copy = std::make_shared<std::vector<int>>(out_shape);
  std::int64_t in_flat = 0;
  for (std::int64_t o = 0; o < n; ++o) {
    out[o] = xp[in_flat];
    for (int i = r - 1; i >= 0; --i) {
      in_flat += (*mapping)[i];
      if (++coord[i] < out_shape[i]) break;
      in_flat -= (*mapping)[i] * out_shape[i];
      coord[i] = 0;
    }
  }

  Tape* t = tape_of({&x});
  int nx = x.on_tape() ? x.node() : -1;
  auto bw = [nx, mapping, out_shape_copy, r, n](Tape& tp, const std::vector<float>& g) {
    if (nx < 0) return;
    auto& gx = tp.grad_buffer(nx);
    std::vector<int> coord(r, 0);
    std::int64_t in_flat = 0;
    for (std::int64_t o = 0; o < n; ++o) {
      gx[in_flat] += g[o];
      for (int i = r - 1; i >= 0; --i) {
        in_flat += (*mapping)[i];
        if (++coord[i] < (*out_shape_copy)[i]) break;
        in_flat -= (*mapping)[i] * (*out_shape_copy)[i];
        coord[i] = 0;
      }
    }
  };
  return finish(t, std::move(out_shape), std::move(out), std::move(bw));
}

Tensor gather_neighbors(const Tensor& f, const std::vector<int>& idx, int n, int k) {
  if (f.rank() != 3) throw std::invalid_argument("gather_neighbors: features must be [B, Np, C]");
  int b = f.shape()[0], np = f.shape()[1], c = f.shape()[2];
  if (static_cast<std::int64_t>(idx.size()) != static_cast<std::int64_t>(b) * n * k)
    throw std::invalid_argument("gather_neighbors: index count mismatch");
  for (int v : idx)
    if (v < 0 || v >= np) throw std::invalid_argument("gather_neighbors: index out of range");

  std::vector<float> out(static_cast<size_t>(b) * n * k * c);
  const float* fp = f.data();
  for (int bi = 0; bi < b; ++bi) {
    const float* fbase = fp + static_cast<std::int64_t>(bi) * np * c;
    for (std::int64_t slot = 0; slot < static_cast<std::int64_t>(n) * k; ++slot) {
      int src = idx[static_cast<std::int64_t>(bi) * n * k + slot];
      std::copy(fbase + static_cast<std::int64_t>(src) * c, fbase + static_cast<std::int64_t>(src + 1) * c,
                out.begin() + (static_cast<std::int64_t>(bi) * n * k + slot) * c);
    }
  }

  Tape* t = tape_of({&f});
  int nf = f.on_tape() ? f.node() : -1;
  auto idx_copy = std::make_shared<std::vector<int>>(idx);
  auto bw = [nf, idx_copy, b, n, k, c, np](Tape& tp, const std::vector<float>& g) {
    if (nf < 0) return;
    auto& gf = tp.grad_buffer(nf);
    for (int bi = 0; bi < b; ++bi) {
      float* gbase = gf.data() + static_cast<std::int64_t>(bi) * np * c;
      for (std::int64_t slot = 0; slot < static_cast<std::int64_t>(n) * k; ++slot) {
        int src = (*idx_copy)[static_cast<std::int64_t>(bi) * n * k + slot];
        const float* grow = g.data() + (static_cast<std::int64_t>(bi) * n * k + slot) * c;
        float* gdst = gbase + static_cast<std::int64_t>(src) * c;
        for (int j = 0; j < c; ++j) gdst[j] += grow[j];
      }
    }
  };
  return finish(t, {b, n, k, c}, std::move(out), std::move(bw));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  int c = x.dim(-1);
  if (gamma.rank() != 1 || gamma.shape()[0] != c || beta.rank() != 1 || beta.shape()[0] != c)
    throw std::invalid_argument("layer_norm: parameter width mismatch");
  std::int64_t rows = x.size() / c;

  auto xhat = std::make_shared<std::vector<float>>(x.values().size());
  auto rstd = std::make_shared<std::vector<float>>(rows);
  std::vector<float> out(x.values().size());
  const float* xp = x.data();
  const float* gp = gamma.data();
  const float* bp = beta.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* row = xp + r * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= c;
    float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*rstd)[r] = rs;
    for (int j = 0; j < c; ++j) {
      float xh = static_cast<float>((row[j] - mean)) * rs;
      (*xhat)[r * c + j] = xh;
      out[r * c + j] = xh * gp[j] + bp[j];
    }
  }

  Tape* t = tape_of({&x, &gamma, &beta});
  int nx = x.on_tape() ? x.node() : -1;
  int ng = gamma.on_tape() ? gamma.node() : -1;
  int nb = beta.on_tape() ? beta.node() : -1;
  Buf gbuf = gamma.buffer();
  auto bw = [nx, ng, nb, gbuf, xhat, rstd, rows, c](Tape& tp, const std::vector<float>& g) {
    const float* gp2 = gbuf->data();
    if (ng >= 0) {
      auto& gg = tp.grad_buffer(ng);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) gg[j] += g[r * c + j] * (*xhat)[r * c + j];
    }
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) gb[j] += g[r * c + j];
    }
    if (nx >= 0) {
      auto& gx = tp.grad_buffer(nx);
      for (std::int64_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < c; ++j) {
          double dxh = static_cast<double>(g[r * c + j]) * gp2[j];
          m1 += dxh;
          m2 += dxh * (*xhat)[r * c + j];
        }
        m1 /= c;
        m2 /= c;
        float rs = (*rstd)[r];
        for (int j = 0; j < c; ++j) {
          double dxh = static_cast<double>(g[r * c + j]) * gp2[j];
          gx[r * c + j] += static_cast<float>(rs * (dxh - m1 - (*xhat)[r * c + j] * m2));
        }
      }
    }
  };
  return finish(t, x.shape(), std::move(out), std::move(bw));
}

namespace {

Tensor batch_norm_impl(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<float>& mean, const std::vector<float>& var,
                       bool training, float eps) {
  int c = x.dim(-1);
  std::int64_t rows = x.size() / c;
  auto xhat = std::make_shared<std::vector<float>>(x.values().size());
  std::vector<float> rstd(c);
  for (int j = 0; j < c; ++j) rstd[j] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(var[j]) + eps));
  std::vector<float> out(x.values().size());
  const float* xp = x.data();
  const float* gp = gamma.data();
  const float* bp = beta.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) {
      float xh = (xp[r * c + j] - mean[j]) * rstd[j];
      (*xhat)[r * c + j] = xh;
      out[r * c + j] = xh * gp[j] + bp[j];
    }

  Tape* t = tape_of({&x, &gamma, &beta});
  int nx = x.on_tape() ? x.node() : -1;
  int ng = gamma.on_tape() ? gamma.node() : -1;
  int nb = beta.on_tape() ? beta.node() : -1;
  Buf gbuf = gamma.buffer();
  auto rstd_copy = std::make_shared<std::vector<float>>(rstd);
  auto bw = [nx, ng, nb, gbuf, xhat, rstd_copy, rows, c, training](Tape& tp,
                                                                   const std::vector<float>& g) {
    const float* gp2 = gbuf->data();
    if (ng >= 0) {
      auto& gg = tp.grad_buffer(ng);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) gg[j] += g[r * c + j] * (*xhat)[r * c + j];
    }
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) gb[j] += g[r * c + j];
    }
    if (nx >= 0) {
      auto& gx = tp.grad_buffer(nx);
      if (!training) {
        for (std::int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < c; ++j) gx[r * c + j] += g[r * c + j] * gp2[j] * (*rstd_copy)[j];
        return;
      }
      std::vector<double> s1(c, 0.0), s2(c, 0.0);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
          s1[j] += g[r * c + j];
          s2[j] += static_cast<double>(g[r * c + j]) * (*xhat)[r * c + j];
        }
      double inv_rows = 1.0 / static_cast<double>(rows);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
          double d = g[r * c + j] - s1[j] * inv_rows - (*xhat)[r * c + j] * s2[j] * inv_rows;
          gx[r * c + j] += static_cast<float>(gp2[j] * (*rstd_copy)[j] * d);
        }
    }
  };
  return finish(t, x.shape(), std::move(out), std::move(bw));
}

}  // namespace

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        std::vector<float>* batch_mean, std::vector<float>* batch_var, float eps) {
  int c = x.dim(-1);
  if (gamma.rank() != 1 || gamma.shape()[0] != c || beta.rank() != 1 || beta.shape()[0] != c)
    throw std::invalid_argument("batch_norm: parameter width mismatch");
  std::int64_t rows = x.size() / c;
  if (rows < 2) throw std::invalid_argument("batch_norm: training mode needs >= 2 rows");
  std::vector<float> mean(c), var(c);
  const float* xp = x.data();
  for (int j = 0; j < c; ++j) {
    double m = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) m += xp[r * c + j];
    m /= static_cast<double>(rows);
    double v = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
      double d = xp[r * c + j] - m;
      v += d * d;
    }
    v /= static_cast<double>(rows);
    mean[j] = static_cast<float>(m);
    var[j] = static_cast<float>(v);
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  return batch_norm_impl(x, gamma, beta, mean, var, true, eps);
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<float>& mean, const std::vector<float>& var, float eps) {
  int c = x.dim(-1);
  if (static_cast<int>(mean.size()) != c || static_cast<int>(var.size()) != c)
    throw std::invalid_argument("batch_norm: running stats width mismatch");
  return batch_norm_impl(x, gamma, beta, mean, var, false, eps);
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [B, C]");
  int b = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<int>(labels.size()) != b)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= c) throw std::invalid_argument("cross_entropy: label out of range");

  auto probs = std::make_shared<std::vector<float>>(logits.values().size());
  const float* xp = logits.data();
  double total = 0.0;
  for (int r = 0; r < b; ++r) {
    const float* row = xp + static_cast<std::int64_t>(r) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      float e = std::exp(row[j] - mx);
      (*probs)[static_cast<std::int64_t>(r) * c + j] = e;
      sum += e;
    }
    float inv = static_cast<float>(1.0 / sum);
    for (int j = 0; j < c; ++j) (*probs)[static_cast<std::int64_t>(r) * c + j] *= inv;
    total += (mx + std::log(sum)) - row[labels[r]];
  }
  float loss = static_cast<float>(total / b);

  Tape* t = tape_of({&logits});
  int nx = logits.on_tape() ? logits.node() : -1;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  auto bw = [nx, probs, labels_copy, b, c](Tape& tp, const std::vector<float>& g) {
    if (nx < 0) return;
    auto& gx = tp.grad_buffer(nx);
    float g0 = g[0] / static_cast<float>(b);
    for (int r = 0; r < b; ++r)
      for (int j = 0; j < c; ++j) {
        float p = (*probs)[static_cast<std::int64_t>(r) * c + j];
        float onehot = (*labels_copy)[r] == j ? 1.0f : 0.0f;
        gx[static_cast<std::int64_t>(r) * c + j] += g0 * (p - onehot);
      }
  };
  return finish(t, {1}, {loss}, std::move(bw));
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (float v : x.values()) s += v;
  Tape* t = tape_of({&x});
  int nx = x.on_tape() ? x.node() : -1;
  return finish(t, {1}, {static_cast<float>(s)}, [nx](Tape& tp, const std::vector<float>& g) {
    if (nx < 0) return;
    auto& gx = tp.grad_buffer(nx);
    for (auto& v : gx) v += g[0];
  });
}

}  // namespace risur
