#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "sslts/autograd/autograd.hpp"
#include "sslts/core/kernels.hpp"
#include "sslts/core/rng.hpp"

// Differentiable ops. Forward values are computed with the OpenMP kernels;
// each op installs an exact backward. Conventions: [B,L,D] token tensors,
// [B,C,L] channel-major signal tensors, weights [out,in] row-major.
namespace sslts::ag {

namespace detail {

template <class T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                " vs " + b->value.shape_str());
}

}  // namespace detail

// ---------------------------------------------------------------- arithmetic

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out = a->value;
  const T* bp = b->value.data();
  T* op_ = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) op_[i] += bp[i];
  return make_op<T>("add", {a, b}, std::move(out), [a, b](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad);
    if (b->requires_grad) b->accumulate(self.grad);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out = a->value;
  const T* bp = b->value.data();
  T* op_ = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) op_[i] -= bp[i];
  return make_op<T>("sub", {a, b}, std::move(out), [a, b](Node<T>& self) {
    if (a->requires_grad) a->accumulate(self.grad);
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) b->grad[i] -= self.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out = a->value;
  const T* bp = b->value.data();
  T* op_ = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) op_[i] *= bp[i];
  return make_op<T>("mul", {a, b}, std::move(out), [a, b](Node<T>& self) {
    const int64_t n = self.grad.numel();
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) b->grad[i] += self.grad[i] * a->value[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, double c) {
  Tensor<T> out = a->value;
  T* op_ = out.data();
  const T cc = static_cast<T>(c);
  for (int64_t i = 0; i < out.numel(); ++i) op_[i] *= cc;
  return make_op<T>("scale", {a}, std::move(out), [a, cc](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) a->grad[i] += self.grad[i] * cc;
  });
}

// Weighted sum of scalar vars; used to combine loss terms.
template <class T>
Var<T> wsum(const std::vector<Var<T>>& xs, const std::vector<double>& w) {
  if (xs.empty() || xs.size() != w.size()) throw std::invalid_argument("wsum: arity mismatch");
  Tensor<T> out({1});
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i]->value.numel() != 1) throw std::invalid_argument("wsum: non-scalar term");
    out[0] += static_cast<T>(w[i]) * xs[i]->value[0];
  }
  std::vector<Var<T>> parents(xs.begin(), xs.end());
  std::vector<double> wc = w;
  return make_op<T>("wsum", std::move(parents), std::move(out), [wc](Node<T>& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      p->grad[0] += static_cast<T>(wc[i]) * self.grad[0];
    }
  });
}

// ------------------------------------------------------------------- shaping

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape) {
  Tensor<T> out = a->value.reshaped(std::move(shape));
  return make_op<T>("reshape", {a}, std::move(out), [a](Node<T>& self) {
    if (!a->requires_grad) return;
    a->accumulate(self.grad.reshaped(a->value.shape()));
  });
}

// [B,X,Y] -> [B,Y,X]
template <class T>
Var<T> transpose_last2(const Var<T>& a) {
  const auto& s = a->value.shape();
  if (s.size() != 3) throw std::invalid_argument("transpose_last2: expects rank 3");
  const int64_t B = s[0], X = s[1], Y = s[2];
  Tensor<T> out({B, Y, X});
  const T* ap = a->value.data();
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t x = 0; x < X; ++x)
      for (int64_t y = 0; y < Y; ++y) op_[(b * Y + y) * X + x] = ap[(b * X + x) * Y + y];
  return make_op<T>("transpose_last2", {a}, std::move(out), [a, B, X, Y](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const T* gp = self.grad.data();
    T* ag = a->grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t y = 0; y < Y; ++y)
        for (int64_t x = 0; x < X; ++x) ag[(b * X + x) * Y + y] += gp[(b * Y + y) * X + x];
  });
}

// [B,L,H*Dh] -> [B*H,L,Dh]
template <class T>
Var<T> split_heads(const Var<T>& a, int64_t H) {
  const auto& s = a->value.shape();
  const int64_t B = s[0], L = s[1], D = s[2];
  if (D % H != 0) throw std::invalid_argument("split_heads: dim not divisible by heads");
  const int64_t Dh = D / H;
  Tensor<T> out({B * H, L, Dh});
  const T* ap = a->value.data();
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t d = 0; d < Dh; ++d)
          op_[((b * H + h) * L + l) * Dh + d] = ap[(b * L + l) * D + h * Dh + d];
  return make_op<T>("split_heads", {a}, std::move(out), [a, B, L, H, Dh, D](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const T* gp = self.grad.data();
    T* ag = a->grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t l = 0; l < L; ++l)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t d = 0; d < Dh; ++d)
            ag[(b * L + l) * D + h * Dh + d] += gp[((b * H + h) * L + l) * Dh + d];
  });
}

// [B*H,L,Dh] -> [B,L,H*Dh]
template <class T>
Var<T> merge_heads(const Var<T>& a, int64_t H) {
  const auto& s = a->value.shape();
  const int64_t BH = s[0], L = s[1], Dh = s[2];
  if (BH % H != 0) throw std::invalid_argument("merge_heads: batch not divisible by heads");
  const int64_t B = BH / H, D = H * Dh;
  Tensor<T> out({B, L, D});
  const T* ap = a->value.data();
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t d = 0; d < Dh; ++d)
          op_[(b * L + l) * D + h * Dh + d] = ap[((b * H + h) * L + l) * Dh + d];
  return make_op<T>("merge_heads", {a}, std::move(out), [a, B, L, H, Dh, D](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const T* gp = self.grad.data();
    T* ag = a->grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t l = 0; l < L; ++l)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t d = 0; d < Dh; ++d)
            ag[((b * H + h) * L + l) * Dh + d] += gp[(b * L + l) * D + h * Dh + d];
  });
}

// Contiguous slice along the token axis of [B,L,D].
template <class T>
Var<T> slice_time(const Var<T>& a, int64_t t0, int64_t len) {
  const auto& s = a->value.shape();
  const int64_t B = s[0], L = s[1], D = s[2];
  if (t0 < 0 || t0 + len > L) throw std::invalid_argument("slice_time: out of range");
  Tensor<T> out({B, len, D});
  const T* ap = a->value.data();
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    std::copy(ap + (b * L + t0) * D, ap + (b * L + t0 + len) * D, op_ + b * len * D);
  return make_op<T>("slice_time", {a}, std::move(out), [a, t0, B, L, D](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const int64_t len = self.grad.dim(1);
    const T* gp = self.grad.data();
    T* ag = a->grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < len * D; ++i) ag[(b * L + t0) * D + i] += gp[b * len * D + i];
  });
}

// Token gather with one index set shared across the batch: [B,L,D] -> [B,n,D].
template <class T>
Var<T> gather_time(const Var<T>& a, std::vector<int64_t> idx) {
  const auto& s = a->value.shape();
  const int64_t B = s[0], L = s[1], D = s[2];
  const int64_t n = static_cast<int64_t>(idx.size());
  for (int64_t i : idx)
    if (i < 0 || i >= L) throw std::invalid_argument("gather_time: index out of range");
  Tensor<T> out({B, n, D});
  const T* ap = a->value.data();
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < n; ++i)
      std::copy(ap + (b * L + idx[static_cast<size_t>(i)]) * D,
                ap + (b * L + idx[static_cast<size_t>(i)] + 1) * D, op_ + (b * n + i) * D);
  return make_op<T>("gather_time", {a}, std::move(out), [a, idx, B, L, D](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const int64_t n = static_cast<int64_t>(idx.size());
    const T* gp = self.grad.data();
    T* ag = a->grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < n; ++i)
        for (int64_t d = 0; d < D; ++d)
          ag[(b * L + idx[static_cast<size_t>(i)]) * D + d] += gp[(b * n + i) * D + d];
  });
}

// Rows of base at idx are replaced by rows of src: grads split accordingly.
template <class T>
Var<T> scatter_time(const Var<T>& base, const Var<T>& src, std::vector<int64_t> idx) {
  const auto& s = base->value.shape();
  const int64_t B = s[0], L = s[1], D = s[2];
  const int64_t n = static_cast<int64_t>(idx.size());
  if (src->value.dim(0) != B || src->value.dim(1) != n || src->value.dim(2) != D)
    throw std::invalid_argument("scatter_time: src shape mismatch");
  Tensor<T> out = base->value;
  const T* sp = src->value.data();
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < n; ++i)
      std::copy(sp + (b * n + i) * D, sp + (b * n + i + 1) * D,
                op_ + (b * L + idx[static_cast<size_t>(i)]) * D);
  return make_op<T>("scatter_time", {base, src}, std::move(out),
                    [base, src, idx, B, L, D](Node<T>& self) {
                      const int64_t n = static_cast<int64_t>(idx.size());
                      const T* gp = self.grad.data();
                      if (base->requires_grad) {
                        base->ensure_grad();
                        Tensor<T> g = self.grad;
                        for (int64_t b = 0; b < B; ++b)
                          for (int64_t i = 0; i < n; ++i)
                            std::fill(g.data() + (b * L + idx[static_cast<size_t>(i)]) * D,
                                      g.data() + (b * L + idx[static_cast<size_t>(i)] + 1) * D,
                                      T(0));
                        base->accumulate(g);
                      }
                      if (src->requires_grad) {
                        src->ensure_grad();
                        T* sg = src->grad.data();
                        for (int64_t b = 0; b < B; ++b)
                          for (int64_t i = 0; i < n; ++i)
                            for (int64_t d = 0; d < D; ++d)
                              sg[(b * n + i) * D + d] +=
                                  gp[(b * L + idx[static_cast<size_t>(i)]) * D + d];
                      }
                    });
}

// Masked positions of x replaced by a learned token: x [B,L,D], mask [B*L].
template <class T>
Var<T> mask_replace(const Var<T>& x, const std::vector<uint8_t>& mask, const Var<T>& tok) {
  const auto& s = x->value.shape();
  const int64_t B = s[0], L = s[1], D = s[2];
  if (static_cast<int64_t>(mask.size()) != B * L)
    throw std::invalid_argument("mask_replace: mask size mismatch");
  if (tok->value.numel() != D) throw std::invalid_argument("mask_replace: token dim mismatch");
  Tensor<T> out = x->value;
  T* op_ = out.data();
  const T* tp = tok->value.data();
  for (int64_t r = 0; r < B * L; ++r)
    if (mask[static_cast<size_t>(r)])
      std::copy(tp, tp + D, op_ + r * D);
  return make_op<T>("mask_replace", {x, tok}, std::move(out), [x, tok, mask, B, L, D](Node<T>& self) {
    const T* gp = self.grad.data();
    if (x->requires_grad) {
      x->ensure_grad();
      T* xg = x->grad.data();
      for (int64_t r = 0; r < B * L; ++r)
        if (!mask[static_cast<size_t>(r)])
          for (int64_t d = 0; d < D; ++d) xg[r * D + d] += gp[r * D + d];
    }
    if (tok->requires_grad) {
      tok->ensure_grad();
      T* tg = tok->grad.data();
      for (int64_t r = 0; r < B * L; ++r)
        if (mask[static_cast<size_t>(r)])
          for (int64_t d = 0; d < D; ++d) tg[d] += gp[r * D + d];
    }
  });
}

// tok [D] broadcast to [B,L,D].
template <class T>
Var<T> broadcast_token(const Var<T>& tok, int64_t B, int64_t L) {
  const int64_t D = tok->value.numel();
  Tensor<T> out({B, L, D});
  T* op_ = out.data();
  const T* tp = tok->value.data();
  for (int64_t r = 0; r < B * L; ++r) std::copy(tp, tp + D, op_ + r * D);
  return make_op<T>("broadcast_token", {tok}, std::move(out), [tok, B, L, D](Node<T>& self) {
    if (!tok->requires_grad) return;
    tok->ensure_grad();
    const T* gp = self.grad.data();
    T* tg = tok->grad.data();
    for (int64_t r = 0; r < B * L; ++r)
      for (int64_t d = 0; d < D; ++d) tg[d] += gp[r * D + d];
  });
}

// Mean over the token axis: [B,L,D] -> [B,D].
template <class T>
Var<T> mean_time(const Var<T>& a) {
  const auto& s = a->value.shape();
  const int64_t B = s[0], L = s[1], D = s[2];
  Tensor<T> out({B, D});
  const T* ap = a->value.data();
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t d = 0; d < D; ++d) op_[b * D + d] += ap[(b * L + l) * D + d];
  const T inv = T(1) / static_cast<T>(L);
  for (int64_t i = 0; i < out.numel(); ++i) op_[i] *= inv;
  return make_op<T>("mean_time", {a}, std::move(out), [a, B, L, D, inv](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const T* gp = self.grad.data();
    T* ag = a->grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t l = 0; l < L; ++l)
        for (int64_t d = 0; d < D; ++d) ag[(b * L + l) * D + d] += gp[b * D + d] * inv;
  });
}

// --------------------------------------------------------------- linear/bmm

// x [...,Din] times W [Dout,Din] (+ optional bias [Dout]) -> [...,Dout].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& W, const Var<T>& b = nullptr) {
  const auto& xs = x->value.shape();
  const int64_t Din = xs.back();
  const int64_t N = x->value.numel() / Din;
  const int64_t Dout = W->value.dim(0);
  if (W->value.dim(1) != Din)
    throw std::invalid_argument("linear: weight shape " + W->value.shape_str() +
                                " does not accept input " + x->value.shape_str());
  std::vector<int64_t> out_shape = xs;
  out_shape.back() = Dout;
  Tensor<T> out(out_shape);
  kernels::matmul(x->value.data(), W->value.data(), out.data(), N, Dout, Din, false, true, false);
  if (b) {
    if (b->value.numel() != Dout) throw std::invalid_argument("linear: bias dim mismatch");
    T* op_ = out.data();
    const T* bp = b->value.data();
    for (int64_t r = 0; r < N; ++r)
      for (int64_t j = 0; j < Dout; ++j) op_[r * Dout + j] += bp[j];
  }
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, W, b} : std::vector<Var<T>>{x, W};
  return make_op<T>("linear", std::move(parents), std::move(out),
                    [x, W, b, N, Din, Dout](Node<T>& self) {
                      const T* gp = self.grad.data();
                      if (x->requires_grad) {
                        x->ensure_grad();
                        kernels::matmul(gp, W->value.data(), x->grad.data(), N, Din, Dout, false,
                                        false, true);
                      }
                      if (W->requires_grad) {
                        W->ensure_grad();
                        kernels::matmul(gp, x->value.data(), W->grad.data(), Dout, Din, N, true,
                                        false, true);
                      }
                      if (b && b->requires_grad) {
                        b->ensure_grad();
                        T* bg = b->grad.data();
                        for (int64_t r = 0; r < N; ++r)
                          for (int64_t j = 0; j < Dout; ++j) bg[j] += gp[r * Dout + j];
                      }
                    });
}

// Batched matmul: a [G,M,K] x b [G,K,N] (transpose flags swap the inner
// interpretation, shapes given pre-transpose as stored).
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_a, bool trans_b) {
  const auto& as = a->value.shape();
  const auto& bs = b->value.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0])
    throw std::invalid_argument("bmm: expects matching rank-3 batches");
  const int64_t G = as[0];
  const int64_t M = trans_a ? as[2] : as[1];
  const int64_t K = trans_a ? as[1] : as[2];
  const int64_t Kb = trans_b ? bs[2] : bs[1];
  const int64_t N = trans_b ? bs[1] : bs[2];
  if (K != Kb) throw std::invalid_argument("bmm: inner dim mismatch");
  Tensor<T> out({G, M, N});
  kernels::bmm(a->value.data(), b->value.data(), out.data(), G, M, N, K, trans_a, trans_b, false);
  return make_op<T>(
      "bmm", {a, b}, std::move(out), [a, b, G, M, N, K, trans_a, trans_b](Node<T>& self) {
        const T* gp = self.grad.data();
        // dA = dC B^T (layout-adjusted for the stored transposes), dB = A^T dC.
        if (a->requires_grad) {
          a->ensure_grad();
          if (!trans_a)
            kernels::bmm(gp, b->value.data(), a->grad.data(), G, M, K, N, false, !trans_b, true);
          else
            kernels::bmm(b->value.data(), gp, a->grad.data(), G, K, M, N, trans_b, true, true);
        }
        if (b->requires_grad) {
          b->ensure_grad();
          if (!trans_b)
            kernels::bmm(a->value.data(), gp, b->grad.data(), G, K, N, M, !trans_a, false, true);
          else
            kernels::bmm(gp, a->value.data(), b->grad.data(), G, N, K, M, true, trans_a, true);
        }
      });
}

// -------------------------------------------------------------- activations

template <class T>
Var<T> gelu(const Var<T>& a) {
  Tensor<T> out = a->value;
  T* op_ = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double x = static_cast<double>(op_[i]);
    op_[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)));
  }
  return make_op<T>("gelu", {a}, std::move(out), [a](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    static const double kInvSqrt2Pi = 0.3989422804014327;
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      const double x = static_cast<double>(a->value[i]);
      const double d = 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
                       x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      a->grad[i] += self.grad[i] * static_cast<T>(d);
    }
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a->value;
  T* op_ = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) op_[i] = T(1) / (T(1) + std::exp(-op_[i]));
  auto res = make_op<T>("sigmoid", {a}, std::move(out), [a](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      const T y = self.value[i];
      a->grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
  return res;
}

// Gated linear unit over the last dim: [...,2D] -> [...,D].
template <class T>
Var<T> glu(const Var<T>& a) {
  const auto& s = a->value.shape();
  const int64_t D2 = s.back();
  if (D2 % 2 != 0) throw std::invalid_argument("glu: last dim must be even");
  const int64_t D = D2 / 2;
  const int64_t N = a->value.numel() / D2;
  std::vector<int64_t> out_shape = s;
  out_shape.back() = D;
  Tensor<T> out(out_shape);
  const T* ap = a->value.data();
  T* op_ = out.data();
  for (int64_t r = 0; r < N; ++r)
    for (int64_t d = 0; d < D; ++d) {
      const T g = T(1) / (T(1) + std::exp(-ap[r * D2 + D + d]));
      op_[r * D + d] = ap[r * D2 + d] * g;
    }
  return make_op<T>("glu", {a}, std::move(out), [a, N, D, D2](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const T* gp = self.grad.data();
    const T* ap = a->value.data();
    T* ag = a->grad.data();
    for (int64_t r = 0; r < N; ++r)
      for (int64_t d = 0; d < D; ++d) {
        const T g = T(1) / (T(1) + std::exp(-ap[r * D2 + D + d]));
        ag[r * D2 + d] += gp[r * D + d] * g;
        ag[r * D2 + D + d] += gp[r * D + d] * ap[r * D2 + d] * g * (T(1) - g);
      }
  });
}

// Inverted dropout with a seed-owned mask; identity when not training.
template <class T>
Var<T> dropout(const Var<T>& a, double p, uint64_t seed, bool training) {
  if (!training || p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  Rng rng(seed);
  auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(a->value.numel()));
  Tensor<T> out = a->value;
  T* op_ = out.data();
  const T inv_keep = static_cast<T>(1.0 / (1.0 - p));
  for (int64_t i = 0; i < out.numel(); ++i) {
    const bool keep = rng.uniform() >= p;
    (*mask)[static_cast<size_t>(i)] = keep;
    op_[i] = keep ? op_[i] * inv_keep : T(0);
  }
  return make_op<T>("dropout", {a}, std::move(out), [a, mask, inv_keep](Node<T>& self) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      if ((*mask)[static_cast<size_t>(i)]) a->grad[i] += self.grad[i] * inv_keep;
  });
}

// --------------------------------------------------------------------- norms

// LayerNorm over the last dim; gamma/beta optional (pass nullptr for a plain
// standardization, used for SSL targets).
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5) {
  const auto& s = x->value.shape();
  const int64_t D = s.back();
  const int64_t N = x->value.numel() / D;
  if (gamma && gamma->value.numel() != D) throw std::invalid_argument("layer_norm: gamma dim");
  if (beta && beta->value.numel() != D) throw std::invalid_argument("layer_norm: beta dim");
  Tensor<T> out(s);
  auto xhat = std::make_shared<Tensor<T>>(s);
  auto inv_std = std::make_shared<Tensor<T>>(std::vector<int64_t>{N});
  const T* xp = x->value.data();
  T* op_ = out.data();
  T* hp = xhat->data();
  for (int64_t r = 0; r < N; ++r) {
    T mean = T(0);
    for (int64_t d = 0; d < D; ++d) mean += xp[r * D + d];
    mean /= static_cast<T>(D);
    T var = T(0);
    for (int64_t d = 0; d < D; ++d) {
      const T c = xp[r * D + d] - mean;
      var += c * c;
    }
    var /= static_cast<T>(D);
    const T istd = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*inv_std)[r] = istd;
    for (int64_t d = 0; d < D; ++d) {
      const T h = (xp[r * D + d] - mean) * istd;
      hp[r * D + d] = h;
      op_[r * D + d] = gamma ? gamma->value[d] * h + (beta ? beta->value[d] : T(0)) : h;
    }
  }
  std::vector<Var<T>> parents{x};
  if (gamma) parents.push_back(gamma);
  if (beta) parents.push_back(beta);
  return make_op<T>(
      "layer_norm", std::move(parents), std::move(out),
      [x, gamma, beta, xhat, inv_std, N, D](Node<T>& self) {
        const T* gp = self.grad.data();
        const T* hp = xhat->data();
        if (gamma && gamma->requires_grad) {
          gamma->ensure_grad();
          for (int64_t r = 0; r < N; ++r)
            for (int64_t d = 0; d < D; ++d) gamma->grad[d] += gp[r * D + d] * hp[r * D + d];
        }
        if (beta && beta->requires_grad) {
          beta->ensure_grad();
          for (int64_t r = 0; r < N; ++r)
            for (int64_t d = 0; d < D; ++d) beta->grad[d] += gp[r * D + d];
        }
        if (!x->requires_grad) return;
        x->ensure_grad();
        T* xg = x->grad.data();
        for (int64_t r = 0; r < N; ++r) {
          T sum_g = T(0), sum_gh = T(0);
          for (int64_t d = 0; d < D; ++d) {
            const T g = gamma ? gp[r * D + d] * gamma->value[d] : gp[r * D + d];
            sum_g += g;
            sum_gh += g * hp[r * D + d];
          }
          const T mg = sum_g / static_cast<T>(D);
          const T mgh = sum_gh / static_cast<T>(D);
          const T istd = (*inv_std)[r];
          for (int64_t d = 0; d < D; ++d) {
            const T g = gamma ? gp[r * D + d] * gamma->value[d] : gp[r * D + d];
            xg[r * D + d] += istd * (g - mg - hp[r * D + d] * mgh);
          }
        }
      });
}

template <class T>
Var<T> layer_norm_plain(const Var<T>& x, double eps = 1e-5) {
  return layer_norm<T>(x, nullptr, nullptr, eps);
}

// BatchNorm over (batch, length) per channel; x [B,C,L]. Running statistics
// are owned by the caller and updated in training mode (unbiased variance in
// the running buffer, biased in the normalization, momentum convention 0.1).
template <class T>
Var<T> batch_norm1d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    Tensor<T>* running_mean, Tensor<T>* running_var, bool training,
                    double momentum = 0.1, double eps = 1e-5) {
  const auto& s = x->value.shape();
  if (s.size() != 3) throw std::invalid_argument("batch_norm1d: expects [B,C,L]");
  const int64_t B = s[0], C = s[1], L = s[2];
  const int64_t n = B * L;
  Tensor<T> out(s);
  const T* xp = x->value.data();
  T* op_ = out.data();

  auto mean = std::make_shared<Tensor<T>>(std::vector<int64_t>{C});
  auto inv_std = std::make_shared<Tensor<T>>(std::vector<int64_t>{C});
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      T m = T(0);
      for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l) m += xp[(b * C + c) * L + l];
      m /= static_cast<T>(n);
      T v = T(0);
      for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l) {
          const T d = xp[(b * C + c) * L + l] - m;
          v += d * d;
        }
      v /= static_cast<T>(n);
      (*mean)[c] = m;
      (*inv_std)[c] = T(1) / std::sqrt(v + static_cast<T>(eps));
      const T mom = static_cast<T>(momentum);
      (*running_mean)[c] = (T(1) - mom) * (*running_mean)[c] + mom * m;
      const T unbiased = n > 1 ? v * static_cast<T>(n) / static_cast<T>(n - 1) : v;
      (*running_var)[c] = (T(1) - mom) * (*running_var)[c] + mom * unbiased;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      (*mean)[c] = (*running_mean)[c];
      (*inv_std)[c] = T(1) / std::sqrt((*running_var)[c] + static_cast<T>(eps));
    }
  }
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const T m = (*mean)[c], istd = (*inv_std)[c];
      const T g = gamma->value[c], be = beta->value[c];
      for (int64_t l = 0; l < L; ++l)
        op_[(b * C + c) * L + l] = g * (xp[(b * C + c) * L + l] - m) * istd + be;
    }
  return make_op<T>(
      "batch_norm1d", {x, gamma, beta}, std::move(out),
      [x, gamma, beta, mean, inv_std, training, B, C, L, n](Node<T>& self) {
        const T* gp = self.grad.data();
        const T* xp = x->value.data();
        for (int64_t c = 0; c < C; ++c) {
          const T m = (*mean)[c], istd = (*inv_std)[c];
          T sum_g = T(0), sum_gh = T(0);
          for (int64_t b = 0; b < B; ++b)
            for (int64_t l = 0; l < L; ++l) {
              const T g = gp[(b * C + c) * L + l];
              sum_g += g;
              sum_gh += g * (xp[(b * C + c) * L + l] - m) * istd;
            }
          if (gamma->requires_grad) {
            gamma->ensure_grad();
            gamma->grad[c] += sum_gh;
          }
          if (beta->requires_grad) {
            beta->ensure_grad();
            beta->grad[c] += sum_g;
          }
          if (!x->requires_grad) continue;
          x->ensure_grad();
          T* xg = x->grad.data();
          const T gm = gamma->value[c];
          if (training) {
            const T mg = sum_g / static_cast<T>(n);
            const T mgh = sum_gh / static_cast<T>(n);
            for (int64_t b = 0; b < B; ++b)
              for (int64_t l = 0; l < L; ++l) {
                const int64_t i = (b * C + c) * L + l;
                const T h = (xp[i] - m) * istd;
                xg[i] += gm * istd * (gp[i] - mg - h * mgh);
              }
          } else {
            for (int64_t b = 0; b < B; ++b)
              for (int64_t l = 0; l < L; ++l) {
                const int64_t i = (b * C + c) * L + l;
                xg[i] += gm * istd * gp[i];
              }
          }
        }
      });
}

// ------------------------------------------------------------------ softmax

template <class T>
Var<T> softmax_last(const Var<T>& x) {
  const int64_t K = x->value.shape().back();
  const int64_t N = x->value.numel() / K;
  Tensor<T> out(x->value.shape());
  kernels::softmax_rows(x->value.data(), out.data(), N, K);
  return make_op<T>("softmax_last", {x}, std::move(out), [x, N, K](Node<T>& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const T* y = self.value.data();
    const T* gp = self.grad.data();
    T* xg = x->grad.data();
    for (int64_t r = 0; r < N; ++r) {
      T dot = T(0);
      for (int64_t k = 0; k < K; ++k) dot += gp[r * K + k] * y[r * K + k];
      for (int64_t k = 0; k < K; ++k) xg[r * K + k] += y[r * K + k] * (gp[r * K + k] - dot);
    }
  });
}

template <class T>
Var<T> log_softmax_last(const Var<T>& x) {
  const int64_t K = x->value.shape().back();
  const int64_t N = x->value.numel() / K;
  Tensor<T> out(x->value.shape());
  const T* xp = x->value.data();
  T* op_ = out.data();
  for (int64_t r = 0; r < N; ++r) {
    T mx = xp[r * K];
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, xp[r * K + k]);
    T sum = T(0);
    for (int64_t k = 0; k < K; ++k) sum += std::exp(xp[r * K + k] - mx);
    const T lse = mx + std::log(sum);
    for (int64_t k = 0; k < K; ++k) op_[r * K + k] = xp[r * K + k] - lse;
  }
  return make_op<T>("log_softmax_last", {x}, std::move(out), [x, N, K](Node<T>& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const T* y = self.value.data();
    const T* gp = self.grad.data();
    T* xg = x->grad.data();
    for (int64_t r = 0; r < N; ++r) {
      T sum_g = T(0);
      for (int64_t k = 0; k < K; ++k) sum_g += gp[r * K + k];
      for (int64_t k = 0; k < K; ++k)
        xg[r * K + k] += gp[r * K + k] - std::exp(y[r * K + k]) * sum_g;
    }
  });
}

// Additive causal mask for attention scores [G,Lq,Lk]: positions k > q get a
// large negative constant (grad passes unchanged through the add).
template <class T>
Var<T> apply_causal_mask(const Var<T>& x) {
  const auto& s = x->value.shape();
  const int64_t G = s[0], Lq = s[1], Lk = s[2];
  Tensor<T> out = x->value;
  T* op_ = out.data();
  const T neg = static_cast<T>(-1e30);
  for (int64_t g = 0; g < G; ++g)
    for (int64_t q = 0; q < Lq; ++q)
      for (int64_t k = q + 1; k < Lk; ++k) op_[(g * Lq + q) * Lk + k] = x->value[(g * Lq + q) * Lk + k] + neg;
  return make_op<T>("apply_causal_mask", {x}, std::move(out), [x](Node<T>& self) {
    if (!x->requires_grad) return;
    x->accumulate(self.grad);
  });
}

// ---------------------------------------------------------------------- rope

// Rotary position embedding on adjacent pairs of the head dim; x [G,L,Dh].
template <class T>
Var<T> rope(const Var<T>& x, double base = 10000.0) {
  const auto& s = x->value.shape();
  const int64_t G = s[0], L = s[1], Dh = s[2];
  if (Dh % 2 != 0) throw std::invalid_argument("rope: head dim must be even");
  auto cs = std::make_shared<Tensor<T>>(std::vector<int64_t>{L, Dh / 2});
  auto sn = std::make_shared<Tensor<T>>(std::vector<int64_t>{L, Dh / 2});
  for (int64_t t = 0; t < L; ++t)
    for (int64_t i = 0; i < Dh / 2; ++i) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(Dh));
      (*cs)[t * (Dh / 2) + i] = static_cast<T>(std::cos(static_cast<double>(t) * freq));
      (*sn)[t * (Dh / 2) + i] = static_cast<T>(std::sin(static_cast<double>(t) * freq));
    }
  Tensor<T> out(s);
  const T* xp = x->value.data();
  T* op_ = out.data();
  for (int64_t g = 0; g < G; ++g)
    for (int64_t t = 0; t < L; ++t)
      for (int64_t i = 0; i < Dh / 2; ++i) {
        const T c = (*cs)[t * (Dh / 2) + i], sv = (*sn)[t * (Dh / 2) + i];
        const T x0 = xp[(g * L + t) * Dh + 2 * i], x1 = xp[(g * L + t) * Dh + 2 * i + 1];
        op_[(g * L + t) * Dh + 2 * i] = x0 * c - x1 * sv;
        op_[(g * L + t) * Dh + 2 * i + 1] = x0 * sv + x1 * c;
      }
  return make_op<T>("rope", {x}, std::move(out), [x, cs, sn, G, L, Dh](Node<T>& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const T* gp = self.grad.data();
    T* xg = x->grad.data();
    for (int64_t g = 0; g < G; ++g)
      for (int64_t t = 0; t < L; ++t)
        for (int64_t i = 0; i < Dh / 2; ++i) {
          const T c = (*cs)[t * (Dh / 2) + i], sv = (*sn)[t * (Dh / 2) + i];
          const T g0 = gp[(g * L + t) * Dh + 2 * i], g1 = gp[(g * L + t) * Dh + 2 * i + 1];
          xg[(g * L + t) * Dh + 2 * i] += g0 * c + g1 * sv;
          xg[(g * L + t) * Dh + 2 * i + 1] += -g0 * sv + g1 * c;
        }
  });
}

// --------------------------------------------------------------- conv paths

template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
              int64_t dilation = 1) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 3 || ws.size() != 3) throw std::invalid_argument("conv1d: rank mismatch");
  kernels::Conv1dShape shp;
  shp.batch = xs[0];
  shp.c_in = xs[1];
  shp.len = xs[2];
  shp.c_out = ws[0];
  shp.ksize = ws[2];
  shp.stride = stride;
  shp.dilation = dilation;
  if (ws[1] != shp.c_in)
    throw std::invalid_argument("conv1d: weight expects " + std::to_string(ws[1]) +
                                " input channels, got " + std::to_string(shp.c_in));
  Tensor<T> out({shp.batch, shp.c_out, shp.out_len()});
  kernels::conv1d_fwd(x->value.data(), w->value.data(), b ? b->value.data() : nullptr, out.data(),
                      shp);
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
  return make_op<T>("conv1d", std::move(parents), std::move(out), [x, w, b, shp](Node<T>& self) {
    const T* gp = self.grad.data();
    if (x->requires_grad) {
      x->ensure_grad();
      Tensor<T> dx(x->value.shape());
      kernels::conv1d_bwd_x(gp, w->value.data(), dx.data(), shp);
      x->accumulate(dx);
    }
    if (w->requires_grad) {
      w->ensure_grad();
      Tensor<T> dw(w->value.shape());
      Tensor<T> db({shp.c_out});
      kernels::conv1d_bwd_w(gp, x->value.data(), dw.data(), b ? db.data() : nullptr, shp);
      w->accumulate(dw);
      if (b && b->requires_grad) b->accumulate(db);
    }
  });
}

// Per-channel long convolution: u [B,D,L], k [D,L]; flip selects the
// anticausal direction.
template <class T>
Var<T> long_conv(const Var<T>& u, const Var<T>& k, bool flip) {
  const auto& us = u->value.shape();
  const auto& ks = k->value.shape();
  if (us.size() != 3 || ks.size() != 2 || us[1] != ks[0] || us[2] != ks[1])
    throw std::invalid_argument("long_conv: shape mismatch " + u->value.shape_str() + " vs " +
                                k->value.shape_str());
  const int64_t B = us[0], D = us[1], L = us[2];
  Tensor<T> out(us);
  kernels::long_conv_fwd(u->value.data(), k->value.data(), out.data(), B, D, L, flip);
  return make_op<T>("long_conv", {u, k}, std::move(out), [u, k, B, D, L, flip](Node<T>& self) {
    const T* gp = self.grad.data();
    if (u->requires_grad) {
      u->ensure_grad();
      Tensor<T> du(u->value.shape());
      kernels::long_conv_fwd(gp, k->value.data(), du.data(), B, D, L, !flip);
      u->accumulate(du);
    }
    if (k->requires_grad) {
      k->ensure_grad();
      Tensor<T> dk(k->value.shape());
      kernels::long_conv_bwd_k(gp, u->value.data(), dk.data(), B, D, L, flip);
      k->accumulate(dk);
    }
  });
}

// Per-channel scaling of [B,D,L] by s [D] (the SSM skip path).
template <class T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& s) {
  const auto& xs = x->value.shape();
  const int64_t B = xs[0], D = xs[1], L = xs[2];
  if (s->value.numel() != D) throw std::invalid_argument("channel_scale: dim mismatch");
  Tensor<T> out = x->value;
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t d = 0; d < D; ++d) {
      const T sv = s->value[d];
      for (int64_t l = 0; l < L; ++l) op_[(b * D + d) * L + l] *= sv;
    }
  return make_op<T>("channel_scale", {x, s}, std::move(out), [x, s, B, D, L](Node<T>& self) {
    const T* gp = self.grad.data();
    if (x->requires_grad) {
      x->ensure_grad();
      T* xg = x->grad.data();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t d = 0; d < D; ++d) {
          const T sv = s->value[d];
          for (int64_t l = 0; l < L; ++l) xg[(b * D + d) * L + l] += gp[(b * D + d) * L + l] * sv;
        }
    }
    if (s->requires_grad) {
      s->ensure_grad();
      for (int64_t d = 0; d < D; ++d) {
        T acc = T(0);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t l = 0; l < L; ++l)
            acc += gp[(b * D + d) * L + l] * x->value[(b * D + d) * L + l];
        s->grad[d] += acc;
      }
    }
  });
}

// -------------------------------------------------------------- SSM kernel

// Materializes the diagonal state-space convolution kernel under zero-order
// hold. Per channel d and mode n: dt = exp(log_dt[d]), a = -exp(lnar) + i*ai,
// w = exp(dt*a), bbar = (w-1)/a, k[d,t] = sum_n Re(c * bbar * w^t).
// Mode sums run in a fixed order; channels parallelize.
template <class T>
Var<T> ssm_kernel(const Var<T>& log_dt, const Var<T>& log_neg_a_re, const Var<T>& a_im,
                  const Var<T>& c_re, const Var<T>& c_im, int64_t L) {
  const int64_t D = log_dt->value.numel();
  const int64_t N = log_neg_a_re->value.numel() / D;
  if (a_im->value.numel() != D * N || c_re->value.numel() != D * N ||
      c_im->value.numel() != D * N)
    throw std::invalid_argument("ssm_kernel: parameter shape mismatch");
  Tensor<T> out({D, L});
  {
    T* kp = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t d = 0; d < D; ++d) {
      const double dt = std::exp(static_cast<double>(log_dt->value[d]));
      for (int64_t t = 0; t < L; ++t) kp[d * L + t] = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const std::complex<double> a(-std::exp(static_cast<double>(log_neg_a_re->value[d * N + n])),
                                     static_cast<double>(a_im->value[d * N + n]));
        const std::complex<double> w = std::exp(dt * a);
        const std::complex<double> bbar = (w - 1.0) / a;
        const std::complex<double> c(static_cast<double>(c_re->value[d * N + n]),
                                     static_cast<double>(c_im->value[d * N + n]));
        std::complex<double> g = c * bbar;
        std::complex<double> p(1.0, 0.0);
        for (int64_t t = 0; t < L; ++t) {
          kp[d * L + t] += static_cast<T>((g * p).real());
          p *= w;
        }
      }
    }
  }
  return make_op<T>(
      "ssm_kernel", {log_dt, log_neg_a_re, a_im, c_re, c_im}, std::move(out),
      [log_dt, log_neg_a_re, a_im, c_re, c_im, D, N, L](Node<T>& self) {
        const T* dk = self.grad.data();
        log_dt->ensure_grad();
        log_neg_a_re->ensure_grad();
        a_im->ensure_grad();
        c_re->ensure_grad();
        c_im->ensure_grad();
#pragma omp parallel for schedule(static)
        for (int64_t d = 0; d < D; ++d) {
          const double dt = std::exp(static_cast<double>(log_dt->value[d]));
          double d_dt = 0.0;
          for (int64_t n = 0; n < N; ++n) {
            const double lnar = static_cast<double>(log_neg_a_re->value[d * N + n]);
            const std::complex<double> a(-std::exp(lnar),
                                         static_cast<double>(a_im->value[d * N + n]));
            const std::complex<double> w = std::exp(dt * a);
            const std::complex<double> bbar = (w - 1.0) / a;
            const std::complex<double> c(static_cast<double>(c_re->value[d * N + n]),
                                         static_cast<double>(c_im->value[d * N + n]));
            const std::complex<double> g = c * bbar;
            // S_g = sum_t dk[t] w^t, S_w = sum_t dk[t] t w^(t-1).
            std::complex<double> Sg(0.0, 0.0), Sw(0.0, 0.0);
            std::complex<double> p(1.0, 0.0), q(0.0, 0.0);
            for (int64_t t = 0; t < L; ++t) {
              const double gt = static_cast<double>(dk[d * L + t]);
              Sg += gt * p;
              Sw += gt * q;
              q = q * w + p;
              p *= w;
            }
            // Real-pair gradients via G_z = G_w * conj(f'(z)) for analytic f,
            // with G containers holding d/d(re) + i d/d(im).
            const std::complex<double> Gg = std::conj(Sg);
            std::complex<double> Gw = std::conj(g * Sw);
            const std::complex<double> Gc = Gg * std::conj(bbar);
            const std::complex<double> Gbbar = Gg * std::conj(c);
            Gw += Gbbar * std::conj(1.0 / a);
            std::complex<double> Ga = Gbbar * std::conj(-(w - 1.0) / (a * a));
            Ga += Gw * std::conj(dt * w);
            d_dt += (std::conj(Gw) * (a * w)).real();
            // d a_re / d lnar = a_re (a_re = -exp(lnar)).
            log_neg_a_re->grad[d * N + n] += static_cast<T>(Ga.real() * a.real());
            a_im->grad[d * N + n] += static_cast<T>(Ga.imag());
            c_re->grad[d * N + n] += static_cast<T>(Gc.real());
            c_im->grad[d * N + n] += static_cast<T>(Gc.imag());
          }
          log_dt->grad[d] += static_cast<T>(d_dt * dt);
        }
      });
}

// -------------------------------------------------------------- reductions

template <class T>
Var<T> sum_all(const Var<T>& x) {
  Tensor<T> out({1});
  const T* xp = x->value.data();
  for (int64_t i = 0; i < x->value.numel(); ++i) out[0] += xp[i];
  return make_op<T>("sum_all", {x}, std::move(out), [x](Node<T>& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const T g = self.grad[0];
    for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += g;
  });
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x->value.numel()));
}

// L2-normalizes each row of [N,D].
template <class T>
Var<T> l2_normalize_rows(const Var<T>& x, double eps = 1e-12) {
  const int64_t D = x->value.shape().back();
  const int64_t N = x->value.numel() / D;
  Tensor<T> out(x->value.shape());
  auto inv_norm = std::make_shared<Tensor<T>>(std::vector<int64_t>{N});
  const T* xp = x->value.data();
  T* op_ = out.data();
  for (int64_t r = 0; r < N; ++r) {
    T ss = T(0);
    for (int64_t d = 0; d < D; ++d) ss += xp[r * D + d] * xp[r * D + d];
    const T inv = T(1) / std::sqrt(ss + static_cast<T>(eps));
    (*inv_norm)[r] = inv;
    for (int64_t d = 0; d < D; ++d) op_[r * D + d] = xp[r * D + d] * inv;
  }
  return make_op<T>("l2_normalize_rows", {x}, std::move(out), [x, inv_norm, N, D](Node<T>& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const T* gp = self.grad.data();
    const T* y = self.value.data();
    T* xg = x->grad.data();
    for (int64_t r = 0; r < N; ++r) {
      T dot = T(0);
      for (int64_t d = 0; d < D; ++d) dot += gp[r * D + d] * y[r * D + d];
      const T inv = (*inv_norm)[r];
      for (int64_t d = 0; d < D; ++d)
        xg[r * D + d] += inv * (gp[r * D + d] - y[r * D + d] * dot);
    }
  });
}

// CPC positive extraction: logp [B,L,L] -> [B,L-k] taking [b,t,t+k].
template <class T>
Var<T> gather_diag_offset(const Var<T>& x, int64_t k) {
  const auto& s = x->value.shape();
  const int64_t B = s[0], L = s[1];
  if (s[2] != L || k <= 0 || k >= L) throw std::invalid_argument("gather_diag_offset: bad offset");
  Tensor<T> out({B, L - k});
  const T* xp = x->value.data();
  T* op_ = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = 0; t < L - k; ++t) op_[b * (L - k) + t] = xp[(b * L + t) * L + t + k];
  return make_op<T>("gather_diag_offset", {x}, std::move(out), [x, B, L, k](Node<T>& self) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const T* gp = self.grad.data();
    T* xg = x->grad.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t t = 0; t < L - k; ++t) xg[(b * L + t) * L + t + k] += gp[b * (L - k) + t];
  });
}

// ------------------------------------------------------------------- losses

struct LossStats {
  int64_t selected = 0;  // rows/positions that contributed
};

// Smooth-L1 (Huber with knee beta) between pred and a constant target,
// averaged over the masked positions and feature dim. Empty mask -> 0.
template <class T>
Var<T> smooth_l1_masked(const Var<T>& pred, const Tensor<T>& target,
                        const std::vector<uint8_t>& mask, double beta, LossStats* stats = nullptr) {
  const auto& s = pred->value.shape();
  const int64_t D = s.back();
  const int64_t R = pred->value.numel() / D;
  if (!pred->value.same_shape(target)) throw std::invalid_argument("smooth_l1: target shape");
  if (static_cast<int64_t>(mask.size()) != R) throw std::invalid_argument("smooth_l1: mask size");
  int64_t sel = 0;
  for (uint8_t m : mask) sel += m ? 1 : 0;
  if (stats) stats->selected = sel;
  Tensor<T> out({1});
  if (sel == 0) return make_op<T>("smooth_l1_masked", {pred}, std::move(out), [](Node<T>&) {});
  const T b = static_cast<T>(beta);
  const T* pp = pred->value.data();
  const T* tp = target.data();
  double acc = 0.0;
  for (int64_t r = 0; r < R; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    for (int64_t d = 0; d < D; ++d) {
      const T df = pp[r * D + d] - tp[r * D + d];
      const T ad = std::abs(df);
      acc += static_cast<double>(ad < b ? T(0.5) * df * df / b : ad - T(0.5) * b);
    }
  }
  const double denom = static_cast<double>(sel * D);
  out[0] = static_cast<T>(acc / denom);
  auto tcopy = std::make_shared<Tensor<T>>(target);
  return make_op<T>("smooth_l1_masked", {pred}, std::move(out),
                    [pred, tcopy, mask, b, R, D, denom](Node<T>& self) {
                      if (!pred->requires_grad) return;
                      pred->ensure_grad();
                      const T g = self.grad[0] / static_cast<T>(denom);
                      const T* pp = pred->value.data();
                      const T* tp = tcopy->data();
                      T* pg = pred->grad.data();
                      for (int64_t r = 0; r < R; ++r) {
                        if (!mask[static_cast<size_t>(r)]) continue;
                        for (int64_t d = 0; d < D; ++d) {
                          const T df = pp[r * D + d] - tp[r * D + d];
                          const T dd = std::abs(df) < b ? df / b : (df > T(0) ? T(1) : T(-1));
                          pg[r * D + d] += g * dd;
                        }
                      }
                    });
}

// Cross-entropy over selected rows: logits [N,K], integer labels, binary row
// selection. Mean over selected rows; empty selection -> 0.
template <class T>
Var<T> cross_entropy_rows(const Var<T>& logits, const std::vector<int64_t>& labels,
                          const std::vector<uint8_t>& select, LossStats* stats = nullptr) {
  const int64_t K = logits->value.shape().back();
  const int64_t N = logits->value.numel() / K;
  if (static_cast<int64_t>(labels.size()) != N || static_cast<int64_t>(select.size()) != N)
    throw std::invalid_argument("cross_entropy_rows: size mismatch");
  int64_t sel = 0;
  for (uint8_t m : select) sel += m ? 1 : 0;
  if (stats) stats->selected = sel;
  Tensor<T> out({1});
  if (sel == 0) return make_op<T>("cross_entropy_rows", {logits}, std::move(out), [](Node<T>&) {});
  auto probs = std::make_shared<Tensor<T>>(logits->value.shape());
  kernels::softmax_rows(logits->value.data(), probs->data(), N, K);
  double acc = 0.0;
  for (int64_t r = 0; r < N; ++r) {
    if (!select[static_cast<size_t>(r)]) continue;
    const T p = std::max((*probs)[r * K + labels[static_cast<size_t>(r)]],
                         static_cast<T>(1e-30));
    acc -= std::log(static_cast<double>(p));
  }
  out[0] = static_cast<T>(acc / static_cast<double>(sel));
  return make_op<T>("cross_entropy_rows", {logits}, std::move(out),
                    [logits, probs, labels, select, N, K, sel](Node<T>& self) {
                      if (!logits->requires_grad) return;
                      logits->ensure_grad();
                      const T g = self.grad[0] / static_cast<T>(sel);
                      T* lg = logits->grad.data();
                      for (int64_t r = 0; r < N; ++r) {
                        if (!select[static_cast<size_t>(r)]) continue;
                        for (int64_t k = 0; k < K; ++k) {
                          T d = (*probs)[r * K + k];
                          if (k == labels[static_cast<size_t>(r)]) d -= T(1);
                          lg[r * K + k] += g * d;
                        }
                      }
                    });
}

// KL(targets || softmax(logits)) averaged over selected rows; targets are
// constant row distributions. Zero target entries contribute zero.
template <class T>
Var<T> kl_rows(const Var<T>& logits, const Tensor<T>& targets, const std::vector<uint8_t>& select,
               LossStats* stats = nullptr) {
  const int64_t K = logits->value.shape().back();
  const int64_t N = logits->value.numel() / K;
  if (!logits->value.same_shape(targets)) throw std::invalid_argument("kl_rows: target shape");
  if (static_cast<int64_t>(select.size()) != N) throw std::invalid_argument("kl_rows: select size");
  int64_t sel = 0;
  for (uint8_t m : select) sel += m ? 1 : 0;
  if (stats) stats->selected = sel;
  Tensor<T> out({1});
  if (sel == 0) return make_op<T>("kl_rows", {logits}, std::move(out), [](Node<T>&) {});
  auto probs = std::make_shared<Tensor<T>>(logits->value.shape());
  kernels::softmax_rows(logits->value.data(), probs->data(), N, K);
  auto tcopy = std::make_shared<Tensor<T>>(targets);
  double acc = 0.0;
  for (int64_t r = 0; r < N; ++r) {
    if (!select[static_cast<size_t>(r)]) continue;
    for (int64_t k = 0; k < K; ++k) {
      const double t = static_cast<double>((*tcopy)[r * K + k]);
      if (t <= 0.0) continue;
      const double p = std::max(static_cast<double>((*probs)[r * K + k]), 1e-30);
      acc += t * (std::log(t) - std::log(p));
    }
  }
  out[0] = static_cast<T>(acc / static_cast<double>(sel));
  return make_op<T>("kl_rows", {logits}, std::move(out),
                    [logits, probs, tcopy, select, N, K, sel](Node<T>& self) {
                      if (!logits->requires_grad) return;
                      logits->ensure_grad();
                      const T g = self.grad[0] / static_cast<T>(sel);
                      T* lg = logits->grad.data();
                      for (int64_t r = 0; r < N; ++r) {
                        if (!select[static_cast<size_t>(r)]) continue;
                        for (int64_t k = 0; k < K; ++k)
                          lg[r * K + k] += g * ((*probs)[r * K + k] - (*tcopy)[r * K + k]);
                      }
                    });
}

// Binary cross-entropy with logits against constant targets, mean over all
// entries, computed in the numerically stable split form.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets) {
  if (!logits->value.same_shape(targets)) throw std::invalid_argument("bce: target shape");
  const int64_t n = logits->value.numel();
  Tensor<T> out({1});
  const T* zp = logits->value.data();
  const T* yp = targets.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double z = static_cast<double>(zp[i]);
    const double y = static_cast<double>(yp[i]);
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  out[0] = static_cast<T>(acc / static_cast<double>(n));
  auto tcopy = std::make_shared<Tensor<T>>(targets);
  return make_op<T>("bce_with_logits", {logits}, std::move(out), [logits, tcopy, n](Node<T>& self) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const T g = self.grad[0] / static_cast<T>(n);
    const T* zp = logits->value.data();
    T* lg = logits->grad.data();
    for (int64_t i = 0; i < n; ++i) {
      const T s = T(1) / (T(1) + std::exp(-zp[i]));
      lg[i] += g * (s - (*tcopy)[i]);
    }
  });
}

// Mean absolute error against a constant target.
template <class T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& target) {
  if (!pred->value.same_shape(target)) throw std::invalid_argument("l1_loss: target shape");
  const int64_t n = pred->value.numel();
  Tensor<T> out({1});
  const T* pp = pred->value.data();
  const T* tp = target.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(pp[i] - tp[i]));
  out[0] = static_cast<T>(acc / static_cast<double>(n));
  auto tcopy = std::make_shared<Tensor<T>>(target);
  return make_op<T>("l1_loss", {pred}, std::move(out), [pred, tcopy, n](Node<T>& self) {
    if (!pred->requires_grad) return;
    pred->ensure_grad();
    const T g = self.grad[0] / static_cast<T>(n);
    const T* pp = pred->value.data();
    T* pg = pred->grad.data();
    for (int64_t i = 0; i < n; ++i) {
      const T d = pp[i] - (*tcopy)[i];
      pg[i] += g * (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)));
    }
  });
}

}  // namespace sslts::ag
