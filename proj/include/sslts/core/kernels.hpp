#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "sslts/core/fft.hpp"

// Hot inner loops. Every kernel has an OpenMP build (namespace kernels) and a
// plain serial build (namespace kernels::serial) with identical semantics;
// tests compare them and the benchmark target times them. Parallel loops only
// split independent output elements, never a single accumulation, so results
// are bitwise identical at any thread count.
namespace sslts::kernels {

namespace detail {

template <class T>
inline T dot_strided(const T* a, int64_t sa, const T* b, int64_t sb, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += a[i * sa] * b[i * sb];
  return acc;
}

}  // namespace detail

// C[M,N] = A op B (+C if accumulate). A is MxK (KxM when trans_a), B is KxN
// (NxK when trans_b), all row-major.
template <class T>
void matmul_serial(const T* A, const T* B, T* C, int64_t M, int64_t N, int64_t K, bool trans_a,
                   bool trans_b, bool accumulate) {
  const int64_t a_row = trans_a ? 1 : K;
  const int64_t a_col = trans_a ? M : 1;
  const int64_t b_row = trans_b ? 1 : N;
  const int64_t b_col = trans_b ? K : 1;
  for (int64_t m = 0; m < M; ++m) {
    for (int64_t n = 0; n < N; ++n) {
      T acc = detail::dot_strided(A + m * a_row, a_col, B + n * b_col, b_row, K);
      C[m * N + n] = accumulate ? C[m * N + n] + acc : acc;
    }
  }
}

template <class T>
void matmul(const T* A, const T* B, T* C, int64_t M, int64_t N, int64_t K, bool trans_a,
            bool trans_b, bool accumulate) {
  const int64_t a_row = trans_a ? 1 : K;
  const int64_t a_col = trans_a ? M : 1;
  const int64_t b_row = trans_b ? 1 : N;
  const int64_t b_col = trans_b ? K : 1;
#pragma omp parallel for schedule(static)
  for (int64_t m = 0; m < M; ++m) {
    for (int64_t n = 0; n < N; ++n) {
      T acc = detail::dot_strided(A + m * a_row, a_col, B + n * b_col, b_row, K);
      C[m * N + n] = accumulate ? C[m * N + n] + acc : acc;
    }
  }
}

// Batched matmul over G independent [M,K]x[K,N] problems.
template <class T>
void bmm_serial(const T* A, const T* B, T* C, int64_t G, int64_t M, int64_t N, int64_t K,
                bool trans_a, bool trans_b, bool accumulate) {
  for (int64_t g = 0; g < G; ++g)
    matmul_serial(A + g * M * K, B + g * K * N, C + g * M * N, M, N, K, trans_a, trans_b,
                  accumulate);
}

template <class T>
void bmm(const T* A, const T* B, T* C, int64_t G, int64_t M, int64_t N, int64_t K, bool trans_a,
         bool trans_b, bool accumulate) {
  const int64_t a_row = trans_a ? 1 : K;
  const int64_t a_col = trans_a ? M : 1;
  const int64_t b_row = trans_b ? 1 : N;
  const int64_t b_col = trans_b ? K : 1;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t g = 0; g < G; ++g) {
    for (int64_t m = 0; m < M; ++m) {
      const T* Ag = A + g * M * K;
      const T* Bg = B + g * K * N;
      T* Cg = C + g * M * N;
      for (int64_t n = 0; n < N; ++n) {
        T acc = detail::dot_strided(Ag + m * a_row, a_col, Bg + n * b_col, b_row, K);
        Cg[m * N + n] = accumulate ? Cg[m * N + n] + acc : acc;
      }
    }
  }
}

struct Conv1dShape {
  int64_t batch = 0;
  int64_t c_in = 0;
  int64_t len = 0;
  int64_t c_out = 0;
  int64_t ksize = 1;
  int64_t stride = 1;
  int64_t dilation = 1;

  // Centered zero padding with floor(len/stride) outputs, so the token-count
  // contract depends only on the stride product.
  int64_t pad_left() const { return ((ksize - 1) * dilation) / 2; }
  int64_t out_len() const { return len / stride; }
};

namespace detail {

template <class T>
inline T conv1d_tap(const T* x, const T* w, const Conv1dShape& s, int64_t b, int64_t co,
                    int64_t t) {
  const int64_t base = t * s.stride - s.pad_left();
  T acc = T(0);
  for (int64_t ci = 0; ci < s.c_in; ++ci) {
    const T* xrow = x + (b * s.c_in + ci) * s.len;
    const T* wrow = w + (co * s.c_in + ci) * s.ksize;
    for (int64_t k = 0; k < s.ksize; ++k) {
      int64_t pos = base + k * s.dilation;
      if (pos >= 0 && pos < s.len) acc += wrow[k] * xrow[pos];
    }
  }
  return acc;
}

}  // namespace detail

// x [B,Cin,L], w [Cout,Cin,k], bias [Cout] or null -> y [B,Cout,Lout].
template <class T>
void conv1d_fwd_serial(const T* x, const T* w, const T* bias, T* y, const Conv1dShape& s) {
  const int64_t lo = s.out_len();
  for (int64_t b = 0; b < s.batch; ++b)
    for (int64_t co = 0; co < s.c_out; ++co) {
      T* yrow = y + (b * s.c_out + co) * lo;
      const T add = bias ? bias[co] : T(0);
      for (int64_t t = 0; t < lo; ++t) yrow[t] = detail::conv1d_tap(x, w, s, b, co, t) + add;
    }
}

template <class T>
void conv1d_fwd(const T* x, const T* w, const T* bias, T* y, const Conv1dShape& s) {
  const int64_t lo = s.out_len();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < s.batch; ++b)
    for (int64_t co = 0; co < s.c_out; ++co) {
      T* yrow = y + (b * s.c_out + co) * lo;
      const T add = bias ? bias[co] : T(0);
      for (int64_t t = 0; t < lo; ++t) yrow[t] = detail::conv1d_tap(x, w, s, b, co, t) + add;
    }
}

namespace detail {

template <class T>
inline T conv1d_dx_tap(const T* dy, const T* w, const Conv1dShape& s, int64_t lo, int64_t b,
                       int64_t ci, int64_t pos) {
  T acc = T(0);
  for (int64_t co = 0; co < s.c_out; ++co) {
    const T* dyrow = dy + (b * s.c_out + co) * lo;
    const T* wrow = w + (co * s.c_in + ci) * s.ksize;
    for (int64_t k = 0; k < s.ksize; ++k) {
      int64_t num = pos + s.pad_left() - k * s.dilation;
      if (num < 0 || num % s.stride != 0) continue;
      int64_t t = num / s.stride;
      if (t < lo) acc += wrow[k] * dyrow[t];
    }
  }
  return acc;
}

template <class T>
inline T conv1d_dw_tap(const T* dy, const T* x, const Conv1dShape& s, int64_t lo, int64_t co,
                       int64_t ci, int64_t k) {
  T acc = T(0);
  for (int64_t b = 0; b < s.batch; ++b) {
    const T* dyrow = dy + (b * s.c_out + co) * lo;
    const T* xrow = x + (b * s.c_in + ci) * s.len;
    for (int64_t t = 0; t < lo; ++t) {
      int64_t pos = t * s.stride - s.pad_left() + k * s.dilation;
      if (pos >= 0 && pos < s.len) acc += dyrow[t] * xrow[pos];
    }
  }
  return acc;
}

}  // namespace detail

template <class T>
void conv1d_bwd_x_serial(const T* dy, const T* w, T* dx, const Conv1dShape& s) {
  const int64_t lo = s.out_len();
  for (int64_t b = 0; b < s.batch; ++b)
    for (int64_t ci = 0; ci < s.c_in; ++ci) {
      T* dxrow = dx + (b * s.c_in + ci) * s.len;
      for (int64_t pos = 0; pos < s.len; ++pos)
        dxrow[pos] = detail::conv1d_dx_tap(dy, w, s, lo, b, ci, pos);
    }
}

template <class T>
void conv1d_bwd_x(const T* dy, const T* w, T* dx, const Conv1dShape& s) {
  const int64_t lo = s.out_len();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < s.batch; ++b)
    for (int64_t ci = 0; ci < s.c_in; ++ci) {
      T* dxrow = dx + (b * s.c_in + ci) * s.len;
      for (int64_t pos = 0; pos < s.len; ++pos)
        dxrow[pos] = detail::conv1d_dx_tap(dy, w, s, lo, b, ci, pos);
    }
}

template <class T>
void conv1d_bwd_w_serial(const T* dy, const T* x, T* dw, T* db, const Conv1dShape& s) {
  const int64_t lo = s.out_len();
  for (int64_t co = 0; co < s.c_out; ++co) {
    for (int64_t ci = 0; ci < s.c_in; ++ci)
      for (int64_t k = 0; k < s.ksize; ++k)
        dw[(co * s.c_in + ci) * s.ksize + k] = detail::conv1d_dw_tap(dy, x, s, lo, co, ci, k);
    if (db) {
      T acc = T(0);
      for (int64_t b = 0; b < s.batch; ++b) {
        const T* dyrow = dy + (b * s.c_out + co) * lo;
        for (int64_t t = 0; t < lo; ++t) acc += dyrow[t];
      }
      db[co] = acc;
    }
  }
}

template <class T>
void conv1d_bwd_w(const T* dy, const T* x, T* dw, T* db, const Conv1dShape& s) {
  const int64_t lo = s.out_len();
#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < s.c_out; ++co) {
    for (int64_t ci = 0; ci < s.c_in; ++ci)
      for (int64_t k = 0; k < s.ksize; ++k)
        dw[(co * s.c_in + ci) * s.ksize + k] = detail::conv1d_dw_tap(dy, x, s, lo, co, ci, k);
    if (db) {
      T acc = T(0);
      for (int64_t b = 0; b < s.batch; ++b) {
        const T* dyrow = dy + (b * s.c_out + co) * lo;
        for (int64_t t = 0; t < lo; ++t) acc += dyrow[t];
      }
      db[co] = acc;
    }
  }
}

namespace detail {

// Linear (zero-padded) convolution of one channel pair via a pow-2 FFT.
// flip=false: y[t] = sum_{s<=t} k[t-s] u[s] (causal).
// flip=true:  y[t] = sum_{s>=t} k[s-t] u[s] (anticausal; adjoint of causal).
template <class T>
void long_conv_single(const T* u, const T* k, T* y, int64_t L, bool flip) {
  const int64_t n = next_pow2(2 * L);
  std::vector<std::complex<T>> fu(static_cast<size_t>(n));
  std::vector<std::complex<T>> fk(static_cast<size_t>(n));
  for (int64_t t = 0; t < L; ++t) {
    fu[static_cast<size_t>(t)] = std::complex<T>(u[t], T(0));
    fk[static_cast<size_t>(t)] = std::complex<T>(k[t], T(0));
  }
  fft_inplace(fu, false);
  fft_inplace(fk, false);
  if (flip) {
    // Correlation: multiply by the conjugate spectrum of the (real) kernel.
    for (int64_t i = 0; i < n; ++i) fu[static_cast<size_t>(i)] *= std::conj(fk[static_cast<size_t>(i)]);
  } else {
    for (int64_t i = 0; i < n; ++i) fu[static_cast<size_t>(i)] *= fk[static_cast<size_t>(i)];
  }
  fft_inplace(fu, true);
  for (int64_t t = 0; t < L; ++t) y[t] = fu[static_cast<size_t>(t)].real();
}

template <class T>
void long_conv_single_direct(const T* u, const T* k, T* y, int64_t L, bool flip) {
  for (int64_t t = 0; t < L; ++t) {
    T acc = T(0);
    if (flip) {
      for (int64_t s = t; s < L; ++s) acc += k[s - t] * u[s];
    } else {
      for (int64_t s = 0; s <= t; ++s) acc += k[t - s] * u[s];
    }
    y[t] = acc;
  }
}

}  // namespace detail

// u [B,D,L] convolved with per-channel kernels k [D,L] -> y [B,D,L].
template <class T>
void long_conv_fwd_serial(const T* u, const T* k, T* y, int64_t B, int64_t D, int64_t L,
                          bool flip) {
  for (int64_t b = 0; b < B; ++b)
    for (int64_t d = 0; d < D; ++d)
      detail::long_conv_single(u + (b * D + d) * L, k + d * L, y + (b * D + d) * L, L, flip);
}

template <class T>
void long_conv_fwd(const T* u, const T* k, T* y, int64_t B, int64_t D, int64_t L, bool flip) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < B; ++b)
    for (int64_t d = 0; d < D; ++d)
      detail::long_conv_single(u + (b * D + d) * L, k + d * L, y + (b * D + d) * L, L, flip);
}

// Direct O(L^2) evaluation, the oracle for the FFT path.
template <class T>
void long_conv_fwd_direct(const T* u, const T* k, T* y, int64_t B, int64_t D, int64_t L,
                          bool flip) {
  for (int64_t b = 0; b < B; ++b)
    for (int64_t d = 0; d < D; ++d)
      detail::long_conv_single_direct(u + (b * D + d) * L, k + d * L, y + (b * D + d) * L, L,
                                      flip);
}

// Kernel gradient of the causal long conv: dk[d,tau] = sum_b sum_t dy[b,d,t] *
// u[b,d,t-tau] (flip=false) or its anticausal mirror. Parallel over channels;
// the batch sum stays inside one task for determinism.
namespace detail {

// dk[d,tau] for causal conv is the correlation sum_t dy[t] u[t-tau]; for the
// anticausal conv it is sum_t dy[t] u[t+tau]. Both are the anticausal single
// kernel with the argument order swapped.
template <class T>
void long_conv_dk_channel(const T* dy, const T* u, T* acc, T* tmp, int64_t B, int64_t D,
                          int64_t L, bool flip, int64_t d) {
  for (int64_t t = 0; t < L; ++t) acc[t] = T(0);
  for (int64_t b = 0; b < B; ++b) {
    const T* dyr = dy + (b * D + d) * L;
    const T* ur = u + (b * D + d) * L;
    if (flip)
      long_conv_single(ur, dyr, tmp, L, true);
    else
      long_conv_single(dyr, ur, tmp, L, true);
    for (int64_t t = 0; t < L; ++t) acc[t] += tmp[t];
  }
}

}  // namespace detail

template <class T>
void long_conv_bwd_k(const T* dy, const T* u, T* dk, int64_t B, int64_t D, int64_t L, bool flip) {
#pragma omp parallel for schedule(static)
  for (int64_t d = 0; d < D; ++d) {
    std::vector<T> tmp(static_cast<size_t>(L));
    detail::long_conv_dk_channel(dy, u, dk + d * L, tmp.data(), B, D, L, flip, d);
  }
}

template <class T>
void long_conv_bwd_k_serial(const T* dy, const T* u, T* dk, int64_t B, int64_t D, int64_t L,
                            bool flip) {
  for (int64_t d = 0; d < D; ++d) {
    std::vector<T> tmp(static_cast<size_t>(L));
    detail::long_conv_dk_channel(dy, u, dk + d * L, tmp.data(), B, D, L, flip, d);
  }
}

// Row-wise softmax with the max-subtraction trick; x and y are [N,K].
template <class T>
void softmax_rows_serial(const T* x, T* y, int64_t N, int64_t K) {
  for (int64_t n = 0; n < N; ++n) {
    const T* xr = x + n * K;
    T* yr = y + n * K;
    T mx = xr[0];
    for (int64_t j = 1; j < K; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int64_t j = 0; j < K; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    T inv = T(1) / sum;
    for (int64_t j = 0; j < K; ++j) yr[j] *= inv;
  }
}

template <class T>
void softmax_rows(const T* x, T* y, int64_t N, int64_t K) {
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < N; ++n) softmax_rows_serial(x + n * K, y + n * K, 1, K);
}

}  // namespace sslts::kernels
