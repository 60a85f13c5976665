#pragma once

#include <cmath>

#include "sslts/nn/layers.hpp"

namespace sslts::nn {

// Diagonal state-space layer. The state kernel is materialized per forward
// (length = token count) and applied as a per-channel long convolution, plus
// a learned per-channel skip. Block layout: SSM -> GELU -> gated output
// projection -> dropout -> residual -> post-LayerNorm; no pre-normalization
// or batch norm inside the block. Non-causal mode sums a forward and a
// backward (anticausal) kernel pass.
template <class T>
struct S4DLayer {
  struct KernelParams {
    ag::Var<T> log_dt, log_neg_a_re, a_im, c_re, c_im;
  };

  KernelParams fwd;
  KernelParams bwd;  // unused when causal
  ag::Var<T> skip;
  Linear<T> out_proj;  // model_dim -> 2*model_dim, GLU halves it back
  LayerNorm<T> norm;
  int64_t dim = 0, state = 0;
  bool causal = false;
  double dropout_p = 0.0;

  S4DLayer() = default;
  S4DLayer(int64_t model_dim, int64_t state_dim, bool causal_, double dropout, Rng& rng)
      : dim(model_dim), state(state_dim), causal(causal_), dropout_p(dropout) {
    fwd = init_kernel(rng);
    if (!causal) bwd = init_kernel(rng);
    skip = param_normal<T>({dim}, rng, 1.0);
    out_proj = Linear<T>(dim, 2 * dim, true, rng);
    norm = LayerNorm<T>(dim);
  }

  // dt log-uniform in [1e-3, 1e-1]; poles at -1/2 + i*pi*n; C complex normal.
  KernelParams init_kernel(Rng& rng) {
    KernelParams k;
    Tensor<T> ldt({dim});
    for (int64_t d = 0; d < dim; ++d)
      ldt[d] = static_cast<T>(rng.uniform(std::log(1e-3), std::log(1e-1)));
    k.log_dt = ag::make_leaf(std::move(ldt), true);
    Tensor<T> lnar({dim, state}), aim({dim, state});
    for (int64_t d = 0; d < dim; ++d)
      for (int64_t n = 0; n < state; ++n) {
        lnar[d * state + n] = static_cast<T>(std::log(0.5));
        aim[d * state + n] = static_cast<T>(M_PI * static_cast<double>(n));
      }
    k.log_neg_a_re = ag::make_leaf(std::move(lnar), true);
    k.a_im = ag::make_leaf(std::move(aim), true);
    k.c_re = param_normal<T>({dim, state}, rng, 1.0);
    k.c_im = param_normal<T>({dim, state}, rng, 1.0);
    return k;
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training, uint64_t seed) {
    const int64_t L = x->value.dim(1);
    auto u = ag::transpose_last2(x);  // [B,D,L]
    auto kf = ag::ssm_kernel(fwd.log_dt, fwd.log_neg_a_re, fwd.a_im, fwd.c_re, fwd.c_im, L);
    auto y = ag::long_conv(u, kf, false);
    if (!causal) {
      auto kb = ag::ssm_kernel(bwd.log_dt, bwd.log_neg_a_re, bwd.a_im, bwd.c_re, bwd.c_im, L);
      y = ag::add(y, ag::long_conv(u, kb, true));
    }
    y = ag::add(y, ag::channel_scale(u, skip));
    auto t = ag::gelu(ag::transpose_last2(y));
    t = ag::glu(out_proj.forward(t));
    t = ag::dropout(t, dropout_p, seed, training);
    return norm.forward(ag::add(x, t));
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix,
               const std::string& group) const {
    auto put = [&](const KernelParams& k, const std::string& tag) {
      out.push_back({prefix + tag + ".log_dt", group, k.log_dt});
      out.push_back({prefix + tag + ".log_neg_a_re", group, k.log_neg_a_re});
      out.push_back({prefix + tag + ".a_im", group, k.a_im});
      out.push_back({prefix + tag + ".c_re", group, k.c_re});
      out.push_back({prefix + tag + ".c_im", group, k.c_im});
    };
    put(fwd, ".kernel_fwd");
    if (!causal) put(bwd, ".kernel_bwd");
    out.push_back({prefix + ".skip", group, skip});
    out_proj.collect(out, prefix + ".out_proj", group);
    norm.collect(out, prefix + ".norm", group);
  }
};

}  // namespace sslts::nn
