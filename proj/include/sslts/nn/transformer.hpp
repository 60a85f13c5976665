#pragma once

#include <cmath>

#include "sslts/nn/layers.hpp"

namespace sslts::nn {

// Pre-norm transformer block: x + Attn(LN(x)), then x + FF(LN(x)).
// Rotary embeddings are applied to queries and keys per head; the feedforward
// expands 4x with GELU. Causal mode masks attention above the diagonal.
template <class T>
struct TransformerBlock {
  Linear<T> wq, wk, wv, wo;
  Linear<T> ff1, ff2;
  LayerNorm<T> norm_attn, norm_ff;
  int64_t dim = 0, heads = 0;
  bool causal = false;
  double dropout_p = 0.0;

  TransformerBlock() = default;
  TransformerBlock(int64_t model_dim, int64_t num_heads, bool causal_, double dropout, Rng& rng)
      : wq(model_dim, model_dim, true, rng),
        wk(model_dim, model_dim, true, rng),
        wv(model_dim, model_dim, true, rng),
        wo(model_dim, model_dim, true, rng),
        ff1(model_dim, 4 * model_dim, true, rng),
        ff2(4 * model_dim, model_dim, true, rng),
        norm_attn(model_dim),
        norm_ff(model_dim),
        dim(model_dim),
        heads(num_heads),
        causal(causal_),
        dropout_p(dropout) {
    if (model_dim % num_heads != 0)
      throw ConfigError("model_dim must be divisible by num_heads");
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training, uint64_t seed) {
    const int64_t Dh = dim / heads;
    auto h = norm_attn.forward(x);
    auto q = ag::rope(ag::split_heads(wq.forward(h), heads));
    auto k = ag::rope(ag::split_heads(wk.forward(h), heads));
    auto v = ag::split_heads(wv.forward(h), heads);
    auto scores = ag::scale(ag::bmm(q, k, false, true),
                            static_cast<T>(1.0 / std::sqrt(static_cast<double>(Dh))));
    if (causal) scores = ag::apply_causal_mask(scores);
    auto attn = ag::bmm(ag::softmax_last(scores), v, false, false);
    auto o = wo.forward(ag::merge_heads(attn, heads));
    o = ag::dropout(o, dropout_p, derive_seed(seed, {1}), training);
    auto y = ag::add(x, o);
    auto f = ff2.forward(ag::gelu(ff1.forward(norm_ff.forward(y))));
    f = ag::dropout(f, dropout_p, derive_seed(seed, {2}), training);
    return ag::add(y, f);
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix,
               const std::string& group) const {
    wq.collect(out, prefix + ".wq", group);
    wk.collect(out, prefix + ".wk", group);
    wv.collect(out, prefix + ".wv", group);
    wo.collect(out, prefix + ".wo", group);
    ff1.collect(out, prefix + ".ff1", group);
    ff2.collect(out, prefix + ".ff2", group);
    norm_attn.collect(out, prefix + ".norm_attn", group);
    norm_ff.collect(out, prefix + ".norm_ff", group);
  }
};

}  // namespace sslts::nn
