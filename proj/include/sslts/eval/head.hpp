#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sslts/autograd/ops.hpp"
#include "sslts/nn/layers.hpp"

namespace sslts::eval {

enum class HeadVariant { kLinearMeanpool, kQueryAttention, kLinearFrozen };

// Downstream prediction head: the linear variants classify mean-pooled
// tokens; the query-attention variant pools the full token sequence with one
// learned query vector, multi-head cross-attention without bias terms, an
// output projection, and a linear classifier on top.
template <class T>
class PredictionHead {
 public:
  PredictionHead(HeadVariant variant, int64_t model_dim, int64_t num_targets, int64_t num_heads,
                 uint64_t seed)
      : variant_(variant), heads_(num_heads), dim_(model_dim) {
    Rng rng(seed);
    if (variant_ == HeadVariant::kQueryAttention) {
      if (num_heads < 1 || model_dim % num_heads != 0)
        throw ConfigError("attention head count " + std::to_string(num_heads) +
                          " must divide model dim " + std::to_string(model_dim));
      query_ = nn::param_normal<T>({model_dim}, rng, 1.0 / std::sqrt(model_dim));
      key_ = nn::Linear<T>(model_dim, model_dim, false, rng);
      value_ = nn::Linear<T>(model_dim, model_dim, false, rng);
      out_ = nn::Linear<T>(model_dim, model_dim, false, rng);
    }
    cls_ = nn::Linear<T>(model_dim, num_targets, true, rng);
  }

  // tokens [B, L, D] -> predictions [B, num_targets].
  ag::Var<T> forward(const ag::Var<T>& tokens) const {
    if (variant_ != HeadVariant::kQueryAttention) {
      return cls_.forward(ag::mean_time(tokens));
    }
    const int64_t B = tokens->value.dim(0);
    const int64_t dh = dim_ / heads_;
    auto kh = ag::split_heads(key_.forward(tokens), heads_);      // [BH, L, dh]
    auto vh = ag::split_heads(value_.forward(tokens), heads_);    // [BH, L, dh]
    auto qh = ag::split_heads(ag::broadcast_token(query_, B, 1), heads_);  // [BH, 1, dh]
    auto attn = ag::softmax_last(
        ag::scale(ag::bmm(qh, kh, false, true), 1.0 / std::sqrt(static_cast<double>(dh))));
    auto pooled = ag::reshape(ag::merge_heads(ag::bmm(attn, vh, false, false), heads_), {B, dim_});
    return cls_.forward(out_.forward(pooled));
  }

  void collect_params(std::vector<nn::NamedParam<T>>& out) const {
    if (variant_ == HeadVariant::kQueryAttention) {
      out.push_back({"head.query", "head", query_});
      key_.collect(out, "head.key", "head");
      value_.collect(out, "head.value", "head");
      out_.collect(out, "head.out", "head");
    }
    cls_.collect(out, "head.classifier", "head");
  }

  HeadVariant variant() const { return variant_; }

 private:
  HeadVariant variant_;
  int64_t heads_;
  int64_t dim_;
  ag::Var<T> query_;
  nn::Linear<T> key_, value_, out_, cls_;
};

}  // namespace sslts::eval
