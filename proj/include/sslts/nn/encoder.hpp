#pragma once

#include <map>
#include <string>
#include <vector>

#include "sslts/common.hpp"
#include "sslts/nn/net1d.hpp"
#include "sslts/nn/s4d.hpp"
#include "sslts/nn/transformer.hpp"

namespace sslts::nn {

enum class Family { kSsm, kTransformer, kNet1d };

inline Family family_from_string(const std::string& s) {
  if (s == "ssm") return Family::kSsm;
  if (s == "transformer") return Family::kTransformer;
  if (s == "net1d") return Family::kNet1d;
  throw ConfigError("unknown backbone family: " + s);
}

inline std::string family_to_string(Family f) {
  switch (f) {
    case Family::kSsm: return "ssm";
    case Family::kTransformer: return "transformer";
    default: return "net1d";
  }
}

struct StemConfig {
  std::vector<int64_t> out_dims{512, 512, 512, 512};
  std::vector<int64_t> kernel_sizes{3, 1, 1, 1};
  std::vector<int64_t> strides{2, 1, 1, 1};
  std::vector<int64_t> dilations{1, 1, 1, 1};
  bool use_batch_norm = true;

  void validate() const {
    if (out_dims.size() != 4 || kernel_sizes.size() != 4 || strides.size() != 4 ||
        dilations.size() != 4)
      throw ConfigError("stem lists must all have length 4");
    for (size_t i = 0; i < 4; ++i) {
      if (out_dims[i] <= 0 || kernel_sizes[i] <= 0 || strides[i] <= 0 || dilations[i] <= 0)
        throw ConfigError("stem dims, kernels, strides and dilations must be positive");
    }
  }

  int64_t stride_product() const {
    int64_t p = 1;
    for (int64_t s : strides) p *= s;
    return p;
  }
};

struct BackboneConfig {
  Family family = Family::kSsm;
  int64_t depth = 0;  // 0 selects the family default (ssm 4, transformer 6, net1d 7)
  int64_t model_dim = 512;
  int64_t state_dim = 8;  // ssm only
  double dropout = 0.2;
  bool causal = false;
  int64_t num_heads = 8;                // transformer only
  std::vector<int64_t> net1d_widths{};  // empty selects the default ramp
  int64_t net1d_kernel = 5;
  int64_t net1d_blocks_per_stage = 2;

  // Fills family-dependent defaults, then checks invariants.
  void normalize() {
    if (depth <= 0)
      depth = family == Family::kSsm ? 4 : (family == Family::kTransformer ? 6 : 7);
    if (model_dim <= 0) throw ConfigError("model_dim must be positive");
    if (family == Family::kSsm && state_dim <= 0)
      throw ConfigError("state_dim must be positive for the ssm family");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (family == Family::kTransformer) {
      if (num_heads <= 0 || model_dim % num_heads != 0)
        throw ConfigError("model_dim must be divisible by num_heads");
    }
    if (family == Family::kNet1d) {
      if (causal) throw ConfigError("net1d does not support causal mode");
      if (net1d_kernel <= 0 || net1d_blocks_per_stage <= 0)
        throw ConfigError("net1d kernel and blocks_per_stage must be positive");
      if (net1d_widths.empty()) net1d_widths = net1d_default_widths(depth, model_dim);
      if (static_cast<int64_t>(net1d_widths.size()) != depth)
        throw ConfigError("net1d_widths length must equal depth");
      if (net1d_widths.back() != model_dim)
        throw ConfigError("last net1d width must equal model_dim");
      for (int64_t w : net1d_widths)
        if (w <= 0) throw ConfigError("net1d widths must be positive");
    }
  }
};

template <class T>
struct EncoderOutput {
  ag::Var<T> tokens;                // [B, seq_tokens, model_dim]
  std::vector<Tensor<T>> per_layer;  // detached copies, stem layers then backbone layers
};

template <class T>
struct EncodeResult {
  Tensor<T> tokens;
  std::vector<Tensor<T>> per_layer;
};

// Conv stem + one sequential backbone. Masking objectives run between
// stem_forward and backbone_forward; encode() is the evaluation-mode
// convenience over both.
template <class T>
class Encoder {
 public:
  Encoder(StemConfig stem_cfg, BackboneConfig bb_cfg, int64_t in_channels, uint64_t seed)
      : stem_cfg_(std::move(stem_cfg)), bb_cfg_(std::move(bb_cfg)), in_channels_(in_channels) {
    stem_cfg_.validate();
    bb_cfg_.normalize();
    if (in_channels_ <= 0) throw ConfigError("in_channels must be positive");
    if (bb_cfg_.family != Family::kNet1d && stem_cfg_.out_dims.back() != bb_cfg_.model_dim)
      throw ConfigError("last stem dim must equal model_dim");
    Rng rng(derive_seed(seed, {0x5e}));
    int64_t c = in_channels_;
    for (size_t i = 0; i < 4; ++i) {
      stem_.emplace_back(c, stem_cfg_.out_dims[i], stem_cfg_.kernel_sizes[i],
                         stem_cfg_.strides[i], stem_cfg_.dilations[i], stem_cfg_.use_batch_norm,
                         rng);
      c = stem_cfg_.out_dims[i];
    }
    switch (bb_cfg_.family) {
      case Family::kSsm:
        for (int64_t i = 0; i < bb_cfg_.depth; ++i)
          ssm_.emplace_back(bb_cfg_.model_dim, bb_cfg_.state_dim, bb_cfg_.causal,
                            bb_cfg_.dropout, rng);
        break;
      case Family::kTransformer:
        for (int64_t i = 0; i < bb_cfg_.depth; ++i)
          tf_.emplace_back(bb_cfg_.model_dim, bb_cfg_.num_heads, bb_cfg_.causal,
                           bb_cfg_.dropout, rng);
        break;
      case Family::kNet1d: {
        int64_t w_in = stem_cfg_.out_dims.back();
        for (int64_t i = 0; i < bb_cfg_.depth; ++i) {
          net1d_.emplace_back(w_in, bb_cfg_.net1d_widths[static_cast<size_t>(i)],
                              bb_cfg_.net1d_kernel, bb_cfg_.net1d_blocks_per_stage,
                              bb_cfg_.dropout, rng);
          w_in = bb_cfg_.net1d_widths[static_cast<size_t>(i)];
        }
        break;
      }
    }
  }

  const StemConfig& stem_config() const { return stem_cfg_; }
  const BackboneConfig& backbone_config() const { return bb_cfg_; }
  int64_t in_channels() const { return in_channels_; }
  int64_t model_dim() const { return bb_cfg_.model_dim; }
  int64_t depth() const { return bb_cfg_.depth; }
  int64_t stride_product() const { return stem_cfg_.stride_product(); }
  int64_t token_count(int64_t input_len) const { return input_len / stride_product(); }

  // [B, C, T] -> [B, seq_tokens, model_dim]; per-layer entries appended as
  // detached [B, L_i, C_i] copies when capture is non-null.
  ag::Var<T> stem_forward(const ag::Var<T>& x, bool training,
                          std::vector<Tensor<T>>* capture = nullptr) {
    if (x->value.ndim() != 3 || x->value.dim(1) != in_channels_)
      throw DataError("stem input must be [B, " + std::to_string(in_channels_) + ", T], got " +
                      x->value.shape_str());
    if (x->value.dim(2) < stride_product())
      throw DataError("input length shorter than the stem stride product");
    auto h = x;
    for (auto& layer : stem_) {
      h = ag::gelu(layer.forward(h, training));
      if (capture) capture->push_back(ag::transpose_last2(h)->value);
    }
    return ag::transpose_last2(h);
  }

  ag::Var<T> backbone_forward(const ag::Var<T>& tokens, bool training, uint64_t seed,
                              std::vector<Tensor<T>>* capture = nullptr) {
    if (tokens->value.ndim() != 3 || tokens->value.dim(2) != backbone_in_dim())
      throw DataError("backbone input must be [B, L, " + std::to_string(backbone_in_dim()) +
                      "], got " + tokens->value.shape_str());
    auto h = tokens;
    const int64_t n = bb_cfg_.depth;
    for (int64_t i = 0; i < n; ++i) {
      const uint64_t s = derive_seed(seed, {0xd0, static_cast<uint64_t>(i)});
      if (bb_cfg_.family == Family::kSsm)
        h = ssm_[static_cast<size_t>(i)].forward(h, training, s);
      else if (bb_cfg_.family == Family::kTransformer)
        h = tf_[static_cast<size_t>(i)].forward(h, training, s);
      else
        h = net1d_[static_cast<size_t>(i)].forward(h, training, s);
      if (capture) capture->push_back(h->value);
    }
    return h;
  }

  EncoderOutput<T> forward(const ag::Var<T>& x, bool training, uint64_t seed,
                           bool capture_layers = false) {
    EncoderOutput<T> out;
    std::vector<Tensor<T>>* cap = capture_layers ? &out.per_layer : nullptr;
    auto tokens = stem_forward(x, training, cap);
    out.tokens = backbone_forward(tokens, training, seed, cap);
    return out;
  }

  // Evaluation-mode forward on raw values (dropout off, BN running stats).
  EncodeResult<T> encode(const Tensor<T>& batch, bool capture_layers = false) {
    auto x = ag::make_leaf(batch, false);
    auto out = forward(x, false, 0, capture_layers);
    return {out.tokens->value, std::move(out.per_layer)};
  }

  void collect_params(std::vector<NamedParam<T>>& out) const {
    for (size_t i = 0; i < stem_.size(); ++i)
      stem_[i].collect(out, "stem.layer" + std::to_string(i), "stem");
    for (size_t i = 0; i < ssm_.size(); ++i)
      ssm_[i].collect(out, "backbone.layer" + std::to_string(i), "backbone");
    for (size_t i = 0; i < tf_.size(); ++i)
      tf_[i].collect(out, "backbone.layer" + std::to_string(i), "backbone");
    for (size_t i = 0; i < net1d_.size(); ++i)
      net1d_[i].collect(out, "backbone.stage" + std::to_string(i), "backbone");
  }

  void collect_state(std::vector<NamedState<T>>& out) {
    for (size_t i = 0; i < stem_.size(); ++i)
      stem_[i].collect_state(out, "stem.layer" + std::to_string(i), "stem");
    for (size_t i = 0; i < net1d_.size(); ++i)
      net1d_[i].collect_state(out, "backbone.stage" + std::to_string(i), "backbone");
  }

  std::vector<NamedParam<T>> params() const {
    std::vector<NamedParam<T>> out;
    collect_params(out);
    return out;
  }

  std::map<std::string, int64_t> count_parameters() const {
    std::map<std::string, int64_t> counts{{"stem", 0}, {"backbone", 0}, {"total", 0}};
    std::vector<NamedParam<T>> all;
    collect_params(all);
    for (const auto& p : all) {
      counts[p.group] += p.var->value.numel();
      counts["total"] += p.var->value.numel();
    }
    return counts;
  }

 private:
  int64_t backbone_in_dim() const {
    return stem_cfg_.out_dims.back();
  }

  StemConfig stem_cfg_;
  BackboneConfig bb_cfg_;
  int64_t in_channels_ = 0;
  std::vector<ConvBN<T>> stem_;
  std::vector<S4DLayer<T>> ssm_;
  std::vector<TransformerBlock<T>> tf_;
  std::vector<Net1dStage<T>> net1d_;
};

}  // namespace sslts::nn
