#pragma once

#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sslts/nn/encoder.hpp"
#include "sslts/ssl/codebook.hpp"
#include "sslts/ssl/ema.hpp"
#include "sslts/ssl/masks.hpp"
#include "sslts/ssl/prototypes.hpp"

namespace sslts::ssl {

enum class ObjectiveKind { kData2vec, kDinoSR, kJepa, kCpc, kHubertPP };

inline ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "data2vec") return ObjectiveKind::kData2vec;
  if (s == "dinosr") return ObjectiveKind::kDinoSR;
  if (s == "jepa") return ObjectiveKind::kJepa;
  if (s == "cpc") return ObjectiveKind::kCpc;
  if (s == "hubertpp") return ObjectiveKind::kHubertPP;
  throw ConfigError("unknown objective: " + s);
}

inline std::string objective_to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kData2vec: return "data2vec";
    case ObjectiveKind::kDinoSR: return "dinosr";
    case ObjectiveKind::kJepa: return "jepa";
    case ObjectiveKind::kCpc: return "cpc";
    default: return "hubertpp";
  }
}

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::kData2vec;
  SpanMaskSpec span{};
  BlockMaskSpec block{};
  EmaSchedule ema{};
  double smooth_l1_beta = 1.0;
  int64_t target_layers = 2;  // teacher top-k backbone layers aggregated
  double head_dropout = 0.0;
  // dinosr
  std::vector<int64_t> codebook_sizes{256, 256};
  double codebook_momentum = 0.9;
  double dinosr_temperature = 1.0;
  // cpc
  int64_t cpc_num_steps = 14;
  // hubert++
  std::vector<int64_t> prototype_sizes{128, 256};
  double prototype_momentum = 0.9;
  int64_t freeze_steps = 300;
  double hubert_temperature = 0.1;
  double hubert_alpha = 0.75;
  int64_t sinkhorn_iters = 3;
  double sinkhorn_epsilon = 0.05;
};

struct StepInfo {
  int64_t selected = 0;  // positions contributing to the primary loss term
};

namespace detail {

// Parameter-free per-row layer normalization on raw values; mirrors the
// graph op so value-side target computation matches.
template <class T>
Tensor<T> layer_norm_value(const Tensor<T>& x, double eps = 1e-5) {
  Tensor<T> out(x.shape());
  const int64_t D = x.shape().back();
  const int64_t N = x.numel() / D;
  const T* xp = x.data();
  T* op = out.data();
  for (int64_t r = 0; r < N; ++r) {
    double mu = 0.0;
    for (int64_t d = 0; d < D; ++d) mu += xp[r * D + d];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (int64_t d = 0; d < D; ++d) {
      const double c = xp[r * D + d] - mu;
      var += c * c;
    }
    var /= static_cast<double>(D);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t d = 0; d < D; ++d) op[r * D + d] = static_cast<T>((xp[r * D + d] - mu) * inv);
  }
  return out;
}

// y[N,out] = x[N,in] . W^T (+ b); value-side teacher projections.
template <class T>
Tensor<T> linear_value(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>* b) {
  const int64_t in = W.dim(1), out = W.dim(0);
  const int64_t N = x.numel() / in;
  Tensor<T> y({N, out});
  kernels::matmul(x.data(), W.data(), y.data(), N, out, in, false, true, false);
  if (b)
    for (int64_t r = 0; r < N; ++r)
      for (int64_t o = 0; o < out; ++o) y[r * out + o] += (*b)[o];
  return y;
}

// Mean of the layer-normalized top `k` backbone captures; optionally
// normalized once more at the aggregate level.
template <class T>
Tensor<T> aggregate_teacher_targets(const std::vector<Tensor<T>>& per_layer, int64_t backbone_depth,
                                    int64_t k, bool normalize_aggregate) {
  const int64_t avail = std::min<int64_t>(k, backbone_depth);
  if (avail < 1) throw DataError("teacher target aggregation needs at least one backbone layer");
  const size_t n = per_layer.size();
  Tensor<T> agg(per_layer[n - 1].shape());
  for (int64_t j = 0; j < avail; ++j) {
    const Tensor<T> ln = layer_norm_value(per_layer[n - 1 - static_cast<size_t>(j)]);
    for (int64_t i = 0; i < agg.numel(); ++i) agg[i] += ln[i] / static_cast<T>(avail);
  }
  return normalize_aggregate ? layer_norm_value(agg) : agg;
}

// One span mask per batch item, flattened to B*L row flags.
inline std::vector<uint8_t> batch_span_mask(int64_t B, int64_t L, const SpanMaskSpec& spec,
                                            uint64_t seed) {
  std::vector<uint8_t> mask;
  mask.reserve(static_cast<size_t>(B * L));
  for (int64_t b = 0; b < B; ++b) {
    auto m = sample_span_mask(L, spec, derive_seed(seed, {0x3a, static_cast<uint64_t>(b)}));
    mask.insert(mask.end(), m.begin(), m.end());
  }
  return mask;
}

template <class T>
Tensor<T> as_rows(const Tensor<T>& x) {  // [B,L,D] view as [B*L, D]
  const int64_t D = x.shape().back();
  return x.reshaped({x.numel() / D, D});
}

}  // namespace detail

// One self-supervised objective: owns its heads and auxiliary state.
// loss() builds the autograd graph for a batch and mutates nothing except an
// internal cache (training mode only); update_state() applies the
// post-optimizer state transitions (EMA teacher, codebooks, prototypes).
template <class T>
class Objective {
 public:
  virtual ~Objective() = default;
  virtual ObjectiveKind kind() const = 0;
  virtual ag::Var<T> loss(nn::Encoder<T>& student, const Tensor<T>& batch, int64_t step,
                          uint64_t seed, bool training, StepInfo* info = nullptr) = 0;
  virtual void update_state(nn::Encoder<T>& student, int64_t step) = 0;
  virtual void collect_params(std::vector<nn::NamedParam<T>>& out) const = 0;
  virtual void collect_state(std::vector<nn::NamedState<T>>& out) = 0;
  virtual std::vector<std::pair<std::string, double>> diagnostics() const { return {}; }

  std::vector<nn::NamedParam<T>> params() const {
    std::vector<nn::NamedParam<T>> out;
    collect_params(out);
    return out;
  }

  int64_t updates() const { return static_cast<int64_t>(updates_counter_[0]); }

 protected:
  void bump_updates() { updates_counter_[0] += T(1); }
  void collect_counter(std::vector<nn::NamedState<T>>& out) {
    out.push_back({"objective.updates", "objective", &updates_counter_});
  }

  Tensor<T> updates_counter_{std::vector<int64_t>{1}};
};

// Shared EMA-teacher plumbing for the four teacher-based objectives.
template <class T>
class TeacherObjective : public Objective<T> {
 protected:
  TeacherObjective(nn::Encoder<T>& student, const ObjectiveConfig& cfg)
      : cfg_(cfg),
        teacher_(student.stem_config(), student.backbone_config(), student.in_channels(), 1) {
    auto tp = teacher_.params();
    auto sp = student.params();
    for (size_t i = 0; i < tp.size(); ++i) tp[i].var->value = sp[i].var->value;
    std::vector<nn::NamedState<T>> ts, ss;
    teacher_.collect_state(ts);
    student.collect_state(ss);
    for (size_t i = 0; i < ts.size(); ++i) *ts[i].tensor = *ss[i].tensor;
    freeze_params(tp);
  }

  void ema_teacher_update(nn::Encoder<T>& student) {
    const double m = cfg_.ema.at(this->updates());
    auto tp = teacher_.params();
    auto sp = student.params();
    ema_update_params(tp, sp, m);
    std::vector<nn::NamedState<T>> ts, ss;
    teacher_.collect_state(ts);
    student.collect_state(ss);
    ema_update_state(ts, ss, m);
  }

  void collect_teacher_state(std::vector<nn::NamedState<T>>& out) {
    for (auto& p : teacher_.params())
      out.push_back({"objective.teacher." + p.name, "objective", &p.var->value});
    std::vector<nn::NamedState<T>> ts;
    teacher_.collect_state(ts);
    for (auto& s : ts) out.push_back({"objective.teacher." + s.name, "objective", s.tensor});
  }

  ObjectiveConfig cfg_;
  nn::Encoder<T> teacher_;
};

// Masked latent regression onto the layer-normalized mean of the teacher's
// top backbone layers; smooth-L1 at masked positions through a single
// non-causal state-space head.
template <class T>
class Data2VecObjective : public TeacherObjective<T> {
 public:
  Data2VecObjective(nn::Encoder<T>& student, const ObjectiveConfig& cfg, uint64_t seed)
      : TeacherObjective<T>(student, cfg) {
    Rng rng(derive_seed(seed, {0xd2}));
    const auto& bb = student.backbone_config();
    head_ = nn::S4DLayer<T>(bb.model_dim, bb.state_dim, false, cfg.head_dropout, rng);
    mask_token_ = nn::param_normal<T>({bb.model_dim}, rng, 0.02);
  }

  ObjectiveKind kind() const override { return ObjectiveKind::kData2vec; }

  ag::Var<T> loss(nn::Encoder<T>& student, const Tensor<T>& batch, int64_t, uint64_t seed,
                  bool training, StepInfo* info = nullptr) override {
    const int64_t B = batch.dim(0);
    const int64_t L = student.token_count(batch.dim(2));
    auto teacher_out = this->teacher_.encode(batch, true);
    const Tensor<T> target = detail::aggregate_teacher_targets(
        teacher_out.per_layer, this->teacher_.depth(), this->cfg_.target_layers, false);

    const auto mask = detail::batch_span_mask(B, L, this->cfg_.span, seed);
    auto x = ag::make_leaf(batch, false);
    auto tokens = student.stem_forward(x, training);
    auto masked = ag::mask_replace(tokens, mask, mask_token_);
    auto out = student.backbone_forward(masked, training, derive_seed(seed, {0xbb}));
    auto pred = head_.forward(out, training, derive_seed(seed, {0x5d}));

    ag::LossStats st;
    auto l = ag::smooth_l1_masked(pred, target, mask, this->cfg_.smooth_l1_beta, &st);
    if (st.selected == 0)
      std::fprintf(stderr, "warning: empty mask in masked regression step, loss is zero\n");
    if (info) info->selected = st.selected;
    return l;
  }

  void update_state(nn::Encoder<T>& student, int64_t) override {
    this->ema_teacher_update(student);
    this->bump_updates();
  }

  void collect_params(std::vector<nn::NamedParam<T>>& out) const override {
    out.push_back({"head.mask_token", "head", mask_token_});
    head_.collect(out, "head.ssm", "head");
  }

  void collect_state(std::vector<nn::NamedState<T>>& out) override {
    this->collect_counter(out);
    this->collect_teacher_state(out);
  }

 private:
  nn::S4DLayer<T> head_;
  ag::Var<T> mask_token_;
};

// Masked classification of online-quantized teacher layers: one codebook and
// one linear classifier per designated teacher layer, codebooks refreshed by
// an EMA pull toward the mean assigned feature.
template <class T>
class DinoSRObjective : public TeacherObjective<T> {
 public:
  DinoSRObjective(nn::Encoder<T>& student, const ObjectiveConfig& cfg, uint64_t seed)
      : TeacherObjective<T>(student, cfg) {
    const auto& bb = student.backbone_config();
    const int64_t n = static_cast<int64_t>(cfg.codebook_sizes.size());
    if (n < 1) throw ConfigError("dinosr: needs at least one codebook");
    if (n > bb.depth) throw ConfigError("dinosr: more codebooks than backbone layers");
    Rng rng(derive_seed(seed, {0xd5}));
    for (int64_t i = 0; i < n; ++i) {
      codebooks_.emplace_back(cfg.codebook_sizes[static_cast<size_t>(i)], bb.model_dim,
                              cfg.codebook_momentum, rng);
      // Small init starts the classifiers near the max-entropy prediction.
      classifiers_.emplace_back(bb.model_dim, cfg.codebook_sizes[static_cast<size_t>(i)], true,
                                rng, 0.1 / std::sqrt(static_cast<double>(bb.model_dim)));
    }
    mask_token_ = nn::param_normal<T>({bb.model_dim}, rng, 0.02);
  }

  ObjectiveKind kind() const override { return ObjectiveKind::kDinoSR; }

  ag::Var<T> loss(nn::Encoder<T>& student, const Tensor<T>& batch, int64_t step, uint64_t seed,
                  bool training, StepInfo* info = nullptr) override {
    const int64_t B = batch.dim(0);
    const int64_t L = student.token_count(batch.dim(2));
    const auto mask = detail::batch_span_mask(B, L, this->cfg_.span, seed);
    int64_t n_masked = 0;
    for (uint8_t m : mask) n_masked += m ? 1 : 0;
    if (n_masked == 0) throw DataError("dinosr: empty mask");

    auto teacher_out = this->teacher_.encode(batch, true);
    const size_t ncap = teacher_out.per_layer.size();
    const int64_t ncb = static_cast<int64_t>(codebooks_.size());

    auto x = ag::make_leaf(batch, false);
    auto tokens = student.stem_forward(x, training);
    auto masked_tokens = ag::mask_replace(tokens, mask, mask_token_);
    auto out = student.backbone_forward(masked_tokens, training, derive_seed(seed, {0xbb}));

    if (training) {
      cache_.step = step;
      cache_.feats.clear();
      cache_.labels.clear();
    }
    std::vector<ag::Var<T>> terms;
    ag::LossStats st{};
    for (int64_t i = 0; i < ncb; ++i) {
      // Codebook i sits on the i-th layer from the top, lowest codebook first.
      const Tensor<T> feats = detail::layer_norm_value(
          teacher_out.per_layer[ncap - static_cast<size_t>(ncb - i)]);
      const Tensor<T> rows = detail::as_rows(feats);
      Tensor<T> masked_rows({n_masked, rows.dim(1)});
      int64_t w = 0;
      for (int64_t r = 0; r < rows.dim(0); ++r)
        if (mask[static_cast<size_t>(r)]) {
          std::copy(rows.data() + r * rows.dim(1), rows.data() + (r + 1) * rows.dim(1),
                    masked_rows.data() + w * rows.dim(1));
          ++w;
        }
      const auto masked_labels = codebooks_[static_cast<size_t>(i)].assign(masked_rows);
      std::vector<int64_t> labels(static_cast<size_t>(B * L), 0);
      w = 0;
      for (int64_t r = 0; r < B * L; ++r)
        if (mask[static_cast<size_t>(r)]) labels[static_cast<size_t>(r)] = masked_labels[w++];
      auto logits = ag::scale(classifiers_[static_cast<size_t>(i)].forward(out),
                              1.0 / this->cfg_.dinosr_temperature);
      terms.push_back(ag::cross_entropy_rows(logits, labels, mask, &st));
      if (training) {
        cache_.feats.push_back(std::move(masked_rows));
        cache_.labels.push_back(masked_labels);
      }
    }
    if (info) info->selected = st.selected;
    return ag::wsum(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(ncb)));
  }

  void update_state(nn::Encoder<T>& student, int64_t step) override {
    if (cache_.step == step) {
      for (size_t i = 0; i < codebooks_.size(); ++i)
        codebooks_[i].update(cache_.feats[i], cache_.labels[i]);
      cache_.step = -1;
    }
    this->ema_teacher_update(student);
    this->bump_updates();
  }

  void collect_params(std::vector<nn::NamedParam<T>>& out) const override {
    out.push_back({"head.mask_token", "head", mask_token_});
    for (size_t i = 0; i < classifiers_.size(); ++i)
      classifiers_[i].collect(out, "head.classifier" + std::to_string(i), "head");
  }

  void collect_state(std::vector<nn::NamedState<T>>& out) override {
    this->collect_counter(out);
    for (size_t i = 0; i < codebooks_.size(); ++i) {
      out.push_back({"objective.codebook" + std::to_string(i) + ".entries", "objective",
                     &codebooks_[i].entries});
      out.push_back({"objective.codebook" + std::to_string(i) + ".usage", "objective",
                     &codebooks_[i].usage_counts});
    }
    this->collect_teacher_state(out);
  }

  std::vector<std::pair<std::string, double>> diagnostics() const override {
    std::vector<std::pair<std::string, double>> d;
    for (size_t i = 0; i < codebooks_.size(); ++i)
      d.emplace_back("codebook" + std::to_string(i) + "_usage_entropy",
                     codebooks_[i].usage_entropy());
    return d;
  }

  const std::vector<Codebook<T>>& codebooks() const { return codebooks_; }

 private:
  struct Cache {
    int64_t step = -1;
    std::vector<Tensor<T>> feats;
    std::vector<std::vector<int64_t>> labels;
  };

  std::vector<Codebook<T>> codebooks_;
  std::vector<nn::Linear<T>> classifiers_;
  ag::Var<T> mask_token_;
  Cache cache_;
};

// Multi-block latent prediction: the backbone encodes only the visible
// context tokens, a state-space predictor fills prediction blocks from
// learned mask tokens, and targets are the teacher's double-normalized
// top-layer aggregate.
template <class T>
class JepaObjective : public TeacherObjective<T> {
 public:
  JepaObjective(nn::Encoder<T>& student, const ObjectiveConfig& cfg, uint64_t seed)
      : TeacherObjective<T>(student, cfg) {
    Rng rng(derive_seed(seed, {0x7e}));
    const auto& bb = student.backbone_config();
    predictor_ = nn::S4DLayer<T>(bb.model_dim, bb.state_dim, false, cfg.head_dropout, rng);
    mask_token_ = nn::param_normal<T>({bb.model_dim}, rng, 0.02);
  }

  ObjectiveKind kind() const override { return ObjectiveKind::kJepa; }

  ag::Var<T> loss(nn::Encoder<T>& student, const Tensor<T>& batch, int64_t, uint64_t seed,
                  bool training, StepInfo* info = nullptr) override {
    const int64_t B = batch.dim(0);
    const int64_t L = student.token_count(batch.dim(2));
    const BlockMask geom = sample_block_mask(L, this->cfg_.block, derive_seed(seed, {0x4a}));

    std::vector<uint8_t> pred_pos(static_cast<size_t>(L), 0);
    for (const auto& [s, len] : geom.pred_blocks)
      for (int64_t t = s; t < s + len; ++t) pred_pos[static_cast<size_t>(t)] = 1;
    int64_t n_pred = 0;
    for (uint8_t p : pred_pos) n_pred += p;
    if (n_pred == 0) throw DataError("jepa: empty prediction blocks");
    // Context = context interval minus prediction positions, so the visible
    // branch never sees a target token.
    std::vector<int64_t> ctx_idx;
    for (int64_t t = geom.ctx_start; t < geom.ctx_start + geom.ctx_len; ++t)
      if (!pred_pos[static_cast<size_t>(t)]) ctx_idx.push_back(t);
    if (ctx_idx.empty()) throw DataError("jepa: context fully covered by prediction blocks");

    auto teacher_out = this->teacher_.encode(batch, true);
    const Tensor<T> target = detail::aggregate_teacher_targets(
        teacher_out.per_layer, this->teacher_.depth(), this->cfg_.target_layers, true);

    auto x = ag::make_leaf(batch, false);
    auto tokens = student.stem_forward(x, training);
    auto ctx = ag::gather_time(tokens, ctx_idx);
    auto ctx_out = student.backbone_forward(ctx, training, derive_seed(seed, {0xbb}));
    auto base = ag::broadcast_token(mask_token_, B, L);
    auto full = ag::scatter_time(base, ctx_out, ctx_idx);
    auto pred = predictor_.forward(full, training, derive_seed(seed, {0x5d}));

    std::vector<uint8_t> mask;
    mask.reserve(static_cast<size_t>(B * L));
    for (int64_t b = 0; b < B; ++b) mask.insert(mask.end(), pred_pos.begin(), pred_pos.end());
    ag::LossStats st;
    auto l = ag::smooth_l1_masked(pred, target, mask, this->cfg_.smooth_l1_beta, &st);
    if (info) info->selected = st.selected;
    return l;
  }

  void update_state(nn::Encoder<T>& student, int64_t) override {
    this->ema_teacher_update(student);
    this->bump_updates();
  }

  void collect_params(std::vector<nn::NamedParam<T>>& out) const override {
    out.push_back({"head.mask_token", "head", mask_token_});
    predictor_.collect(out, "head.predictor", "head");
  }

  void collect_state(std::vector<nn::NamedState<T>>& out) override {
    this->collect_counter(out);
    this->collect_teacher_state(out);
  }

 private:
  nn::S4DLayer<T> predictor_;
  ag::Var<T> mask_token_;
};

// Contrastive future prediction: per-horizon bias-free projections of the
// causal context score the true future latent against every other latent in
// the same sequence.
template <class T>
class CpcObjective : public Objective<T> {
 public:
  CpcObjective(nn::Encoder<T>& student, const ObjectiveConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (!student.backbone_config().causal)
      throw ConfigError("cpc requires a causal backbone");
    if (cfg.cpc_num_steps < 1) throw ConfigError("cpc: num_steps must be positive");
    Rng rng(derive_seed(seed, {0xcc}));
    const int64_t D = student.model_dim();
    // Small head init keeps initial scores near zero so the contrastive loss
    // starts at ln(candidates).
    for (int64_t k = 0; k < cfg.cpc_num_steps; ++k)
      heads_.emplace_back(D, D, false, rng, 0.1 / std::sqrt(static_cast<double>(D)));
  }

  ObjectiveKind kind() const override { return ObjectiveKind::kCpc; }

  ag::Var<T> loss(nn::Encoder<T>& student, const Tensor<T>& batch, int64_t, uint64_t seed,
                  bool training, StepInfo* info = nullptr) override {
    const int64_t L = student.token_count(batch.dim(2));
    if (L < cfg_.cpc_num_steps + 1)
      throw DataError("cpc: sequence of " + std::to_string(L) + " tokens is shorter than " +
                      std::to_string(cfg_.cpc_num_steps + 1));
    auto x = ag::make_leaf(batch, false);
    auto latents = student.stem_forward(x, training);
    auto ctx = student.backbone_forward(latents, training, derive_seed(seed, {0xbb}));
    std::vector<ag::Var<T>> terms;
    int64_t anchors = 0;
    for (int64_t k = 1; k <= cfg_.cpc_num_steps; ++k) {
      auto proj = heads_[static_cast<size_t>(k - 1)].forward(ctx);
      auto scores = ag::bmm(proj, latents, false, true);  // [B, L, L]
      auto logp = ag::log_softmax_last(scores);
      auto diag = ag::gather_diag_offset(logp, k);  // [B, L-k]
      terms.push_back(ag::scale(ag::mean_all(diag), -1.0));
      anchors += diag->value.numel();
    }
    if (info) info->selected = anchors;
    return ag::wsum(terms,
                    std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
  }

  void update_state(nn::Encoder<T>&, int64_t) override { this->bump_updates(); }

  void collect_params(std::vector<nn::NamedParam<T>>& out) const override {
    for (size_t k = 0; k < heads_.size(); ++k)
      heads_[k].collect(out, "head.proj" + std::to_string(k + 1), "head");
  }

  void collect_state(std::vector<nn::NamedState<T>>& out) override { this->collect_counter(out); }

 private:
  ObjectiveConfig cfg_;
  std::vector<nn::Linear<T>> heads_;
};

// Masked and unmasked distribution matching against balanced soft prototype
// assignments of teacher features, over two prototype banks.
template <class T>
class HubertPPObjective : public TeacherObjective<T> {
 public:
  HubertPPObjective(nn::Encoder<T>& student, const ObjectiveConfig& cfg, uint64_t seed)
      : TeacherObjective<T>(student, cfg) {
    if (cfg.prototype_sizes.empty()) throw ConfigError("hubertpp: needs at least one bank");
    Rng rng(derive_seed(seed, {0x4b}));
    const int64_t D = student.model_dim();
    projector_ = nn::Linear<T>(D, D, true, rng);
    pred1_ = nn::Linear<T>(D, D, true, rng);
    pred2_ = nn::Linear<T>(D, D, true, rng);
    teacher_proj_w_ = projector_.W->value;
    teacher_proj_b_ = projector_.b->value;
    mask_token_ = nn::param_normal<T>({D}, rng, 0.02);
    for (int64_t K : cfg.prototype_sizes)
      banks_.emplace_back(K, D, cfg.prototype_momentum, cfg.freeze_steps, cfg.hubert_temperature,
                          rng);
  }

  ObjectiveKind kind() const override { return ObjectiveKind::kHubertPP; }

  ag::Var<T> loss(nn::Encoder<T>& student, const Tensor<T>& batch, int64_t step, uint64_t seed,
                  bool training, StepInfo* info = nullptr) override {
    const int64_t B = batch.dim(0);
    const int64_t L = student.token_count(batch.dim(2));
    const auto mask = detail::batch_span_mask(B, L, this->cfg_.span, seed);
    std::vector<uint8_t> unmask(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) unmask[i] = mask[i] ? 0 : 1;

    // Teacher path: projected, unit-normalized features and balanced targets.
    auto teacher_tokens = this->teacher_.encode(batch).tokens;
    Tensor<T> feats =
        detail::linear_value(detail::as_rows(teacher_tokens), teacher_proj_w_, &teacher_proj_b_);
    normalize_rows_value(feats);
    std::vector<Tensor<T>> targets;
    targets.reserve(banks_.size());
    for (const auto& bank : banks_)
      targets.push_back(bank.targets(feats, this->cfg_.sinkhorn_iters, this->cfg_.sinkhorn_epsilon));

    auto x = ag::make_leaf(batch, false);
    auto tokens = student.stem_forward(x, training);
    auto masked_tokens = ag::mask_replace(tokens, mask, mask_token_);
    auto out = student.backbone_forward(masked_tokens, training, derive_seed(seed, {0xbb}));
    auto student_feats = ag::l2_normalize_rows(
        pred2_.forward(ag::gelu(pred1_.forward(projector_.forward(out)))));

    std::vector<ag::Var<T>> terms;
    std::vector<double> weights;
    ag::LossStats st{};
    last_target_entropy_.clear();
    for (size_t i = 0; i < banks_.size(); ++i) {
      auto proto = ag::make_leaf(banks_[i].prototypes, false);
      auto logits = ag::scale(ag::linear(student_feats, proto), 1.0 / banks_[i].temperature);
      const Tensor<T> t3 = targets[i].reshaped({B, L, banks_[i].size()});
      terms.push_back(ag::kl_rows(logits, t3, mask, &st));
      weights.push_back(this->cfg_.hubert_alpha);
      terms.push_back(ag::kl_rows(logits, t3, unmask));
      weights.push_back(1.0 - this->cfg_.hubert_alpha);
      last_target_entropy_.push_back(PrototypeBank<T>::mean_target_entropy(targets[i]));
    }
    if (training) {
      cache_.step = step;
      cache_.feats = std::move(feats);
      cache_.targets = std::move(targets);
    }
    if (info) info->selected = st.selected;
    return ag::wsum(terms, weights);
  }

  void update_state(nn::Encoder<T>& student, int64_t step) override {
    if (cache_.step == step) {
      for (size_t i = 0; i < banks_.size(); ++i)
        banks_[i].update(cache_.feats, cache_.targets[i], this->updates());
      cache_.step = -1;
    }
    this->ema_teacher_update(student);
    const double m = this->cfg_.ema.at(this->updates());
    ema_blend(teacher_proj_w_, projector_.W->value, m);
    ema_blend(teacher_proj_b_, projector_.b->value, m);
    this->bump_updates();
  }

  void collect_params(std::vector<nn::NamedParam<T>>& out) const override {
    out.push_back({"head.mask_token", "head", mask_token_});
    projector_.collect(out, "head.projector", "head");
    pred1_.collect(out, "head.predictor1", "head");
    pred2_.collect(out, "head.predictor2", "head");
  }

  void collect_state(std::vector<nn::NamedState<T>>& out) override {
    this->collect_counter(out);
    for (size_t i = 0; i < banks_.size(); ++i)
      out.push_back({"objective.bank" + std::to_string(i) + ".prototypes", "objective",
                     &banks_[i].prototypes});
    out.push_back({"objective.teacher_projector.weight", "objective", &teacher_proj_w_});
    out.push_back({"objective.teacher_projector.bias", "objective", &teacher_proj_b_});
    this->collect_teacher_state(out);
  }

  std::vector<std::pair<std::string, double>> diagnostics() const override {
    std::vector<std::pair<std::string, double>> d;
    for (size_t i = 0; i < last_target_entropy_.size(); ++i)
      d.emplace_back("bank" + std::to_string(i) + "_target_entropy", last_target_entropy_[i]);
    return d;
  }

  const std::vector<PrototypeBank<T>>& banks() const { return banks_; }

 private:
  struct Cache {
    int64_t step = -1;
    Tensor<T> feats;
    std::vector<Tensor<T>> targets;
  };

  nn::Linear<T> projector_, pred1_, pred2_;
  Tensor<T> teacher_proj_w_, teacher_proj_b_;
  ag::Var<T> mask_token_;
  std::vector<PrototypeBank<T>> banks_;
  Cache cache_;
  std::vector<double> last_target_entropy_;
};

// Builds the objective and enforces the causality compatibility rule before
// any training step runs.
template <class T>
std::unique_ptr<Objective<T>> make_objective(const ObjectiveConfig& cfg, nn::Encoder<T>& student,
                                             uint64_t seed) {
  const bool causal = student.backbone_config().causal;
  if (cfg.kind == ObjectiveKind::kCpc && !causal)
    throw ConfigError("cpc requires a causal backbone");
  if (cfg.kind != ObjectiveKind::kCpc && causal)
    throw ConfigError(objective_to_string(cfg.kind) + " requires a non-causal backbone");
  switch (cfg.kind) {
    case ObjectiveKind::kData2vec:
      return std::make_unique<Data2VecObjective<T>>(student, cfg, seed);
    case ObjectiveKind::kDinoSR:
      return std::make_unique<DinoSRObjective<T>>(student, cfg, seed);
    case ObjectiveKind::kJepa:
      return std::make_unique<JepaObjective<T>>(student, cfg, seed);
    case ObjectiveKind::kCpc:
      return std::make_unique<CpcObjective<T>>(student, cfg, seed);
    default:
      return std::make_unique<HubertPPObjective<T>>(student, cfg, seed);
  }
}

}  // namespace sslts::ssl
