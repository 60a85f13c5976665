#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sslts/eval/head.hpp"
#include "sslts/eval/metrics.hpp"
#include "sslts/nn/encoder.hpp"

namespace sslts::eval {

enum class TaskKind { kMultilabelClassification, kRegression };

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "multilabel_classification") return TaskKind::kMultilabelClassification;
  if (s == "regression") return TaskKind::kRegression;
  throw ConfigError("unknown task kind: " + s);
}

enum class AdaptMode { kFinetune, kFrozen, kLinear };

inline AdaptMode adapt_mode_from_string(const std::string& s) {
  if (s == "finetune") return AdaptMode::kFinetune;
  if (s == "frozen") return AdaptMode::kFrozen;
  if (s == "linear") return AdaptMode::kLinear;
  throw ConfigError("unknown mode: " + s);
}

inline std::string adapt_mode_to_string(AdaptMode m) {
  switch (m) {
    case AdaptMode::kFinetune: return "finetune";
    case AdaptMode::kFrozen: return "frozen";
    default: return "linear";
  }
}

struct TaskSpec {
  TaskKind kind = TaskKind::kMultilabelClassification;
  int64_t num_targets = 1;
  std::string train_manifest;
  std::string val_manifest;  // optional; empty skips per-epoch validation
  std::string test_manifest;
};

struct EvalConfig {
  int64_t window_len = 600;
  int64_t stride = 0;  // 0: non-overlapping
  int64_t batch_size = 64;
  int64_t epochs = 100;
  double learning_rate = 1e-3;   // head group
  double backbone_lr = 1e-4;     // finetune only
  double stem_lr = 1e-5;         // finetune only
  double weight_decay = 1e-3;
  int64_t attn_heads = 16;
  uint64_t seed = 0;
};

struct MetricReport {
  std::string mode;    // finetune | frozen | linear
  std::string metric;  // auroc | mae
  TargetScores scores;
  Tensor<float> predictions;  // [N, T]: probabilities or z-space estimates
  Tensor<float> labels;       // [N, T] raw test labels
  std::vector<double> train_epoch_loss;
  std::vector<std::pair<int64_t, double>> val_loss;  // (epoch, loss)
  // Regression only: training-split label statistics that anchor the z-space
  // the predictions live in. Empty for classification.
  std::vector<double> norm_mean;
  std::vector<double> norm_std;
};

struct AdaptedModel {
  std::unique_ptr<nn::Encoder<float>> encoder;
  std::unique_ptr<PredictionHead<float>> head;
};

struct AdaptOutcome {
  AdaptedModel model;
  MetricReport report;
};

// Adapts a pretrained encoder to a labeled task. finetune trains everything
// with staged learning rates (head at the base rate, backbone at 1e-4, stem
// at 1e-5 by default); frozen trains only a query-attention head; linear
// trains only a mean-pool linear head. Encoder weights are restored from the
// checkpoint's stem and backbone groups. Metrics come from the test split
// with per-sample predictions retained.
AdaptOutcome adapt(const std::string& checkpoint_dir, const nn::StemConfig& stem_cfg,
                   const nn::BackboneConfig& bb_cfg, int64_t in_channels, const TaskSpec& task,
                   AdaptMode mode, const EvalConfig& cfg);

struct LabelEfficiencyEntry {
  double fraction;
  MetricReport report;
  double residual_error;  // 1 - macro AUROC for classification, macro MAE otherwise
};

// One adapt() per requested fraction on nested training subsets (larger
// fractions contain the smaller ones). Fraction 1.0 reproduces adapt() on the
// full set exactly.
std::vector<LabelEfficiencyEntry> label_efficiency(const std::string& checkpoint_dir,
                                                   const nn::StemConfig& stem_cfg,
                                                   const nn::BackboneConfig& bb_cfg,
                                                   int64_t in_channels, const TaskSpec& task,
                                                   const std::vector<double>& fractions,
                                                   AdaptMode mode, const EvalConfig& cfg);

// metrics.csv (per-target rows), summary.json, and raw float32 blobs of the
// per-sample predictions and labels.
void write_metric_report(const std::string& dir, const MetricReport& report);

// Inverse of write_metric_report for the fields ranking needs: mode, metric,
// macro score, prediction and label matrices, and regression normalization
// statistics. Training curves are not persisted per sample and stay empty.
MetricReport read_metric_report(const std::string& dir);

}  // namespace sslts::eval
