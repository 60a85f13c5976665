#include "sslts/eval/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "sslts/data/folds.hpp"
#include "sslts/data/manifest.hpp"
#include "sslts/data/windows.hpp"
#include "sslts/train/adam.hpp"
#include "sslts/train/checkpoint.hpp"
#include "sslts/train/trainer.hpp"

namespace sslts::eval {

namespace fs = std::filesystem;

namespace {

struct LabeledSet {
  std::vector<data::SignalWindow> windows;
  Tensor<float> labels;  // [N, num_targets]
};

LabeledSet load_split(const std::string& manifest_path, const TaskSpec& task,
                      const EvalConfig& cfg) {
  LabeledSet out;
  if (manifest_path.empty()) {
    out.labels = Tensor<float>({0, task.num_targets});
    return out;
  }
  const auto manifest = data::load_manifest(manifest_path);
  out.windows = data::window_and_normalize(manifest, cfg.window_len, cfg.stride);
  const auto N = static_cast<int64_t>(out.windows.size());
  const int64_t T = task.num_targets;
  out.labels = Tensor<float>({N, T});
  for (int64_t i = 0; i < N; ++i) {
    const auto& lv = data::window_labels(manifest, out.windows[static_cast<size_t>(i)]);
    if (static_cast<int64_t>(lv.size()) != T)
      throw DataError("label shape mismatch: record " +
                      std::to_string(out.windows[static_cast<size_t>(i)].source_record) +
                      " carries " + std::to_string(lv.size()) + " labels, task expects " +
                      std::to_string(T));
    for (int64_t t = 0; t < T; ++t) {
      const auto v = static_cast<float>(lv[static_cast<size_t>(t)]);
      if (task.kind == TaskKind::kMultilabelClassification && v != 0.0f && v != 1.0f)
        throw DataError("label " + std::to_string(lv[static_cast<size_t>(t)]) + " of record " +
                        std::to_string(out.windows[static_cast<size_t>(i)].source_record) +
                        " is not binary");
      out.labels[i * T + t] = v;
    }
  }
  return out;
}

LabeledSet take_subset(const LabeledSet& full, const std::vector<int64_t>& idx) {
  LabeledSet out;
  const int64_t T = full.labels.dim(1);
  out.labels = Tensor<float>({static_cast<int64_t>(idx.size()), T});
  out.windows.reserve(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    out.windows.push_back(full.windows[static_cast<size_t>(idx[i])]);
    for (int64_t t = 0; t < T; ++t)
      out.labels[static_cast<int64_t>(i) * T + t] = full.labels[idx[i] * T + t];
  }
  return out;
}

// Per-target population statistics of the training labels; zero-deviation
// targets keep std 0 here (excluded from metrics) and train against an
// all-zero standardized column.
void train_stats(const Tensor<float>& labels, std::vector<double>& mean, std::vector<double>& std) {
  const int64_t N = labels.dim(0), T = labels.dim(1);
  mean.assign(static_cast<size_t>(T), 0.0);
  std.assign(static_cast<size_t>(T), 0.0);
  if (N == 0) return;
  for (int64_t t = 0; t < T; ++t) {
    double mu = 0.0;
    for (int64_t i = 0; i < N; ++i) mu += labels[i * T + t];
    mu /= static_cast<double>(N);
    double var = 0.0;
    for (int64_t i = 0; i < N; ++i) {
      const double c = labels[i * T + t] - mu;
      var += c * c;
    }
    var /= static_cast<double>(N);
    mean[static_cast<size_t>(t)] = mu;
    std[static_cast<size_t>(t)] = var > 0.0 ? std::sqrt(var) : 0.0;
  }
}

Tensor<float> standardize(const Tensor<float>& labels, const std::vector<double>& mean,
                          const std::vector<double>& std) {
  Tensor<float> out(labels.shape());
  const int64_t N = labels.dim(0), T = labels.dim(1);
  for (int64_t t = 0; t < T; ++t) {
    const double mu = mean[static_cast<size_t>(t)];
    const double sd = std[static_cast<size_t>(t)] > 0.0 ? std[static_cast<size_t>(t)] : 1.0;
    for (int64_t i = 0; i < N; ++i)
      out[i * T + t] = static_cast<float>((labels[i * T + t] - mu) / sd);
  }
  return out;
}

Tensor<float> gather_rows(const Tensor<float>& m, const std::vector<int64_t>& order, int64_t lo,
                          int64_t hi) {
  const int64_t T = m.dim(1);
  Tensor<float> out({hi - lo, T});
  for (int64_t b = 0; b < hi - lo; ++b)
    for (int64_t t = 0; t < T; ++t) out[b * T + t] = m[order[static_cast<size_t>(lo + b)] * T + t];
  return out;
}

struct AdaptEngine {
  const TaskSpec& task;
  const EvalConfig& cfg;
  nn::Encoder<float>& enc;
  PredictionHead<float>& head;
  bool train_encoder;

  ag::Var<float> predict(const Tensor<float>& batch, bool training, uint64_t seed) {
    auto x = ag::make_leaf(batch, false);
    auto tokens = enc.backbone_forward(enc.stem_forward(x, training), training, seed);
    return head.forward(tokens);
  }

  ag::Var<float> loss(const ag::Var<float>& preds, const Tensor<float>& y) {
    return task.kind == TaskKind::kMultilabelClassification ? ag::bce_with_logits(preds, y)
                                                            : ag::l1_loss(preds, y);
  }
};

MetricReport run_adaptation(AdaptEngine& eng, train::Adam<float>& adam, const LabeledSet& train,
                            const LabeledSet& val, const LabeledSet& test, AdaptMode mode) {
  const auto& cfg = eng.cfg;
  MetricReport report;
  report.mode = adapt_mode_to_string(mode);
  report.metric = eng.task.kind == TaskKind::kMultilabelClassification ? "auroc" : "mae";

  std::vector<double> mean, sd;
  train_stats(train.labels, mean, sd);
  const bool regression = eng.task.kind == TaskKind::kRegression;
  const Tensor<float> ytrain = regression ? standardize(train.labels, mean, sd) : train.labels;
  const Tensor<float> yval = regression ? standardize(val.labels, mean, sd) : val.labels;
  if (regression) {
    report.norm_mean = mean;
    report.norm_std = sd;
  }

  const bool enc_training = eng.train_encoder;
  const auto n = static_cast<int64_t>(train.windows.size());
  int64_t gstep = 0;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {0xe9, static_cast<uint64_t>(epoch)}));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

    double epoch_loss = 0.0;
    for (int64_t lo = 0; lo < n; lo += cfg.batch_size) {
      const int64_t hi = std::min(lo + cfg.batch_size, n);
      const auto batch = train::stack_windows(train.windows, order, lo, hi);
      const auto yb = gather_rows(regression ? ytrain : train.labels, order, lo, hi);
      const uint64_t seed = derive_seed(cfg.seed, {0x57e9, static_cast<uint64_t>(gstep)});
      auto root = eng.loss(eng.predict(batch, enc_training, seed), yb);
      const double loss = root->value[0];
      if (!std::isfinite(loss))
        throw NumericError("non-finite adaptation loss at step " + std::to_string(gstep + 1));
      ag::backward(root);
      adam.step();
      adam.zero_grad();
      epoch_loss += loss * static_cast<double>(hi - lo);
      ++gstep;
    }
    report.train_epoch_loss.push_back(epoch_loss / static_cast<double>(n));

    if (!val.windows.empty()) {
      std::vector<int64_t> vorder(val.windows.size());
      std::iota(vorder.begin(), vorder.end(), 0);
      const auto vn = static_cast<int64_t>(val.windows.size());
      double vloss = 0.0;
      int64_t vb = 0;
      for (int64_t lo = 0; lo < vn; lo += cfg.batch_size, ++vb) {
        const int64_t hi = std::min(lo + cfg.batch_size, vn);
        const auto batch = train::stack_windows(val.windows, vorder, lo, hi);
        const auto yb = gather_rows(yval, vorder, lo, hi);
        const uint64_t seed = derive_seed(cfg.seed, {0x7a1, static_cast<uint64_t>(vb)});
        auto root = eng.loss(eng.predict(batch, false, seed), yb);
        vloss += static_cast<double>(root->value[0]) * static_cast<double>(hi - lo);
      }
      report.val_loss.emplace_back(epoch + 1, vloss / static_cast<double>(vn));
    }
  }

  // Test predictions: probabilities for classification, z-space estimates
  // for regression; retained per sample for bootstrap comparisons.
  const auto tn = static_cast<int64_t>(test.windows.size());
  const int64_t T = eng.task.num_targets;
  report.predictions = Tensor<float>({tn, T});
  report.labels = test.labels;
  std::vector<int64_t> torder(test.windows.size());
  std::iota(torder.begin(), torder.end(), 0);
  int64_t tb = 0;
  for (int64_t lo = 0; lo < tn; lo += cfg.batch_size, ++tb) {
    const int64_t hi = std::min(lo + cfg.batch_size, tn);
    const auto batch = train::stack_windows(test.windows, torder, lo, hi);
    const uint64_t seed = derive_seed(cfg.seed, {0x7e57, static_cast<uint64_t>(tb)});
    auto preds = eng.predict(batch, false, seed);
    for (int64_t b = 0; b < hi - lo; ++b)
      for (int64_t t = 0; t < T; ++t) {
        const float z = preds->value[b * T + t];
        report.predictions[(lo + b) * T + t] =
            regression ? z : 1.0f / (1.0f + std::exp(-z));
      }
  }

  report.scores = regression ? standardized_mae(report.predictions, test.labels, mean, sd)
                             : macro_auroc(report.predictions, test.labels);
  return report;
}

AdaptOutcome adapt_sets(const std::string& checkpoint_dir, const nn::StemConfig& stem_cfg,
                        const nn::BackboneConfig& bb_cfg, int64_t in_channels,
                        const TaskSpec& task, AdaptMode mode, const EvalConfig& cfg,
                        const LabeledSet& train, const LabeledSet& val, const LabeledSet& test) {
  if (task.num_targets < 1) throw ConfigError("task needs at least one target");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (train.windows.empty()) throw DataError("no training windows after windowing");
  if (test.windows.empty()) throw DataError("no test windows after windowing");

  AdaptOutcome out;
  out.model.encoder = std::make_unique<nn::Encoder<float>>(stem_cfg, bb_cfg, in_channels,
                                                           derive_seed(cfg.seed, {0xadae}));
  auto& enc = *out.model.encoder;

  std::vector<nn::NamedState<float>> dests;
  std::vector<nn::NamedParam<float>> eparams;
  enc.collect_params(eparams);
  for (auto& p : eparams) dests.push_back({p.name, p.group, &p.var->value});
  enc.collect_state(dests);
  train::load_checkpoint(checkpoint_dir, dests, {"stem", "backbone"});

  const HeadVariant variant = mode == AdaptMode::kFrozen ? HeadVariant::kQueryAttention
                              : mode == AdaptMode::kLinear ? HeadVariant::kLinearFrozen
                                                           : HeadVariant::kLinearMeanpool;
  out.model.head = std::make_unique<PredictionHead<float>>(
      variant, enc.model_dim(), task.num_targets, cfg.attn_heads, derive_seed(cfg.seed, {0xead}));

  train::AdamConfig acfg;
  acfg.learning_rate = cfg.learning_rate;
  acfg.weight_decay = cfg.weight_decay;
  std::vector<nn::NamedParam<float>> params;
  std::map<std::string, double> group_lr;
  if (mode == AdaptMode::kFinetune) {
    enc.collect_params(params);
    group_lr = {{"head", cfg.learning_rate},
                {"backbone", cfg.backbone_lr},
                {"stem", cfg.stem_lr}};
  }
  out.model.head->collect_params(params);
  train::Adam<float> adam(params, acfg, group_lr);

  AdaptEngine eng{task, cfg, enc, *out.model.head, mode == AdaptMode::kFinetune};
  out.report = run_adaptation(eng, adam, train, val, test, mode);
  return out;
}

}  // namespace

AdaptOutcome adapt(const std::string& checkpoint_dir, const nn::StemConfig& stem_cfg,
                   const nn::BackboneConfig& bb_cfg, int64_t in_channels, const TaskSpec& task,
                   AdaptMode mode, const EvalConfig& cfg) {
  const LabeledSet train = load_split(task.train_manifest, task, cfg);
  const LabeledSet val = load_split(task.val_manifest, task, cfg);
  const LabeledSet test = load_split(task.test_manifest, task, cfg);
  return adapt_sets(checkpoint_dir, stem_cfg, bb_cfg, in_channels, task, mode, cfg, train, val,
                    test);
}

std::vector<LabelEfficiencyEntry> label_efficiency(const std::string& checkpoint_dir,
                                                   const nn::StemConfig& stem_cfg,
                                                   const nn::BackboneConfig& bb_cfg,
                                                   int64_t in_channels, const TaskSpec& task,
                                                   const std::vector<double>& fractions,
                                                   AdaptMode mode, const EvalConfig& cfg) {
  const LabeledSet train = load_split(task.train_manifest, task, cfg);
  const LabeledSet val = load_split(task.val_manifest, task, cfg);
  const LabeledSet test = load_split(task.test_manifest, task, cfg);

  const auto subsets = data::subsample_indices(static_cast<int64_t>(train.windows.size()),
                                               fractions, derive_seed(cfg.seed, {0x5ab}));
  std::vector<LabelEfficiencyEntry> rows;
  for (const auto& [fraction, idx] : subsets) {
    const LabeledSet sub = take_subset(train, idx);
    auto outcome = adapt_sets(checkpoint_dir, stem_cfg, bb_cfg, in_channels, task, mode, cfg, sub,
                              val, test);
    LabelEfficiencyEntry row;
    row.fraction = fraction;
    row.residual_error = task.kind == TaskKind::kMultilabelClassification
                             ? 1.0 - outcome.report.scores.macro
                             : outcome.report.scores.macro;
    row.report = std::move(outcome.report);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_metric_report(const std::string& dir, const MetricReport& report) {
  fs::create_directories(dir);

  std::ofstream csv(fs::path(dir) / "metrics.csv");
  if (!csv) throw IoError("cannot write metrics.csv in " + dir);
  csv << "target,score,included\n";
  for (size_t t = 0; t < report.scores.per_target.size(); ++t) {
    const double v = report.scores.per_target[t];
    csv << t << ',';
    if (std::isfinite(v))
      csv << v << ",1\n";
    else
      csv << ",0\n";
  }

  nlohmann::json summary;
  summary["mode"] = report.mode;
  summary["metric"] = report.metric;
  summary["macro"] = report.scores.macro;
  summary["num_samples"] = report.predictions.dim(0);
  summary["num_targets"] = report.predictions.dim(1);
  summary["excluded_targets"] = report.scores.excluded;
  summary["final_train_loss"] =
      report.train_epoch_loss.empty() ? nlohmann::json() : nlohmann::json(report.train_epoch_loss.back());
  if (!report.norm_mean.empty()) {
    summary["norm_mean"] = report.norm_mean;
    summary["norm_std"] = report.norm_std;
  }
  std::ofstream js(fs::path(dir) / "summary.json");
  if (!js) throw IoError("cannot write summary.json in " + dir);
  js << summary.dump(2) << '\n';

  const auto write_blob = [&](const char* name, const Tensor<float>& t) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw IoError(std::string("cannot write ") + name + " in " + dir);
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
  };
  write_blob("predictions.f32", report.predictions);
  write_blob("labels.f32", report.labels);
}

MetricReport read_metric_report(const std::string& dir) {
  std::ifstream js(fs::path(dir) / "summary.json");
  if (!js) throw IoError("cannot read summary.json in " + dir);
  nlohmann::json summary;
  try {
    js >> summary;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed summary.json in " + dir + ": " + e.what());
  }

  MetricReport report;
  report.mode = summary.at("mode").get<std::string>();
  report.metric = summary.at("metric").get<std::string>();
  report.scores.macro = summary.at("macro").get<double>();
  report.scores.excluded = summary.at("excluded_targets").get<std::vector<int64_t>>();
  if (summary.contains("norm_mean")) {
    report.norm_mean = summary.at("norm_mean").get<std::vector<double>>();
    report.norm_std = summary.at("norm_std").get<std::vector<double>>();
  }

  const auto N = summary.at("num_samples").get<int64_t>();
  const auto T = summary.at("num_targets").get<int64_t>();
  const auto read_blob = [&](const char* name) {
    std::ifstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw IoError(std::string("cannot read ") + name + " in " + dir);
    Tensor<float> t({N, T});
    f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
    if (f.gcount() != static_cast<std::streamsize>(t.numel() * 4))
      throw DataError(std::string(name) + " in " + dir + " is shorter than summary.json implies");
    return t;
  };
  report.predictions = read_blob("predictions.f32");
  report.labels = read_blob("labels.f32");
  return report;
}

}  // namespace sslts::eval
