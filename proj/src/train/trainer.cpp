#include "sslts/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "sslts/core/rng.hpp"

namespace sslts::train {

namespace fs = std::filesystem;

Tensor<float> stack_windows(const std::vector<data::SignalWindow>& windows,
                            const std::vector<int64_t>& order, int64_t lo, int64_t hi) {
  const int64_t B = hi - lo;
  const auto& first = windows[static_cast<size_t>(order[static_cast<size_t>(lo)])].values;
  const int64_t C = first.dim(0), W = first.dim(1);
  Tensor<float> batch({B, C, W});
  for (int64_t b = 0; b < B; ++b) {
    const auto& w = windows[static_cast<size_t>(order[static_cast<size_t>(lo + b)])].values;
    if (w.dim(0) != C || w.dim(1) != W) throw DataError("window shape mismatch in batch assembly");
    std::copy(w.data(), w.data() + C * W, batch.data() + b * C * W);
  }
  return batch;
}

namespace {

// Everything a checkpoint holds: encoder weights and running stats, objective
// heads and state (EMA teacher, codebooks, prototypes, counters), optimizer
// moments. Parameter tensors are exposed through their node storage so the
// same entry list serves save and load.
std::vector<nn::NamedState<float>> checkpoint_entries(nn::Encoder<float>& enc,
                                                      ssl::Objective<float>& obj,
                                                      Adam<float>* adam) {
  std::vector<nn::NamedState<float>> out;
  std::vector<nn::NamedParam<float>> eparams;
  enc.collect_params(eparams);
  for (auto& p : eparams) out.push_back({p.name, p.group, &p.var->value});
  enc.collect_state(out);
  for (auto& p : obj.params()) out.push_back({p.name, p.group, &p.var->value});
  obj.collect_state(out);
  if (adam) adam->collect_state(out);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

std::string format_loss(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void dump_batch_stats(const Tensor<float>& batch, const ssl::Objective<float>& obj) {
  double mean = 0.0, sq = 0.0;
  double lo = batch.numel() ? batch[0] : 0.0, hi = lo;
  for (int64_t i = 0; i < batch.numel(); ++i) {
    const double v = batch[i];
    mean += v;
    sq += v * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double n = std::max<double>(1.0, static_cast<double>(batch.numel()));
  mean /= n;
  const double var = std::max(0.0, sq / n - mean * mean);
  std::fprintf(stderr, "batch stats: mean=%.6g std=%.6g min=%.6g max=%.6g\n", mean,
               std::sqrt(var), lo, hi);
  for (const auto& [name, value] : obj.diagnostics())
    std::fprintf(stderr, "diagnostic %s=%.6g\n", name.c_str(), value);
}

double validate(nn::Encoder<float>& enc, ssl::Objective<float>& obj,
                const std::vector<data::SignalWindow>& val, const TrainConfig& tcfg) {
  const auto n = static_cast<int64_t>(val.size());
  std::vector<int64_t> order(val.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  int64_t batch_idx = 0;
  for (int64_t lo = 0; lo < n; lo += tcfg.batch_size, ++batch_idx) {
    const int64_t hi = std::min(lo + tcfg.batch_size, n);
    const Tensor<float> batch = stack_windows(val, order, lo, hi);
    const uint64_t seed = derive_seed(tcfg.seed, {0x7a1, static_cast<uint64_t>(batch_idx)});
    auto root = obj.loss(enc, batch, /*step=*/-1, seed, /*training=*/false);
    total += static_cast<double>(root->value[0]) * static_cast<double>(hi - lo);
  }
  return total / static_cast<double>(n);
}

RunResult run(nn::Encoder<float>& enc, ssl::Objective<float>& obj,
              const std::vector<data::SignalWindow>& train,
              const std::vector<data::SignalWindow>& val, const TrainConfig& tcfg,
              const std::string& out_dir, const std::string& config_echo,
              std::vector<std::string> provenance, const char* stage) {
  if (tcfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (tcfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (tcfg.epochs > 0 && train.empty()) throw DataError("no training windows");

  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(fs::path(out_dir) / "checkpoints");

  char line[160];
  std::snprintf(line, sizeof(line), "%s objective=%s seed=%llu epochs=%lld windows=%lld", stage,
                ssl::objective_to_string(obj.kind()).c_str(),
                static_cast<unsigned long long>(tcfg.seed),
                static_cast<long long>(tcfg.epochs), static_cast<long long>(train.size()));
  provenance.emplace_back(line);

  AdamConfig acfg;
  acfg.learning_rate = tcfg.learning_rate;
  acfg.weight_decay = tcfg.weight_decay;
  acfg.clip_norm = tcfg.clip_norm;
  std::vector<nn::NamedParam<float>> params;
  enc.collect_params(params);
  obj.collect_params(params);
  Adam<float> adam(params, acfg);

  CheckpointMeta meta;
  meta.objective_kind = ssl::objective_to_string(obj.kind());
  meta.provenance = std::move(provenance);
  meta.config_echo = config_echo;

  write_text(fs::path(out_dir) / "config.txt", config_echo);

  RunResult result;
  result.record.train_windows = static_cast<int64_t>(train.size());
  result.record.val_windows = static_cast<int64_t>(val.size());

  const auto save = [&](const std::string& tag) {
    const std::string dir = (fs::path(out_dir) / "checkpoints" / tag).string();
    auto entries = checkpoint_entries(enc, obj, &adam);
    save_checkpoint(dir, entries, meta);
    result.final_checkpoint = dir;
  };

  if (tcfg.epochs == 0) save("epoch_0");

  std::string train_csv = "step,loss\n";
  std::string val_csv = "epoch,val_loss\n";
  const auto n = static_cast<int64_t>(train.size());
  int64_t global_step = 0;

  for (int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::vector<int64_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(tcfg.seed, {0xe9, static_cast<uint64_t>(epoch)}));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

    for (int64_t lo = 0; lo < n; lo += tcfg.batch_size) {
      const int64_t hi = std::min(lo + tcfg.batch_size, n);
      const Tensor<float> batch = stack_windows(train, order, lo, hi);
      const uint64_t seed = derive_seed(tcfg.seed, {0x57e9, static_cast<uint64_t>(global_step)});
      auto root = obj.loss(enc, batch, global_step, seed, /*training=*/true);
      const double loss = root->value[0];
      if (!std::isfinite(loss)) {
        dump_batch_stats(batch, obj);
        throw NumericError("non-finite loss at step " + std::to_string(global_step + 1));
      }
      ag::backward(root);
      adam.step();
      adam.zero_grad();
      obj.update_state(enc, global_step);

      result.record.step_loss.push_back(loss);
      train_csv += std::to_string(global_step + 1) + "," + format_loss(loss) + "\n";
      ++global_step;
    }

    if (!val.empty()) {
      const double vl = validate(enc, obj, val, tcfg);
      result.record.val_loss.emplace_back(epoch + 1, vl);
      val_csv += std::to_string(epoch + 1) + "," + format_loss(vl) + "\n";
    }
    save("epoch_" + std::to_string(epoch + 1));
  }

  write_text(fs::path(out_dir) / "train_loss.csv", train_csv);
  write_text(fs::path(out_dir) / "val_loss.csv", val_csv);

  result.record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

RunResult pretrain(const std::vector<data::SignalWindow>& train,
                   const std::vector<data::SignalWindow>& val, const nn::StemConfig& stem_cfg,
                   const nn::BackboneConfig& bb_cfg, int64_t in_channels,
                   const ssl::ObjectiveConfig& obj_cfg, const TrainConfig& tcfg,
                   const std::string& out_dir, const std::string& config_echo) {
  nn::Encoder<float> enc(stem_cfg, bb_cfg, in_channels, derive_seed(tcfg.seed, {0xe0c}));
  auto obj = ssl::make_objective<float>(obj_cfg, enc, derive_seed(tcfg.seed, {0x0b1}));
  return run(enc, *obj, train, val, tcfg, out_dir, config_echo, {}, "pretrain");
}

RunResult continual_pretrain(const std::string& checkpoint_dir,
                             const std::vector<data::SignalWindow>& train,
                             const std::vector<data::SignalWindow>& val,
                             const nn::StemConfig& stem_cfg, const nn::BackboneConfig& bb_cfg,
                             int64_t in_channels, const ssl::ObjectiveConfig& obj_cfg,
                             const TrainConfig& tcfg, const std::string& out_dir,
                             const std::string& config_echo) {
  const CheckpointMeta prior = read_checkpoint_meta(checkpoint_dir);
  if (prior.objective_kind != ssl::objective_to_string(obj_cfg.kind))
    throw ConfigError("checkpoint objective is " + prior.objective_kind + ", config requests " +
                      ssl::objective_to_string(obj_cfg.kind));

  nn::Encoder<float> enc(stem_cfg, bb_cfg, in_channels, derive_seed(tcfg.seed, {0xe0c}));
  auto obj = ssl::make_objective<float>(obj_cfg, enc, derive_seed(tcfg.seed, {0x0b1}));

  // Model and objective state carry over; the optimizer starts fresh.
  auto dests = checkpoint_entries(enc, *obj, nullptr);
  load_checkpoint(checkpoint_dir, dests, {"stem", "backbone", "head", "objective"});

  return run(enc, *obj, train, val, tcfg, out_dir, config_echo, prior.provenance, "continual");
}

}  // namespace sslts::train
