#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sslts/data/windows.hpp"
#include "sslts/nn/encoder.hpp"
#include "sslts/ssl/objectives.hpp"
#include "sslts/train/adam.hpp"
#include "sslts/train/checkpoint.hpp"

namespace sslts::train {

struct TrainConfig {
  double learning_rate = 3e-3;
  double weight_decay = 1e-3;
  double clip_norm = 0.0;  // 0 disables clipping
  int64_t batch_size = 64;
  int64_t epochs = 10;
  uint64_t seed = 0;
};

struct RunRecord {
  std::vector<double> step_loss;                      // one entry per optimizer step
  std::vector<std::pair<int64_t, double>> val_loss;   // (epoch, loss), epochs 1-based
  double wall_seconds = 0.0;
  int64_t train_windows = 0;
  int64_t val_windows = 0;
};

struct RunResult {
  RunRecord record;
  std::string final_checkpoint;  // directory of the last checkpoint written
};

// Full pretraining run: builds the encoder and objective, optimizes with
// Adam, writes per-step/per-epoch CSVs, a verbatim config echo, and one
// checkpoint per epoch under out_dir. Deterministic given the seed.
// Non-finite loss aborts with a diagnostic dump on stderr.
RunResult pretrain(const std::vector<data::SignalWindow>& train,
                   const std::vector<data::SignalWindow>& val, const nn::StemConfig& stem_cfg,
                   const nn::BackboneConfig& bb_cfg, int64_t in_channels,
                   const ssl::ObjectiveConfig& obj_cfg, const TrainConfig& tcfg,
                   const std::string& out_dir, const std::string& config_echo);

// Domain-adaptive continuation: restores encoder/head/objective state from
// checkpoint_dir (the optimizer starts fresh), verifies the objective kind,
// and continues SSL training, appending to the provenance chain. Zero epochs
// re-emits the loaded parameters unchanged.
RunResult continual_pretrain(const std::string& checkpoint_dir,
                             const std::vector<data::SignalWindow>& train,
                             const std::vector<data::SignalWindow>& val,
                             const nn::StemConfig& stem_cfg, const nn::BackboneConfig& bb_cfg,
                             int64_t in_channels, const ssl::ObjectiveConfig& obj_cfg,
                             const TrainConfig& tcfg, const std::string& out_dir,
                             const std::string& config_echo);

// Stacks windows[idx[lo..hi)] into a [B, C, W] batch tensor.
Tensor<float> stack_windows(const std::vector<data::SignalWindow>& windows,
                            const std::vector<int64_t>& order, int64_t lo, int64_t hi);

}  // namespace sslts::train
