#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sslts/analysis/cka.hpp"
#include "sslts/analysis/scaling.hpp"
#include "sslts/common.hpp"
#include "sslts/data/synthetic.hpp"
#include "sslts/eval/adapt.hpp"
#include "sslts/nn/encoder.hpp"
#include "sslts/ssl/objectives.hpp"
#include "sslts/train/trainer.hpp"

namespace sslts::config {

// Run configuration: sections {data, encoder, objective, train, eval,
// analysis}, each a flat key-value map. Every key has a schema default, so a
// config file only states overrides. Text grammar, one directive per line:
//
//   # comment (anywhere; '#' starts a comment)
//   include other.cfg        relative paths resolve against the including file
//   [section]
//   key = value              lists are comma-separated
//
// Later assignments win, so `include base.cfg` followed by overrides
// composes. An included file starts outside any section and must declare its
// own. Unknown sections and keys are rejected with the offending name.
class RunConfig {
 public:
  // Every key at its schema default.
  RunConfig();

  // Parses a file on top of the defaults. Unreadable files raise IoError;
  // syntax and schema violations raise ConfigError with file:line context.
  static RunConfig load(const std::string& path);

  // Same grammar from memory; includes resolve against base_dir.
  static RunConfig parse(const std::string& text, const std::string& base_dir = ".");

  // Canonical text form listing every key in schema order. Parsing the
  // rendering reproduces the config exactly, which is what lets a checkpoint
  // echo stand in for the original file.
  std::string render() const;

  // Assigns one value, validating that section.key exists in the schema.
  void set(const std::string& section, const std::string& key, const std::string& value);

  bool is_default(const std::string& section, const std::string& key) const;

  const std::string& get(const std::string& section, const std::string& key) const;
  int64_t get_int(const std::string& section, const std::string& key) const;
  uint64_t get_uint(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  std::vector<int64_t> get_ints(const std::string& section, const std::string& key) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key) const;

 private:
  // section -> key -> value; populated with every schema key up front.
  std::map<std::string, std::map<std::string, std::string>> values_;
  std::map<std::string, std::map<std::string, bool>> overridden_;
};

// Typed views of the sections. Each validates eagerly so a bad value fails
// at config time, not mid-run.
nn::StemConfig stem_config(const RunConfig& c);
nn::BackboneConfig backbone_config(const RunConfig& c);
ssl::ObjectiveConfig objective_config(const RunConfig& c);
train::TrainConfig train_config(const RunConfig& c);
data::SyntheticSpec synthetic_spec(const RunConfig& c);
eval::TaskSpec task_spec(const RunConfig& c);
eval::EvalConfig eval_config(const RunConfig& c);

// Label-efficiency fractions from [eval], each in (0, 1], ascending.
std::vector<double> eval_fractions(const RunConfig& c);

struct DataOptions {
  std::string manifest;
  int64_t window_len = 600;
  int64_t stride = 0;
  int num_folds = 10;
  int val_fold = 0;
  uint64_t fold_seed = 0;
};
DataOptions data_options(const RunConfig& c);

struct AnalysisOptions {
  double sigma = 1.0;
  bool median_scale = false;
  analysis::Stage stage = analysis::Stage::kLate;
  int64_t probe_windows = 256;
  int64_t token_subsample = 0;
  int64_t batch_size = 64;
  int64_t resamples = 1000;
  double confidence = 0.95;
  uint64_t seed = 0;
  bool with_floor = true;
  analysis::AlphaWeighting weighting = analysis::AlphaWeighting::kR2;
};
AnalysisOptions analysis_options(const RunConfig& c);

}  // namespace sslts::config
