#include "sslts/config/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace sslts::config {
namespace {

struct SchemaEntry {
  const char* section;
  const char* key;
  const char* value;
};

// Single source of truth: declaration order is render order, and the value
// column is the default. Everything else (validation, typed access, echo)
// derives from this table.
const std::vector<SchemaEntry>& schema() {
  static const std::vector<SchemaEntry> table{
      {"data", "manifest", ""},
      {"data", "window_len", "600"},
      {"data", "stride", "0"},
      {"data", "num_folds", "10"},
      {"data", "val_fold", "0"},
      {"data", "fold_seed", "0"},
      {"data", "records", "256"},
      {"data", "channels", "12"},
      {"data", "record_len", "1800"},
      {"data", "sampling_rate", "240"},
      {"data", "task", "none"},
      {"data", "seed", "0"},

      {"encoder", "family", "ssm"},
      {"encoder", "model_dim", "512"},
      {"encoder", "depth", "0"},
      {"encoder", "state_dim", "8"},
      {"encoder", "num_heads", "8"},
      {"encoder", "dropout", "0.2"},
      {"encoder", "causal", "false"},
      {"encoder", "net1d_widths", ""},
      {"encoder", "net1d_kernel", "5"},
      {"encoder", "net1d_blocks_per_stage", "2"},
      {"encoder", "stem_dims", "512, 512, 512, 512"},
      {"encoder", "stem_kernels", "3, 1, 1, 1"},
      {"encoder", "stem_strides", "2, 1, 1, 1"},
      {"encoder", "stem_dilations", "1, 1, 1, 1"},
      {"encoder", "stem_batch_norm", "true"},

      {"objective", "kind", "data2vec"},
      {"objective", "mask_prob", "0.065"},
      {"objective", "mask_span", "10"},
      {"objective", "context_frac_lo", "0.85"},
      {"objective", "context_frac_hi", "1"},
      {"objective", "pred_blocks", "4"},
      {"objective", "pred_frac_lo", "0.15"},
      {"objective", "pred_frac_hi", "0.2"},
      {"objective", "min_context_tokens", "64"},
      {"objective", "ema_start", "0.999"},
      {"objective", "ema_end", "0.999"},
      {"objective", "ema_steps", "0"},
      {"objective", "smooth_l1_beta", "1"},
      {"objective", "target_layers", "2"},
      {"objective", "head_dropout", "0"},
      {"objective", "codebook_sizes", "256, 256"},
      {"objective", "codebook_momentum", "0.9"},
      {"objective", "dinosr_temperature", "1"},
      {"objective", "cpc_num_steps", "14"},
      {"objective", "prototype_sizes", "128, 256"},
      {"objective", "prototype_momentum", "0.9"},
      {"objective", "freeze_steps", "300"},
      {"objective", "hubert_temperature", "0.1"},
      {"objective", "hubert_alpha", "0.75"},
      {"objective", "sinkhorn_iters", "3"},
      {"objective", "sinkhorn_epsilon", "0.05"},

      {"train", "learning_rate", "3e-3"},
      {"train", "weight_decay", "1e-3"},
      {"train", "clip_norm", "0"},
      {"train", "batch_size", "64"},
      {"train", "epochs", "10"},
      {"train", "seed", "0"},

      {"eval", "task_kind", "multilabel_classification"},
      {"eval", "num_targets", "1"},
      {"eval", "train_manifest", ""},
      {"eval", "val_manifest", ""},
      {"eval", "test_manifest", ""},
      {"eval", "mode", "finetune"},
      {"eval", "window_len", "600"},
      {"eval", "stride", "0"},
      {"eval", "batch_size", "64"},
      {"eval", "epochs", "100"},
      {"eval", "learning_rate", "1e-3"},
      {"eval", "backbone_lr", "1e-4"},
      {"eval", "stem_lr", "1e-5"},
      {"eval", "weight_decay", "1e-3"},
      {"eval", "attn_heads", "16"},
      {"eval", "seed", "0"},
      {"eval", "fractions", "0.01, 0.1, 1"},

      {"analysis", "sigma", "1"},
      {"analysis", "median_scale", "false"},
      {"analysis", "stage", "late"},
      {"analysis", "probe_windows", "256"},
      {"analysis", "token_subsample", "0"},
      {"analysis", "batch_size", "64"},
      {"analysis", "resamples", "1000"},
      {"analysis", "confidence", "0.95"},
      {"analysis", "seed", "0"},
      {"analysis", "with_floor", "true"},
      {"analysis", "weighting", "r2"},
  };
  return table;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool valid_key_name(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return !std::isdigit(static_cast<unsigned char>(k[0]));
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& got, const std::string& want) {
  throw ConfigError("config value " + section + "." + key + " must be " + want + ", got '" +
                    got + "'");
}

int64_t to_int(const std::string& section, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  char* end = nullptr;
  errno = 0;
  const long long r = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    bad_value(section, key, raw, "an integer");
  return static_cast<int64_t>(r);
}

uint64_t to_uint(const std::string& section, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  char* end = nullptr;
  errno = 0;
  const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || end != v.c_str() + v.size() || errno == ERANGE)
    bad_value(section, key, raw, "a non-negative integer");
  return static_cast<uint64_t>(r);
}

double to_double(const std::string& section, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  char* end = nullptr;
  errno = 0;
  const double r = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    bad_value(section, key, raw, "a number");
  return r;
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  if (trim(raw).empty()) return out;
  std::string item;
  std::stringstream ss(raw);
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

void parse_into(RunConfig& cfg, std::istream& in, const std::string& display_path,
                const std::string& base_dir, std::vector<std::string>& include_stack);

void include_file(RunConfig& cfg, const std::string& path,
                  std::vector<std::string>& include_stack) {
  std::error_code ec;
  const fs::path canon = fs::weakly_canonical(path, ec);
  const std::string key = ec ? path : canon.string();
  if (std::find(include_stack.begin(), include_stack.end(), key) != include_stack.end()) {
    std::string chain;
    for (const auto& p : include_stack) chain += p + " -> ";
    throw ConfigError("config include cycle: " + chain + key);
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  include_stack.push_back(key);
  parse_into(cfg, in, path, fs::path(path).parent_path().string(), include_stack);
  include_stack.pop_back();
}

void parse_into(RunConfig& cfg, std::istream& in, const std::string& display_path,
                const std::string& base_dir, std::vector<std::string>& include_stack) {
  std::string line;
  std::string section;
  int lineno = 0;
  auto ctx = [&](const std::string& msg) {
    return ConfigError(display_path + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ctx("unterminated section header: '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      // Validated on first assignment; an empty known section is harmless.
      continue;
    }
    if (t.rfind("include", 0) == 0 && (t.size() == 7 || std::isspace(static_cast<unsigned char>(t[7])))) {
      const std::string target = trim(t.substr(7));
      if (target.empty()) throw ctx("include needs a path");
      fs::path p(target);
      if (p.is_relative()) p = fs::path(base_dir.empty() ? "." : base_dir) / p;
      // Errors from inside the included file already carry their own
      // file:line context, so they propagate untouched.
      include_file(cfg, p.string(), include_stack);
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) throw ctx("malformed config line: '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!valid_key_name(key)) throw ctx("malformed config key: '" + key + "'");
    if (section.empty()) throw ctx("key '" + key + "' appears before any [section] header");
    try {
      cfg.set(section, key, value);
    } catch (const ConfigError& e) {
      throw ctx(e.what());
    }
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& e : schema()) {
    values_[e.section][e.key] = e.value;
    overridden_[e.section][e.key] = false;
  }
}

RunConfig RunConfig::load(const std::string& path) {
  RunConfig cfg;
  std::vector<std::string> stack;
  include_file(cfg, path, stack);
  return cfg;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& base_dir) {
  RunConfig cfg;
  std::istringstream in(text);
  std::vector<std::string> stack;
  parse_into(cfg, in, "<config>", base_dir, stack);
  return cfg;
}

std::string RunConfig::render() const {
  std::string out;
  std::string current;
  for (const auto& e : schema()) {
    if (current != e.section) {
      if (!current.empty()) out += "\n";
      current = e.section;
      out += "[" + current + "]\n";
    }
    out += std::string(e.key) + " = " + values_.at(e.section).at(e.key) + "\n";
  }
  return out;
}

void RunConfig::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  auto sit = values_.find(section);
  if (sit == values_.end()) throw ConfigError("unknown config section: [" + section + "]");
  auto kit = sit->second.find(key);
  if (kit == sit->second.end())
    throw ConfigError("unknown config key: " + section + "." + key);
  kit->second = value;
  overridden_[section][key] = true;
}

bool RunConfig::is_default(const std::string& section, const std::string& key) const {
  get(section, key);
  return !overridden_.at(section).at(key);
}

const std::string& RunConfig::get(const std::string& section, const std::string& key) const {
  auto sit = values_.find(section);
  if (sit == values_.end()) throw ConfigError("unknown config section: [" + section + "]");
  auto kit = sit->second.find(key);
  if (kit == sit->second.end())
    throw ConfigError("unknown config key: " + section + "." + key);
  return kit->second;
}

int64_t RunConfig::get_int(const std::string& section, const std::string& key) const {
  return to_int(section, key, get(section, key));
}

uint64_t RunConfig::get_uint(const std::string& section, const std::string& key) const {
  return to_uint(section, key, get(section, key));
}

double RunConfig::get_double(const std::string& section, const std::string& key) const {
  return to_double(section, key, get(section, key));
}

bool RunConfig::get_bool(const std::string& section, const std::string& key) const {
  const std::string v = trim(get(section, key));
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(section, key, v, "'true' or 'false'");
}

std::vector<int64_t> RunConfig::get_ints(const std::string& section,
                                         const std::string& key) const {
  std::vector<int64_t> out;
  for (const auto& item : split_list(get(section, key))) out.push_back(to_int(section, key, item));
  return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& section,
                                           const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(section, key)))
    out.push_back(to_double(section, key, item));
  return out;
}

namespace {

void require(bool ok, const std::string& section, const std::string& key,
             const std::string& got, const std::string& want) {
  if (!ok) bad_value(section, key, got, want);
}

}  // namespace

nn::StemConfig stem_config(const RunConfig& c) {
  nn::StemConfig s;
  s.out_dims = c.get_ints("encoder", "stem_dims");
  s.kernel_sizes = c.get_ints("encoder", "stem_kernels");
  s.strides = c.get_ints("encoder", "stem_strides");
  s.dilations = c.get_ints("encoder", "stem_dilations");
  s.use_batch_norm = c.get_bool("encoder", "stem_batch_norm");
  s.validate();
  return s;
}

nn::BackboneConfig backbone_config(const RunConfig& c) {
  nn::BackboneConfig b;
  b.family = nn::family_from_string(c.get("encoder", "family"));
  b.model_dim = c.get_int("encoder", "model_dim");
  b.depth = c.get_int("encoder", "depth");
  b.state_dim = c.get_int("encoder", "state_dim");
  b.dropout = c.get_double("encoder", "dropout");
  b.causal = c.get_bool("encoder", "causal");
  b.num_heads = c.get_int("encoder", "num_heads");
  b.net1d_widths = c.get_ints("encoder", "net1d_widths");
  b.net1d_kernel = c.get_int("encoder", "net1d_kernel");
  b.net1d_blocks_per_stage = c.get_int("encoder", "net1d_blocks_per_stage");
  b.normalize();
  return b;
}

ssl::ObjectiveConfig objective_config(const RunConfig& c) {
  ssl::ObjectiveConfig o;
  o.kind = ssl::objective_from_string(c.get("objective", "kind"));
  o.span.midpoint_prob = c.get_double("objective", "mask_prob");
  require(o.span.midpoint_prob > 0.0 && o.span.midpoint_prob < 1.0, "objective", "mask_prob",
          c.get("objective", "mask_prob"), "in (0, 1)");
  o.span.span_len = c.get_int("objective", "mask_span");
  require(o.span.span_len > 0, "objective", "mask_span", c.get("objective", "mask_span"),
          "positive");
  o.block.context_frac_lo = c.get_double("objective", "context_frac_lo");
  o.block.context_frac_hi = c.get_double("objective", "context_frac_hi");
  require(o.block.context_frac_lo > 0.0 && o.block.context_frac_lo <= o.block.context_frac_hi &&
              o.block.context_frac_hi <= 1.0,
          "objective", "context_frac_lo", c.get("objective", "context_frac_lo"),
          "0 < lo <= hi <= 1");
  o.block.num_pred_blocks = static_cast<int>(c.get_int("objective", "pred_blocks"));
  require(o.block.num_pred_blocks >= 1, "objective", "pred_blocks",
          c.get("objective", "pred_blocks"), "at least 1");
  o.block.pred_frac_lo = c.get_double("objective", "pred_frac_lo");
  o.block.pred_frac_hi = c.get_double("objective", "pred_frac_hi");
  require(o.block.pred_frac_lo > 0.0 && o.block.pred_frac_lo <= o.block.pred_frac_hi &&
              o.block.pred_frac_hi < 1.0,
          "objective", "pred_frac_lo", c.get("objective", "pred_frac_lo"), "0 < lo <= hi < 1");
  o.block.min_context_tokens = c.get_int("objective", "min_context_tokens");
  require(o.block.min_context_tokens >= 1, "objective", "min_context_tokens",
          c.get("objective", "min_context_tokens"), "at least 1");
  o.ema.start = c.get_double("objective", "ema_start");
  o.ema.end = c.get_double("objective", "ema_end");
  require(o.ema.start > 0.0 && o.ema.start <= 1.0 && o.ema.end > 0.0 && o.ema.end <= 1.0,
          "objective", "ema_start", c.get("objective", "ema_start"), "in (0, 1]");
  o.ema.steps = c.get_int("objective", "ema_steps");
  require(o.ema.steps >= 0, "objective", "ema_steps", c.get("objective", "ema_steps"),
          "non-negative");
  o.smooth_l1_beta = c.get_double("objective", "smooth_l1_beta");
  require(o.smooth_l1_beta > 0.0, "objective", "smooth_l1_beta",
          c.get("objective", "smooth_l1_beta"), "positive");
  o.target_layers = c.get_int("objective", "target_layers");
  require(o.target_layers >= 1, "objective", "target_layers", c.get("objective", "target_layers"),
          "at least 1");
  o.head_dropout = c.get_double("objective", "head_dropout");
  require(o.head_dropout >= 0.0 && o.head_dropout < 1.0, "objective", "head_dropout",
          c.get("objective", "head_dropout"), "in [0, 1)");
  o.codebook_sizes = c.get_ints("objective", "codebook_sizes");
  require(!o.codebook_sizes.empty(), "objective", "codebook_sizes",
          c.get("objective", "codebook_sizes"), "a non-empty list");
  for (int64_t k : o.codebook_sizes)
    require(k >= 2, "objective", "codebook_sizes", c.get("objective", "codebook_sizes"),
            "entries of at least 2");
  o.codebook_momentum = c.get_double("objective", "codebook_momentum");
  require(o.codebook_momentum >= 0.0 && o.codebook_momentum < 1.0, "objective",
          "codebook_momentum", c.get("objective", "codebook_momentum"), "in [0, 1)");
  o.dinosr_temperature = c.get_double("objective", "dinosr_temperature");
  require(o.dinosr_temperature > 0.0, "objective", "dinosr_temperature",
          c.get("objective", "dinosr_temperature"), "positive");
  o.cpc_num_steps = c.get_int("objective", "cpc_num_steps");
  require(o.cpc_num_steps >= 1, "objective", "cpc_num_steps", c.get("objective", "cpc_num_steps"),
          "at least 1");
  o.prototype_sizes = c.get_ints("objective", "prototype_sizes");
  require(!o.prototype_sizes.empty(), "objective", "prototype_sizes",
          c.get("objective", "prototype_sizes"), "a non-empty list");
  for (int64_t k : o.prototype_sizes)
    require(k >= 2, "objective", "prototype_sizes", c.get("objective", "prototype_sizes"),
            "entries of at least 2");
  o.prototype_momentum = c.get_double("objective", "prototype_momentum");
  require(o.prototype_momentum >= 0.0 && o.prototype_momentum < 1.0, "objective",
          "prototype_momentum", c.get("objective", "prototype_momentum"), "in [0, 1)");
  o.freeze_steps = c.get_int("objective", "freeze_steps");
  require(o.freeze_steps >= 0, "objective", "freeze_steps", c.get("objective", "freeze_steps"),
          "non-negative");
  o.hubert_temperature = c.get_double("objective", "hubert_temperature");
  require(o.hubert_temperature > 0.0, "objective", "hubert_temperature",
          c.get("objective", "hubert_temperature"), "positive");
  o.hubert_alpha = c.get_double("objective", "hubert_alpha");
  require(o.hubert_alpha >= 0.0 && o.hubert_alpha <= 1.0, "objective", "hubert_alpha",
          c.get("objective", "hubert_alpha"), "in [0, 1]");
  o.sinkhorn_iters = c.get_int("objective", "sinkhorn_iters");
  require(o.sinkhorn_iters >= 1, "objective", "sinkhorn_iters",
          c.get("objective", "sinkhorn_iters"), "at least 1");
  o.sinkhorn_epsilon = c.get_double("objective", "sinkhorn_epsilon");
  require(o.sinkhorn_epsilon > 0.0, "objective", "sinkhorn_epsilon",
          c.get("objective", "sinkhorn_epsilon"), "positive");
  return o;
}

train::TrainConfig train_config(const RunConfig& c) {
  train::TrainConfig t;
  t.learning_rate = c.get_double("train", "learning_rate");
  require(t.learning_rate > 0.0, "train", "learning_rate", c.get("train", "learning_rate"),
          "positive");
  t.weight_decay = c.get_double("train", "weight_decay");
  require(t.weight_decay >= 0.0, "train", "weight_decay", c.get("train", "weight_decay"),
          "non-negative");
  t.clip_norm = c.get_double("train", "clip_norm");
  require(t.clip_norm >= 0.0, "train", "clip_norm", c.get("train", "clip_norm"), "non-negative");
  t.batch_size = c.get_int("train", "batch_size");
  require(t.batch_size > 0, "train", "batch_size", c.get("train", "batch_size"), "positive");
  t.epochs = c.get_int("train", "epochs");
  require(t.epochs >= 0, "train", "epochs", c.get("train", "epochs"), "non-negative");
  t.seed = c.get_uint("train", "seed");
  return t;
}

data::SyntheticSpec synthetic_spec(const RunConfig& c) {
  data::SyntheticSpec s;
  s.num_records = c.get_int("data", "records");
  require(s.num_records > 0, "data", "records", c.get("data", "records"), "positive");
  s.channels = c.get_int("data", "channels");
  require(s.channels > 0, "data", "channels", c.get("data", "channels"), "positive");
  s.length_samples = c.get_int("data", "record_len");
  require(s.length_samples > 0, "data", "record_len", c.get("data", "record_len"), "positive");
  s.sampling_rate_hz = c.get_double("data", "sampling_rate");
  require(s.sampling_rate_hz > 0.0, "data", "sampling_rate", c.get("data", "sampling_rate"),
          "positive");
  s.task = data::synthetic_task_from_string(c.get("data", "task"));
  s.seed = c.get_uint("data", "seed");
  return s;
}

eval::TaskSpec task_spec(const RunConfig& c) {
  eval::TaskSpec t;
  t.kind = eval::task_kind_from_string(c.get("eval", "task_kind"));
  t.num_targets = c.get_int("eval", "num_targets");
  require(t.num_targets > 0, "eval", "num_targets", c.get("eval", "num_targets"), "positive");
  t.train_manifest = c.get("eval", "train_manifest");
  t.val_manifest = c.get("eval", "val_manifest");
  t.test_manifest = c.get("eval", "test_manifest");
  return t;
}

eval::EvalConfig eval_config(const RunConfig& c) {
  eval::EvalConfig e;
  e.window_len = c.get_int("eval", "window_len");
  require(e.window_len > 0, "eval", "window_len", c.get("eval", "window_len"), "positive");
  e.stride = c.get_int("eval", "stride");
  require(e.stride >= 0, "eval", "stride", c.get("eval", "stride"), "non-negative");
  e.batch_size = c.get_int("eval", "batch_size");
  require(e.batch_size > 0, "eval", "batch_size", c.get("eval", "batch_size"), "positive");
  e.epochs = c.get_int("eval", "epochs");
  require(e.epochs >= 0, "eval", "epochs", c.get("eval", "epochs"), "non-negative");
  e.learning_rate = c.get_double("eval", "learning_rate");
  require(e.learning_rate > 0.0, "eval", "learning_rate", c.get("eval", "learning_rate"),
          "positive");
  e.backbone_lr = c.get_double("eval", "backbone_lr");
  require(e.backbone_lr > 0.0, "eval", "backbone_lr", c.get("eval", "backbone_lr"), "positive");
  e.stem_lr = c.get_double("eval", "stem_lr");
  require(e.stem_lr > 0.0, "eval", "stem_lr", c.get("eval", "stem_lr"), "positive");
  e.weight_decay = c.get_double("eval", "weight_decay");
  require(e.weight_decay >= 0.0, "eval", "weight_decay", c.get("eval", "weight_decay"),
          "non-negative");
  e.attn_heads = c.get_int("eval", "attn_heads");
  require(e.attn_heads > 0, "eval", "attn_heads", c.get("eval", "attn_heads"), "positive");
  e.seed = c.get_uint("eval", "seed");
  return e;
}

std::vector<double> eval_fractions(const RunConfig& c) {
  std::vector<double> f = c.get_doubles("eval", "fractions");
  require(!f.empty(), "eval", "fractions", c.get("eval", "fractions"), "a non-empty list");
  for (double v : f)
    require(v > 0.0 && v <= 1.0, "eval", "fractions", c.get("eval", "fractions"),
            "entries in (0, 1]");
  std::sort(f.begin(), f.end());
  f.erase(std::unique(f.begin(), f.end()), f.end());
  return f;
}

DataOptions data_options(const RunConfig& c) {
  DataOptions d;
  d.manifest = c.get("data", "manifest");
  d.window_len = c.get_int("data", "window_len");
  require(d.window_len > 0, "data", "window_len", c.get("data", "window_len"), "positive");
  d.stride = c.get_int("data", "stride");
  require(d.stride >= 0, "data", "stride", c.get("data", "stride"), "non-negative");
  d.num_folds = static_cast<int>(c.get_int("data", "num_folds"));
  require(d.num_folds >= 2, "data", "num_folds", c.get("data", "num_folds"), "at least 2");
  d.val_fold = static_cast<int>(c.get_int("data", "val_fold"));
  require(d.val_fold >= 0 && d.val_fold < d.num_folds, "data", "val_fold",
          c.get("data", "val_fold"), "in [0, num_folds)");
  d.fold_seed = c.get_uint("data", "fold_seed");
  return d;
}

AnalysisOptions analysis_options(const RunConfig& c) {
  AnalysisOptions a;
  a.sigma = c.get_double("analysis", "sigma");
  require(a.sigma > 0.0, "analysis", "sigma", c.get("analysis", "sigma"), "positive");
  a.median_scale = c.get_bool("analysis", "median_scale");
  a.stage = analysis::stage_from_string(c.get("analysis", "stage"));
  a.probe_windows = c.get_int("analysis", "probe_windows");
  require(a.probe_windows > 0, "analysis", "probe_windows", c.get("analysis", "probe_windows"),
          "positive");
  a.token_subsample = c.get_int("analysis", "token_subsample");
  require(a.token_subsample >= 0, "analysis", "token_subsample",
          c.get("analysis", "token_subsample"), "non-negative");
  a.batch_size = c.get_int("analysis", "batch_size");
  require(a.batch_size > 0, "analysis", "batch_size", c.get("analysis", "batch_size"),
          "positive");
  a.resamples = c.get_int("analysis", "resamples");
  require(a.resamples >= 1, "analysis", "resamples", c.get("analysis", "resamples"),
          "at least 1");
  a.confidence = c.get_double("analysis", "confidence");
  require(a.confidence > 0.0 && a.confidence < 1.0, "analysis", "confidence",
          c.get("analysis", "confidence"), "in (0, 1)");
  a.seed = c.get_uint("analysis", "seed");
  a.with_floor = c.get_bool("analysis", "with_floor");
  const std::string w = c.get("analysis", "weighting");
  if (w == "r2")
    a.weighting = analysis::AlphaWeighting::kR2;
  else if (w == "r2_squared")
    a.weighting = analysis::AlphaWeighting::kR2Squared;
  else
    bad_value("analysis", "weighting", w, "'r2' or 'r2_squared'");
  return a;
}

}  // namespace sslts::config
