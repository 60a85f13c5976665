#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "sslts/config/config.hpp"

using namespace sslts;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("sslts_config_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("defaults match the struct defaults") {
  config::RunConfig c;
  const auto t = config::train_config(c);
  CHECK(t.learning_rate == doctest::Approx(3e-3));
  CHECK(t.weight_decay == doctest::Approx(1e-3));
  CHECK(t.batch_size == 64);
  CHECK(t.epochs == 10);
  CHECK(t.seed == 0);

  const auto s = config::stem_config(c);
  CHECK(s.out_dims == std::vector<int64_t>{512, 512, 512, 512});
  CHECK(s.strides == std::vector<int64_t>{2, 1, 1, 1});
  CHECK(s.use_batch_norm);

  const auto b = config::backbone_config(c);
  CHECK(b.family == nn::Family::kSsm);
  CHECK(b.depth == 4);  // normalize() resolves the family default
  CHECK(b.model_dim == 512);
  CHECK_FALSE(b.causal);

  const auto o = config::objective_config(c);
  CHECK(o.kind == ssl::ObjectiveKind::kData2vec);
  CHECK(o.span.midpoint_prob == doctest::Approx(0.065));
  CHECK(o.span.span_len == 10);
  CHECK(o.cpc_num_steps == 14);
  CHECK(o.prototype_sizes == std::vector<int64_t>{128, 256});
  CHECK(o.sinkhorn_iters == 3);
  CHECK(o.sinkhorn_epsilon == doctest::Approx(0.05));

  const auto sy = config::synthetic_spec(c);
  CHECK(sy.num_records == 256);
  CHECK(sy.channels == 12);
  CHECK(sy.task == data::SyntheticTask::kNone);

  const auto e = config::eval_config(c);
  CHECK(e.epochs == 100);
  CHECK(e.attn_heads == 16);

  const auto a = config::analysis_options(c);
  CHECK(a.sigma == doctest::Approx(1.0));
  CHECK(a.stage == analysis::Stage::kLate);
  CHECK(a.resamples == 1000);
  CHECK(a.with_floor);
}

TEST_CASE("overrides, comments, and lists parse") {
  const auto c = config::RunConfig::parse(
      "# experiment\n"
      "[train]\n"
      "learning_rate = 1e-4\n"
      "epochs = 5   # short run\n"
      "\n"
      "[encoder]\n"
      "family = transformer\n"
      "model_dim = 32\n"
      "num_heads = 4\n"
      "stem_dims = 8, 8, 8, 32\n"
      "causal = true\n");
  CHECK(config::train_config(c).learning_rate == doctest::Approx(1e-4));
  CHECK(config::train_config(c).epochs == 5);
  CHECK(config::train_config(c).batch_size == 64);  // untouched default
  const auto b = config::backbone_config(c);
  CHECK(b.family == nn::Family::kTransformer);
  CHECK(b.depth == 6);
  CHECK(b.causal);
  CHECK(config::stem_config(c).out_dims == std::vector<int64_t>{8, 8, 8, 32});
  CHECK_FALSE(c.is_default("train", "epochs"));
  CHECK(c.is_default("train", "batch_size"));
}

TEST_CASE("unknown keys and sections are rejected by name") {
  CHECK_THROWS_WITH_AS(config::RunConfig::parse("[train]\nleraning_rate = 1e-3\n"),
                       doctest::Contains("leraning_rate"), ConfigError);
  CHECK_THROWS_WITH_AS(config::RunConfig::parse("[train]\nleraning_rate = 1e-3\n"),
                       doctest::Contains("train.leraning_rate"), ConfigError);
  CHECK_THROWS_WITH_AS(config::RunConfig::parse("[optimizer]\nlr = 1\n"),
                       doctest::Contains("[optimizer]"), ConfigError);
  CHECK_THROWS_WITH_AS(config::RunConfig::parse("epochs = 5\n"),
                       doctest::Contains("before any [section]"), ConfigError);
  CHECK_THROWS_WITH_AS(config::RunConfig::parse("[train]\nepochs\n"),
                       doctest::Contains("malformed"), ConfigError);
  // Schema errors carry file:line context.
  CHECK_THROWS_WITH_AS(config::RunConfig::parse("[train]\n\nleraning_rate = 1e-3\n"),
                       doctest::Contains("<config>:3"), ConfigError);
}

TEST_CASE("value type errors name the key and expectation") {
  CHECK_THROWS_WITH_AS(
      config::train_config(config::RunConfig::parse("[train]\nepochs = soon\n")),
      doctest::Contains("train.epochs"), ConfigError);
  CHECK_THROWS_WITH_AS(
      config::backbone_config(config::RunConfig::parse("[encoder]\ncausal = yes\n")),
      doctest::Contains("'true' or 'false'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      config::stem_config(config::RunConfig::parse("[encoder]\nstem_dims = 8, what, 8, 8\n")),
      doctest::Contains("an integer"), ConfigError);
  CHECK_THROWS_WITH_AS(config::train_config(config::RunConfig::parse("[train]\nseed = -1\n")),
                       doctest::Contains("non-negative"), ConfigError);
}

TEST_CASE("builder range validation") {
  CHECK_THROWS_AS(config::objective_config(config::RunConfig::parse("[objective]\nmask_prob = 1.5\n")),
                  ConfigError);
  CHECK_THROWS_AS(
      config::objective_config(config::RunConfig::parse("[objective]\nprototype_sizes =\n")),
      ConfigError);
  CHECK_THROWS_AS(config::eval_config(config::RunConfig::parse("[eval]\nwindow_len = 0\n")),
                  ConfigError);
  CHECK_THROWS_AS(config::data_options(config::RunConfig::parse("[data]\nval_fold = 10\n")),
                  ConfigError);
  CHECK_THROWS_WITH_AS(
      config::backbone_config(config::RunConfig::parse("[encoder]\nfamily = lstm\n")),
      doctest::Contains("unknown backbone family"), ConfigError);
  CHECK_THROWS_AS(
      config::analysis_options(config::RunConfig::parse("[analysis]\nweighting = entropy\n")),
      ConfigError);
  // model_dim must split across heads; surfaced at config time.
  CHECK_THROWS_AS(config::backbone_config(config::RunConfig::parse(
                      "[encoder]\nfamily = transformer\nmodel_dim = 30\nnum_heads = 8\n")),
                  ConfigError);
}

TEST_CASE("typed section views map every overridden field") {
  const auto c = config::RunConfig::parse(
      "[objective]\n"
      "kind = hubertpp\n"
      "prototype_sizes = 64, 32\n"
      "freeze_steps = 10\n"
      "sinkhorn_epsilon = 0.1\n"
      "hubert_alpha = 0.5\n"
      "[eval]\n"
      "task_kind = regression\n"
      "num_targets = 3\n"
      "mode = linear\n"
      "fractions = 1, 0.1, 0.1, 0.05\n"
      "[analysis]\n"
      "stage = mid\n"
      "median_scale = true\n"
      "weighting = r2_squared\n"
      "[data]\n"
      "task = band_power\n"
      "records = 32\n");
  const auto o = config::objective_config(c);
  CHECK(o.kind == ssl::ObjectiveKind::kHubertPP);
  CHECK(o.prototype_sizes == std::vector<int64_t>{64, 32});
  CHECK(o.freeze_steps == 10);
  CHECK(o.sinkhorn_epsilon == doctest::Approx(0.1));
  CHECK(o.hubert_alpha == doctest::Approx(0.5));
  const auto t = config::task_spec(c);
  CHECK(t.kind == eval::TaskKind::kRegression);
  CHECK(t.num_targets == 3);
  CHECK(c.get("eval", "mode") == "linear");
  CHECK(config::eval_fractions(c) == std::vector<double>{0.05, 0.1, 1.0});
  const auto a = config::analysis_options(c);
  CHECK(a.stage == analysis::Stage::kMid);
  CHECK(a.median_scale);
  CHECK(a.weighting == analysis::AlphaWeighting::kR2Squared);
  CHECK(config::synthetic_spec(c).task == data::SyntheticTask::kBandPower);
  CHECK(config::synthetic_spec(c).num_records == 32);
}

TEST_CASE("include composes with later lines winning") {
  const auto dir = fresh_dir("include");
  fs::create_directories(dir / "shared");
  write_file(dir / "shared" / "base.cfg",
             "[train]\nepochs = 7\nbatch_size = 16\n[encoder]\nmodel_dim = 64\n");
  write_file(dir / "top.cfg",
             "include shared/base.cfg\n[train]\nepochs = 9\n");
  const auto c = config::RunConfig::load((dir / "top.cfg").string());
  CHECK(config::train_config(c).epochs == 9);       // override after include
  CHECK(config::train_config(c).batch_size == 16);  // inherited
  CHECK(c.get("encoder", "model_dim") == "64");
}

TEST_CASE("include cycles and missing files fail cleanly") {
  const auto dir = fresh_dir("cycle");
  write_file(dir / "a.cfg", "include b.cfg\n");
  write_file(dir / "b.cfg", "include a.cfg\n");
  CHECK_THROWS_WITH_AS(config::RunConfig::load((dir / "a.cfg").string()),
                       doctest::Contains("include cycle"), ConfigError);
  CHECK_THROWS_WITH_AS(config::RunConfig::load((dir / "missing.cfg").string()),
                       doctest::Contains("cannot open config file"), IoError);
  write_file(dir / "c.cfg", "include\n");
  CHECK_THROWS_AS(config::RunConfig::load((dir / "c.cfg").string()), ConfigError);
}

TEST_CASE("render is a reparsable fixed point") {
  const auto c = config::RunConfig::parse(
      "[train]\nlearning_rate = 2.5e-4\nseed = 41\n[objective]\nkind = cpc\ncpc_num_steps = 6\n");
  const std::string echo = c.render();
  CHECK(echo.find("[train]\n") != std::string::npos);
  CHECK(echo.find("learning_rate = 2.5e-4\n") != std::string::npos);
  CHECK(echo.find("kind = cpc\n") != std::string::npos);
  // Defaults appear too: the echo is the fully resolved configuration.
  CHECK(echo.find("batch_size = 64\n") != std::string::npos);
  const auto back = config::RunConfig::parse(echo);
  CHECK(back.render() == echo);
  CHECK(config::train_config(back).seed == 41);
  CHECK(config::objective_config(back).cpc_num_steps == 6);
}
