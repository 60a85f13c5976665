#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sslts/core/rng.hpp"
#include "sslts/train/trainer.hpp"

using namespace sslts;
namespace fs = std::filesystem;

namespace {

nn::StemConfig tiny_stem(int64_t d) {
  nn::StemConfig s;
  s.out_dims = {8, 8, 8, d};
  s.kernel_sizes = {3, 3, 3, 3};
  s.strides = {2, 1, 1, 1};
  s.dilations = {1, 1, 1, 1};
  return s;
}

nn::BackboneConfig tiny_backbone(int64_t d, bool causal) {
  nn::BackboneConfig b;
  b.family = nn::Family::kSsm;
  b.depth = 2;
  b.model_dim = d;
  b.state_dim = 4;
  b.causal = causal;
  return b;
}

ssl::ObjectiveConfig tiny_config(ssl::ObjectiveKind kind) {
  ssl::ObjectiveConfig cfg;
  cfg.kind = kind;
  cfg.span.midpoint_prob = 0.3;
  cfg.span.span_len = 3;
  cfg.block.min_context_tokens = 16;
  cfg.codebook_sizes = {6, 6};
  cfg.prototype_sizes = {5, 7};
  cfg.cpc_num_steps = 4;
  cfg.freeze_steps = 2;
  return cfg;
}

std::vector<data::SignalWindow> make_windows(int64_t n, int64_t C, int64_t W, uint64_t seed) {
  Rng rng(seed);
  std::vector<data::SignalWindow> out;
  for (int64_t i = 0; i < n; ++i) {
    data::SignalWindow w;
    w.values = Tensor<float>({C, W});
    for (int64_t j = 0; j < C * W; ++j) w.values[j] = static_cast<float>(rng.normal());
    w.source_record = i;
    out.push_back(std::move(w));
  }
  return out;
}

train::TrainConfig tiny_train(int64_t batch, int64_t epochs, uint64_t seed) {
  train::TrainConfig t;
  t.batch_size = batch;
  t.epochs = epochs;
  t.seed = seed;
  return t;
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sslts_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int64_t line_count(const std::string& text) {
  return static_cast<int64_t>(std::count(text.begin(), text.end(), '\n'));
}

// Mirrors the trainer's checkpoint entry assembly so tests can load and
// re-save state through independently constructed models.
std::vector<nn::NamedState<float>> entries_of(nn::Encoder<float>& enc, ssl::Objective<float>& obj,
                                              train::Adam<float>* adam) {
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

ag::Var<float> leaf_with_grad(const std::vector<int64_t>& shape, float value, float grad) {
  Tensor<float> v(shape);
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = value;
  auto node = ag::make_leaf(v, true);
  node->ensure_grad();
  for (int64_t i = 0; i < node->grad.numel(); ++i) node->grad[i] = grad;
  node->has_grad = true;
  return node;
}

}  // namespace

TEST_CASE("adam follows the update rule and spares normalization parameters") {
  auto weight = leaf_with_grad({2}, 1.0f, 0.0f);
  auto gamma = leaf_with_grad({2}, 1.0f, 0.0f);
  auto beta = leaf_with_grad({2}, 1.0f, 0.0f);
  auto live = leaf_with_grad({2}, 2.0f, 1.0f);
  auto head = leaf_with_grad({2}, 1.0f, 1.0f);
  auto idle = leaf_with_grad({2}, 3.0f, 5.0f);
  idle->has_grad = false;

  train::AdamConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.1;
  std::vector<nn::NamedParam<float>> params = {
      {"enc.weight", "backbone", weight}, {"enc.norm.gamma", "backbone", gamma},
      {"enc.norm.beta", "backbone", beta}, {"proj.weight", "backbone", live},
      {"cls.weight", "head", head},        {"skip.weight", "backbone", idle}};
  train::Adam<float> adam(params, cfg, {{"head", 0.5}});
  adam.step();

  // Decay-only gradient: m_hat = wd * theta, v_hat = (wd * theta)^2.
  CHECK(weight->value[0] == doctest::Approx(1.0 - 0.01 * (0.1 / (0.1 + 1e-8))).epsilon(1e-6));
  // Gains and biases carry zero gradient and zero decay: untouched.
  CHECK(gamma->value[0] == 1.0f);
  CHECK(beta->value[0] == 1.0f);
  // Unit gradient: the first step moves by roughly the learning rate.
  CHECK(live->value[0] ==
        doctest::Approx(2.0 - 0.01 * ((1.0 + 0.1 * 2.0) / (1.0 + 0.1 * 2.0 + 1e-8))).epsilon(1e-5));
  // Group override swaps in the head learning rate.
  CHECK(head->value[0] ==
        doctest::Approx(1.0 - 0.5 * ((1.0 + 0.1) / (1.0 + 0.1 + 1e-8))).epsilon(1e-5));
  // No gradient this step: parameter and moments stay put.
  CHECK(idle->value[0] == 3.0f);
  CHECK(adam.step_count() == 1);

  train::AdamConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train::Adam<float>({}, bad), ConfigError);
}

TEST_CASE("gradient clipping rescales the global norm") {
  auto a = leaf_with_grad({1}, 0.0f, 3.0f);
  auto b = leaf_with_grad({1}, 0.0f, 4.0f);
  train::AdamConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.weight_decay = 0.0;
  cfg.clip_norm = 1.0;
  std::vector<nn::NamedParam<float>> params = {{"a.weight", "g", a}, {"b.weight", "g", b}};
  train::Adam<float> adam(params, cfg);
  adam.step();
  // Global norm 5 clips to 1: effective gradients 0.6 and 0.8, and a first
  // Adam step moves by lr * g/|g| regardless of magnitude.
  CHECK(a->value[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(b->value[0] == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("pretraining runs deterministically and reduces the loss") {
  const auto windows = make_windows(8, 2, 64, 5);
  const auto val = make_windows(4, 2, 64, 6);
  const auto cfg = tiny_config(ssl::ObjectiveKind::kData2vec);
  const auto tcfg = tiny_train(8, 20, 41);
  const std::string echo = "objective.kind=data2vec\ntrain.seed=41\n";

  const auto dir1 = fresh_dir("det1"), dir2 = fresh_dir("det2"), dir3 = fresh_dir("det3");
  auto r1 = train::pretrain(windows, val, tiny_stem(16), tiny_backbone(16, false), 2, cfg, tcfg,
                            dir1.string(), echo);
  auto r2 = train::pretrain(windows, val, tiny_stem(16), tiny_backbone(16, false), 2, cfg, tcfg,
                            dir2.string(), echo);
  auto tcfg3 = tcfg;
  tcfg3.seed = 43;
  auto r3 = train::pretrain(windows, val, tiny_stem(16), tiny_backbone(16, false), 2, cfg, tcfg3,
                            dir3.string(), echo);

  REQUIRE(r1.record.step_loss.size() == 20);
  CHECK(r1.record.step_loss == r2.record.step_loss);
  CHECK(r1.record.val_loss == r2.record.val_loss);
  CHECK(r1.record.step_loss != r3.record.step_loss);

  for (double v : r1.record.step_loss) CHECK(std::isfinite(v));
  CHECK(r1.record.step_loss.back() < 0.9 * r1.record.step_loss.front());

  REQUIRE(r1.record.val_loss.size() == 20);
  CHECK(r1.record.val_loss.front().first == 1);
  CHECK(r1.record.val_loss.back().first == 20);

  const std::string train_csv = slurp(dir1 / "train_loss.csv");
  const std::string val_csv = slurp(dir1 / "val_loss.csv");
  CHECK(line_count(train_csv) == 21);
  CHECK(line_count(val_csv) == 21);
  CHECK(train_csv.rfind("step,loss\n", 0) == 0);
  CHECK(val_csv.rfind("epoch,val_loss\n", 0) == 0);
  CHECK(slurp(dir1 / "config.txt") == echo);

  CHECK(r1.final_checkpoint == (dir1 / "checkpoints" / "epoch_20").string());
  const auto meta = train::read_checkpoint_meta(r1.final_checkpoint);
  CHECK(meta.objective_kind == "data2vec");
  REQUIRE(meta.provenance.size() == 1);
  CHECK(meta.provenance[0] == "pretrain objective=data2vec seed=41 epochs=20 windows=8");
  CHECK(meta.config_echo == echo);
}

TEST_CASE("validation passes leave the training trajectory untouched") {
  const auto windows = make_windows(8, 2, 64, 9);
  const auto val = make_windows(4, 2, 64, 10);
  const auto cfg = tiny_config(ssl::ObjectiveKind::kDinoSR);
  const auto tcfg = tiny_train(4, 3, 17);

  auto with_val = train::pretrain(windows, val, tiny_stem(16), tiny_backbone(16, false), 2, cfg,
                                  tcfg, fresh_dir("vp1").string(), "");
  auto without = train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, false), 2, cfg,
                                 tcfg, fresh_dir("vp2").string(), "");
  CHECK(with_val.record.step_loss == without.record.step_loss);
  CHECK(with_val.record.val_loss.size() == 3);
  CHECK(without.record.val_loss.empty());
}

TEST_CASE("objective and backbone causality are checked before any step") {
  const auto windows = make_windows(4, 2, 64, 3);
  CHECK_THROWS_AS(train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, false), 2,
                                  tiny_config(ssl::ObjectiveKind::kCpc), tiny_train(4, 1, 1),
                                  fresh_dir("causal1").string(), ""),
                  ConfigError);
  CHECK_THROWS_AS(train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, true), 2,
                                  tiny_config(ssl::ObjectiveKind::kData2vec), tiny_train(4, 1, 1),
                                  fresh_dir("causal2").string(), ""),
                  ConfigError);
}

TEST_CASE("mixed window shapes are rejected at batch assembly") {
  auto windows = make_windows(2, 2, 64, 3);
  windows[1].values = Tensor<float>({2, 32});
  CHECK_THROWS_AS(train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, false), 2,
                                  tiny_config(ssl::ObjectiveKind::kData2vec), tiny_train(2, 1, 1),
                                  fresh_dir("mixed").string(), ""),
                  DataError);
}

TEST_CASE("non-finite loss aborts with a numeric error naming the step") {
  auto windows = make_windows(4, 2, 64, 3);
  for (auto& w : windows)
    for (int64_t i = 0; i < w.values.numel(); ++i)
      w.values[i] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(
      train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, false), 2,
                      tiny_config(ssl::ObjectiveKind::kData2vec), tiny_train(4, 1, 1),
                      fresh_dir("nan").string(), ""),
      doctest::Contains("step 1"), NumericError);
}

TEST_CASE("checkpoints survive a load and re-save byte for byte") {
  const auto windows = make_windows(8, 2, 64, 21);
  const auto cfg = tiny_config(ssl::ObjectiveKind::kHubertPP);
  const auto dir = fresh_dir("roundtrip");
  auto res = train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, false), 2, cfg,
                             tiny_train(4, 1, 23), dir.string(), "a=1\n");

  nn::Encoder<float> enc(tiny_stem(16), tiny_backbone(16, false), 2, 999);
  auto obj = ssl::make_objective<float>(cfg, enc, 998);
  std::vector<nn::NamedParam<float>> params;
  enc.collect_params(params);
  obj->collect_params(params);
  train::Adam<float> adam(params, train::AdamConfig{});

  auto dests = entries_of(enc, *obj, &adam);
  const auto meta = train::load_checkpoint(res.final_checkpoint, dests);

  const auto resaved = fresh_dir("roundtrip_b");
  train::save_checkpoint(resaved.string(), dests, meta);

  for (const char* f :
       {"manifest.txt", "stem.bin", "backbone.bin", "head.bin", "objective.bin", "optimizer.bin"})
    CHECK(slurp(fs::path(res.final_checkpoint) / f) == slurp(resaved / f));
}

TEST_CASE("checkpoint errors name the offending group or tensor") {
  const auto windows = make_windows(4, 2, 64, 31);
  const auto cfg = tiny_config(ssl::ObjectiveKind::kData2vec);
  const auto dir = fresh_dir("ckpt_err");
  auto res = train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, false), 2, cfg,
                             tiny_train(4, 1, 29), dir.string(), "");
  const fs::path ckpt = res.final_checkpoint;

  nn::Encoder<float> enc(tiny_stem(16), tiny_backbone(16, false), 2, 999);
  auto obj = ssl::make_objective<float>(cfg, enc, 998);

  SUBCASE("version line guards the format") {
    std::string man = slurp(ckpt / "manifest.txt");
    man.replace(0, man.find('\n'), "sslts-checkpoint-v0");
    std::ofstream(ckpt / "manifest.txt", std::ios::binary) << man;
    auto dests = entries_of(enc, *obj, nullptr);
    CHECK_THROWS_WITH_AS(train::load_checkpoint(ckpt.string(), dests),
                         doctest::Contains("version mismatch"), DataError);
  }

  SUBCASE("truncated blob reports its group") {
    fs::resize_file(ckpt / "stem.bin", fs::file_size(ckpt / "stem.bin") - 4);
    auto dests = entries_of(enc, *obj, nullptr);
    CHECK_THROWS_WITH_AS(train::load_checkpoint(ckpt.string(), dests, {"stem"}),
                         doctest::Contains("group stem blob holds"), DataError);
  }

  SUBCASE("first shape mismatch names the tensor and both shapes") {
    nn::Encoder<float> wide(tiny_stem(24), tiny_backbone(24, false), 2, 999);
    auto wobj = ssl::make_objective<float>(cfg, wide, 998);
    auto dests = entries_of(wide, *wobj, nullptr);
    CHECK_THROWS_WITH_AS(train::load_checkpoint(ckpt.string(), dests, {"stem"}),
                         doctest::Contains("stem.layer3.weight has shape 16x8x3, expected 24x8x3"),
                         DataError);
  }

  SUBCASE("unexpected and missing tensors are named") {
    std::vector<nn::NamedParam<float>> params;
    enc.collect_params(params);
    obj->collect_params(params);
    train::Adam<float> adam(params, train::AdamConfig{});
    auto dests = entries_of(enc, *obj, &adam);
    auto trimmed = dests;
    trimmed.pop_back();
    CHECK_THROWS_WITH_AS(train::load_checkpoint(ckpt.string(), trimmed),
                         doctest::Contains(dests.back().name.c_str()), DataError);

    Tensor<float> extra({1});
    dests.push_back({"objective.phantom", "objective", &extra});
    CHECK_THROWS_WITH_AS(train::load_checkpoint(ckpt.string(), dests),
                         doctest::Contains("missing tensor objective.phantom"), DataError);
  }

  SUBCASE("group filter skips non-selected groups entirely") {
    // Destinations carry no optimizer entries; filtering to model groups
    // must ignore the optimizer tensors recorded in the manifest.
    auto dests = entries_of(enc, *obj, nullptr);
    const auto meta =
        train::load_checkpoint(ckpt.string(), dests, {"stem", "backbone", "head", "objective"});
    CHECK(meta.objective_kind == "data2vec");
  }
}

TEST_CASE("continual pretraining restores state and extends provenance") {
  const auto windows = make_windows(8, 2, 64, 51);
  const auto cfg = tiny_config(ssl::ObjectiveKind::kData2vec);
  const auto dir = fresh_dir("cont_base");
  auto base = train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, false), 2, cfg,
                              tiny_train(4, 2, 53), dir.string(), "");

  SUBCASE("zero epochs re-emit the loaded parameters unchanged") {
    const auto cdir = fresh_dir("cont_zero");
    auto cont = train::continual_pretrain(base.final_checkpoint, windows, {}, tiny_stem(16),
                                          tiny_backbone(16, false), 2, cfg, tiny_train(4, 0, 77),
                                          cdir.string(), "");
    CHECK(cont.record.step_loss.empty());
    CHECK(cont.final_checkpoint == (cdir / "checkpoints" / "epoch_0").string());

    for (const char* f : {"stem.bin", "backbone.bin", "head.bin", "objective.bin"})
      CHECK(slurp(fs::path(base.final_checkpoint) / f) == slurp(fs::path(cont.final_checkpoint) / f));

    // The optimizer starts fresh: zero step counter and zero moments.
    const std::string opt = slurp(fs::path(cont.final_checkpoint) / "optimizer.bin");
    CHECK(std::all_of(opt.begin(), opt.end(), [](char c) { return c == 0; }));

    const auto meta = train::read_checkpoint_meta(cont.final_checkpoint);
    REQUIRE(meta.provenance.size() == 2);
    CHECK(meta.provenance[0] == "pretrain objective=data2vec seed=53 epochs=2 windows=8");
    CHECK(meta.provenance[1] == "continual objective=data2vec seed=77 epochs=0 windows=8");
  }

  SUBCASE("continuing trains further and keeps losses finite") {
    const auto cdir = fresh_dir("cont_go");
    auto cont = train::continual_pretrain(base.final_checkpoint, windows, {}, tiny_stem(16),
                                          tiny_backbone(16, false), 2, cfg, tiny_train(4, 1, 77),
                                          cdir.string(), "");
    REQUIRE(cont.record.step_loss.size() == 2);
    for (double v : cont.record.step_loss) CHECK(std::isfinite(v));
    // Restored weights sit near the base run's level, far from a fresh
    // model's starting loss.
    CHECK(cont.record.step_loss.front() < 1.25 * base.record.step_loss.back() + 0.05);
  }

  SUBCASE("objective kind mismatches are rejected") {
    CHECK_THROWS_WITH_AS(
        train::continual_pretrain(base.final_checkpoint, windows, {}, tiny_stem(16),
                                  tiny_backbone(16, false), 2,
                                  tiny_config(ssl::ObjectiveKind::kJepa), tiny_train(4, 1, 77),
                                  fresh_dir("cont_kind").string(), ""),
        doctest::Contains("checkpoint objective is data2vec, config requests jepa"), ConfigError);
  }
}

TEST_CASE("every objective completes a short run with finite losses") {
  const auto windows = make_windows(4, 2, 64, 61);
  for (auto kind : {ssl::ObjectiveKind::kData2vec, ssl::ObjectiveKind::kDinoSR,
                    ssl::ObjectiveKind::kJepa, ssl::ObjectiveKind::kCpc,
                    ssl::ObjectiveKind::kHubertPP}) {
    const bool causal = kind == ssl::ObjectiveKind::kCpc;
    const auto dir = fresh_dir("all_" + ssl::objective_to_string(kind));
    auto res = train::pretrain(windows, {}, tiny_stem(16), tiny_backbone(16, causal), 2,
                               tiny_config(kind), tiny_train(4, 2, 71), dir.string(), "");
    REQUIRE(res.record.step_loss.size() == 2);
    for (double v : res.record.step_loss) CHECK(std::isfinite(v));
    CHECK(fs::exists(fs::path(res.final_checkpoint) / "manifest.txt"));
  }
}
