#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "sslts/analysis/cka.hpp"
#include "sslts/analysis/report.hpp"
#include "sslts/analysis/scaling.hpp"
#include "sslts/analysis/stats.hpp"
#include "sslts/core/rng.hpp"
#include "sslts/train/checkpoint.hpp"
#include "sslts/train/trainer.hpp"

using namespace sslts;
using namespace sslts::analysis;
namespace fs = std::filesystem;

namespace {

Tensor<double> random_matrix(int64_t n, int64_t d, uint64_t seed) {
  Rng rng(seed);
  Tensor<double> out({n, d});
  for (int64_t i = 0; i < n * d; ++i) out[i] = rng.normal();
  return out;
}

// Orthonormal [d, d] via Gram-Schmidt on a random matrix.
Tensor<double> random_orthogonal(int64_t d, uint64_t seed) {
  auto q = random_matrix(d, d, seed);
  for (int64_t i = 0; i < d; ++i) {
    for (int64_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int64_t k = 0; k < d; ++k) dot += q[i * d + k] * q[j * d + k];
      for (int64_t k = 0; k < d; ++k) q[i * d + k] -= dot * q[j * d + k];
    }
    double norm = 0.0;
    for (int64_t k = 0; k < d; ++k) norm += q[i * d + k] * q[i * d + k];
    norm = std::sqrt(norm);
    for (int64_t k = 0; k < d; ++k) q[i * d + k] /= norm;
  }
  return q;
}

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

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sslts_analysis_" + name);
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

// CPC run long enough (>= 200 steps) for representations to move away from
// initialization; shared across the encoder-level CKA cases.
struct TrainedCpc {
  nn::StemConfig stem = tiny_stem(16);
  nn::BackboneConfig bb = tiny_backbone(16, true);
  std::vector<data::SignalWindow> windows = make_windows(96, 1, 128, 7);
  Tensor<float> probe;
  std::string checkpoint;

  TrainedCpc() {
    ssl::ObjectiveConfig cfg;
    cfg.kind = ssl::ObjectiveKind::kCpc;
    cfg.cpc_num_steps = 4;
    train::TrainConfig tcfg;
    tcfg.batch_size = 8;
    tcfg.epochs = 17;  // 12 steps per epoch
    tcfg.seed = 11;
    auto run = train::pretrain(windows, {}, stem, bb, 1, cfg, tcfg, fresh_dir("cpc").string(), "cfg");
    checkpoint = run.final_checkpoint;

    std::vector<int64_t> order(48);
    std::iota(order.begin(), order.end(), 0);
    probe = train::stack_windows(windows, order, 0, 48);
  }

  // Fresh encoder on the training run's initialization seed; loads the
  // checkpoint weights when trained is set.
  nn::Encoder<float> encoder(bool trained) const {
    nn::Encoder<float> enc(stem, bb, 1, derive_seed(11, {0xe0c}));
    if (trained) {
      std::vector<nn::NamedState<float>> dests;
      std::vector<nn::NamedParam<float>> params;
      enc.collect_params(params);
      for (auto& p : params) dests.push_back({p.name, p.group, &p.var->value});
      enc.collect_state(dests);
      train::load_checkpoint(checkpoint, dests, {"stem", "backbone"});
    }
    return enc;
  }
};

const TrainedCpc& trained_cpc() {
  static TrainedCpc fixture;
  return fixture;
}

}  // namespace

TEST_CASE("rbf similarity: self, symmetry, bounds") {
  const auto x = random_matrix(60, 8, 1);
  const auto y = random_matrix(60, 5, 2);
  CHECK(rbf_cka(x, x, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  const double v = rbf_cka(x, y, 1.0);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
  CHECK(rbf_cka(x, y, 1.0) == rbf_cka(y, x, 1.0));

  CHECK_THROWS_AS(rbf_cka(x, random_matrix(59, 5, 3), 1.0), DataError);
  CHECK_THROWS_AS(rbf_cka(random_matrix(2, 4, 4), random_matrix(2, 4, 5), 1.0), DataError);
  CHECK_THROWS_AS(rbf_cka(x, y, 0.0), ConfigError);
  CHECK_THROWS_AS(rbf_cka(x, y, -1.0), ConfigError);
}

TEST_CASE("rbf similarity: distance-preserving invariances") {
  const int64_t n = 40, d = 6;
  const auto x = random_matrix(n, d, 10);

  // Feature columns permuted: pairwise distances unchanged.
  Tensor<double> colperm({n, d});
  const int64_t perm[] = {3, 0, 5, 1, 4, 2};
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) colperm[i * d + j] = x[i * d + perm[j]];
  CHECK(rbf_cka(x, colperm, 1.0) == doctest::Approx(1.0).epsilon(1e-9));

  // Same row permutation applied to both arguments.
  const auto y = random_matrix(n, 4, 11);
  std::vector<int64_t> rows(static_cast<size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(12);
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(rows[static_cast<size_t>(i)],
              rows[static_cast<size_t>(rng.next_u64() % static_cast<uint64_t>(i + 1))]);
  Tensor<double> xp({n, d}), yp({n, 4});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) xp[i * d + j] = x[rows[static_cast<size_t>(i)] * d + j];
    for (int64_t j = 0; j < 4; ++j) yp[i * 4 + j] = y[rows[static_cast<size_t>(i)] * 4 + j];
  }
  CHECK(rbf_cka(xp, yp, 1.0) == doctest::Approx(rbf_cka(x, y, 1.0)).epsilon(1e-9));

  // Orthogonal transform plus translation of one argument.
  const auto q = random_orthogonal(d, 13);
  Tensor<double> iso({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < d; ++k) s += x[i * d + k] * q[k * d + j];
      iso[i * d + j] = s + 0.37 * static_cast<double>(j);
    }
  CHECK(rbf_cka(iso, y, 1.0) == doctest::Approx(rbf_cka(x, y, 1.0)).epsilon(1e-9));
}

TEST_CASE("rbf similarity: independent representations score low") {
  const auto x = random_matrix(500, 32, 20);
  const auto y = random_matrix(500, 32, 21);
  // The biased alignment estimator carries a positive finite-sample bias
  // that grows as the kernel sharpens; at bandwidth 2 (smooth regime for
  // unit-variance features) it stays well under the independence bound.
  CHECK(rbf_cka(x, y, 2.0) < 0.1);
  CHECK(linear_cka(x, y) < 0.1);
  CHECK(linear_cka(x, x) == doctest::Approx(1.0).epsilon(1e-12));

  // Isotropic rescaling is a no-op for the linear variant.
  Tensor<double> scaled({500, 32});
  for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] = 2.25 * x[i];
  CHECK(linear_cka(scaled, y) == doctest::Approx(linear_cka(x, y)).epsilon(1e-9));
}

TEST_CASE("rbf similarity: degenerate rows and median scaling") {
  Tensor<double> flat({5, 3});
  for (int64_t i = 0; i < 15; ++i) flat[i] = 2.5;
  CHECK(rbf_cka(flat, flat, 1.0) == 1.0);
  CHECK_THROWS_AS(rbf_cka(flat, random_matrix(5, 3, 30), 1.0), NumericError);
  CHECK_THROWS_AS(rbf_cka(random_matrix(5, 3, 30), flat, 1.0), NumericError);

  // Median scaling makes the kernel scale-free: a rescaled copy aligns fully.
  const auto x = random_matrix(30, 4, 31);
  Tensor<double> scaled({30, 4});
  for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] = 3.7 * x[i];
  CHECK(rbf_cka(x, scaled, 1.0, true) == doctest::Approx(1.0).epsilon(1e-9));
  const double plain = rbf_cka(x, random_matrix(30, 6, 32), 1.0, true);
  CHECK(plain >= 0.0);
  CHECK(plain <= 1.0);
}

TEST_CASE("layer matrix: duplicated layer, labels, validation") {
  const auto a = random_matrix(25, 6, 40);
  const auto m = layer_cka_matrix({a, a}, 1.0);
  REQUIRE(m.size() == 2);
  REQUIRE(m.labels == std::vector<std::string>{"layer0", "layer1"});
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j) CHECK(m.at(i, j) == doctest::Approx(1.0).epsilon(1e-9));

  const auto b = random_matrix(25, 9, 41);
  const auto c = random_matrix(25, 3, 42);
  const auto m3 = layer_cka_matrix({a, b, c}, 1.0, {"s0", "s1", "b0"});
  REQUIRE(m3.labels == std::vector<std::string>{"s0", "s1", "b0"});
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(m3.at(i, i) == 1.0);
    for (int64_t j = 0; j < 3; ++j) {
      CHECK(m3.at(i, j) == m3.at(j, i));
      CHECK(m3.at(i, j) >= 0.0);
      CHECK(m3.at(i, j) <= 1.0);
    }
  }

  CHECK_THROWS_AS(layer_cka_matrix({a, b}, 1.0, {"only"}), ConfigError);
  CHECK_THROWS_AS(layer_cka_matrix({a, random_matrix(24, 6, 43)}, 1.0), DataError);
  CHECK_THROWS_AS(layer_cka_matrix({random_matrix(2, 6, 44)}, 1.0), DataError);
  CHECK_THROWS_AS(layer_cka_matrix({}, 1.0), DataError);
}

TEST_CASE("mean pooling over tokens") {
  Tensor<float> acts({2, 4, 3});
  for (int64_t i = 0; i < acts.numel(); ++i) acts[i] = static_cast<float>(i);
  const auto full = mean_pool_tokens(acts);
  REQUIRE(full.shape() == std::vector<int64_t>{2, 3});
  // Sample 0, feature 0 averages entries {0, 3, 6, 9}.
  CHECK(full[0] == doctest::Approx(4.5));
  const auto sub = mean_pool_tokens(acts, 2);  // tokens 0 and 2
  CHECK(sub[0] == doctest::Approx(0.5 * (0.0 + 6.0)));
  CHECK_THROWS_AS(mean_pool_tokens(Tensor<float>({2, 3}), 0), DataError);
}

TEST_CASE("layer matrix of a trained encoder separates stem from backbone") {
  auto enc = trained_cpc().encoder(true);
  std::vector<std::string> labels;
  auto acts = pooled_layer_activations(enc, trained_cpc().probe, labels);
  REQUIRE(acts.size() == 6);  // 4 stem + 2 backbone layers
  REQUIRE(labels.front() == "stem.layer0");
  REQUIRE(labels.back() == "backbone.layer1");

  const auto m = layer_cka_matrix(acts, 1.0, labels);
  double within = 0.0, cross = 0.0;
  int64_t nw = 0, nc = 0;
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = i + 1; j < 6; ++j) {
      if ((i < 4) == (j < 4)) {
        within += m.at(i, j);
        ++nw;
      } else {
        cross += m.at(i, j);
        ++nc;
      }
    }
  CHECK(within / static_cast<double>(nw) > cross / static_cast<double>(nc));
}

TEST_CASE("inter-model similarity at a stage") {
  auto trained_a = trained_cpc().encoder(true);
  auto trained_b = trained_cpc().encoder(true);
  auto fresh = trained_cpc().encoder(false);
  const auto& probe = trained_cpc().probe;

  const auto same =
      inter_model_cka({&trained_a, &trained_b}, {"a", "b"}, Stage::kLate, probe, 1.0);
  REQUIRE(same.size() == 2);
  CHECK(same.at(0, 1) == doctest::Approx(1.0).epsilon(1e-9));

  const auto diff =
      inter_model_cka({&trained_a, &fresh}, {"trained", "init"}, Stage::kLate, probe, 1.0);
  CHECK(diff.at(0, 1) < 0.999999);
  CHECK(diff.at(0, 1) >= 0.0);

  // Stages address different capture points; early comes from the stem.
  const auto early = stage_activations(trained_a, probe, Stage::kEarly);
  CHECK(early.dim(1) == 8);
  const auto mid = stage_activations(trained_a, probe, Stage::kMid);
  CHECK(mid.dim(1) == 16);

  CHECK_THROWS_AS(inter_model_cka({&trained_a}, {"a", "b"}, Stage::kLate, probe, 1.0), ConfigError);
  CHECK(stage_from_string("mid") == Stage::kMid);
  CHECK_THROWS_AS(stage_from_string("final"), ConfigError);
}

TEST_CASE("power-law fit: noiseless oracles") {
  const std::vector<double> n = {18e3, 45e3, 106e3, 753e3, 11e6};
  std::vector<double> y;
  for (double v : n) y.push_back(2.0 * std::pow(v, -0.1) + 0.05);

  const auto fit = fit_power_law(n, y, true);
  CHECK(fit.model == FitModel::kPowerPlusFloor);
  CHECK(std::abs(fit.c - 2.0) < 1e-4);
  CHECK(std::abs(fit.alpha - 0.1) < 1e-4);
  CHECK(std::abs(fit.l0 - 0.05) < 1e-4);
  CHECK(fit.r_squared >= 1.0 - 1e-10);
  CHECK(fit.converged);
  CHECK_FALSE(fit.degenerate);

  std::vector<double> pure;
  for (double v : n) pure.push_back(3.0 * std::pow(v, -0.25));
  const auto pfit = fit_power_law(n, pure, false);
  CHECK(pfit.model == FitModel::kPurePower);
  CHECK(std::abs(pfit.c - 3.0) < 1e-6);
  CHECK(std::abs(pfit.alpha - 0.25) < 1e-6);
  CHECK(pfit.l0 == 0.0);
  CHECK(pfit.r_squared >= 1.0 - 1e-10);
}

TEST_CASE("power-law fit: refitting its own curve is a fixed point") {
  const std::vector<double> n = {1e3, 4e3, 16e3, 64e3, 256e3};
  std::vector<double> noisy;
  for (size_t i = 0; i < n.size(); ++i)
    noisy.push_back(1.5 * std::pow(n[i], -0.2) * (1.0 + 0.05 * std::sin(static_cast<double>(i))) +
                    0.02);
  const auto first = fit_power_law(n, noisy, true);

  std::vector<double> regenerated;
  for (double v : n) regenerated.push_back(first.c * std::pow(v, -first.alpha) + first.l0);
  const auto second = fit_power_law(n, regenerated, true);
  CHECK(std::abs(second.c - first.c) < 1e-6);
  CHECK(std::abs(second.alpha - first.alpha) < 1e-6);
  CHECK(std::abs(second.l0 - first.l0) < 1e-6);
}

TEST_CASE("power-law fit: noise keeps the exponent in range") {
  const std::vector<double> n = {1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<double> y;
    for (double v : n) y.push_back(2.0 * std::pow(v, -0.1) * (1.0 + 0.01 * rng.normal()));
    const auto fit = fit_power_law(n, y, false);
    CHECK(std::abs(fit.alpha - 0.1) < 0.03);
  }
}

TEST_CASE("power-law fit: degenerate and invalid inputs") {
  const std::vector<double> n = {10, 100, 1000, 10000};
  const auto flat = fit_power_law(n, {0.7, 0.7, 0.7, 0.7}, true);
  CHECK(std::abs(flat.alpha) < 1e-6);
  CHECK(flat.r_squared == 1.0);
  CHECK(flat.degenerate);
  CHECK(flat.c == doctest::Approx(0.7));

  CHECK_THROWS_AS(fit_power_law({10, 100, 50, 1000}, {1, 2, 3, 4}, false), DataError);
  CHECK_THROWS_AS(fit_power_law({-1, 100, 1000}, {1, 2, 3}, false), DataError);
  CHECK_THROWS_AS(fit_power_law(n, {1, 2, -3, 4}, false), DataError);
  CHECK_THROWS_AS(fit_power_law({10, 100}, {1, 2}, false), DataError);
  CHECK_THROWS_AS(fit_power_law({10, 100, 1000}, {1, 2, 3}, true), DataError);
  CHECK_THROWS_AS(fit_power_law(n, {1, 2, 3}, false), DataError);
}

TEST_CASE("weighted alpha") {
  FitResult a;
  a.alpha = 0.1;
  a.r_squared = 1.0;
  FitResult b;
  b.alpha = 0.3;
  b.r_squared = 0.0;
  CHECK(weighted_alpha({a}, AlphaWeighting::kR2) == doctest::Approx(0.1));
  CHECK(weighted_alpha({a, b}, AlphaWeighting::kR2) == doctest::Approx(0.1));
  CHECK(weighted_alpha({a, b}, AlphaWeighting::kR2Squared) == doctest::Approx(0.1));

  FitResult c = a;
  c.alpha = 0.5;
  CHECK(weighted_alpha({a, c}, AlphaWeighting::kR2) == doctest::Approx(0.3));

  FitResult half = c;
  half.r_squared = 0.5;  // kR2 weight 0.5, kR2Squared weight 0.25
  CHECK(weighted_alpha({a, half}, AlphaWeighting::kR2) ==
        doctest::Approx((0.1 + 0.5 * 0.5) / 1.5));
  CHECK(weighted_alpha({a, half}, AlphaWeighting::kR2Squared) ==
        doctest::Approx((0.1 + 0.25 * 0.5) / 1.25));

  FitResult neg = c;
  neg.r_squared = -2.0;  // negative fit quality carries no weight
  CHECK(weighted_alpha({a, neg}, AlphaWeighting::kR2) == doctest::Approx(0.1));
  CHECK_THROWS_AS(weighted_alpha({b, neg}, AlphaWeighting::kR2), NumericError);
  CHECK_THROWS_AS(weighted_alpha({}, AlphaWeighting::kR2), DataError);
}

TEST_CASE("rank helper averages ties") {
  const auto r = average_ranks({3.0, 1.0, 4.0, 1.0, 5.0});
  CHECK(r == std::vector<double>{3.0, 1.5, 4.0, 1.5, 5.0});
}

TEST_CASE("spearman: exact small-sample test") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const auto perfect = spearman(x, {10, 20, 30, 40, 50});
  CHECK(perfect.r == doctest::Approx(1.0));
  CHECK(perfect.p == 0.0);

  const auto reversed = spearman(x, {5, 4, 3, 2, 1});
  CHECK(reversed.r == doctest::Approx(-1.0));
  CHECK(reversed.p == 0.0);

  // One adjacent swap: r = 0.9; only the identity permutation (r = 1) lies
  // strictly above, so p = 1/120.
  const auto near = spearman(x, {1, 2, 3, 5, 4});
  CHECK(near.r == doctest::Approx(0.9));
  CHECK(near.p == doctest::Approx(1.0 / 120.0).epsilon(1e-12));

  // Monotone but non-linear: rank correlation saturates.
  const auto mono = spearman(x, {1, 8, 27, 64, 125});
  CHECK(mono.r == doctest::Approx(1.0));
  CHECK(mono.p == 0.0);

  CHECK_THROWS_AS(spearman({1, 1, 1, 1}, {1, 2, 3, 4}), NumericError);
  CHECK_THROWS_AS(spearman({1, 2}, {3, 4}), DataError);
  CHECK_THROWS_AS(spearman({1, 2, 3}, {1, 2}), DataError);
}

TEST_CASE("spearman: t-approximation beyond 8 points") {
  std::vector<double> x(10), y(10);
  std::iota(x.begin(), x.end(), 1.0);

  const std::vector<double> two_swaps = {2, 1, 3, 4, 5, 6, 7, 8, 10, 9};
  auto res = spearman(x, two_swaps);
  CHECK(res.r == doctest::Approx(1.0 - 24.0 / 990.0).epsilon(1e-12));
  CHECK(res.p == doctest::Approx(1.467546187404219e-06).epsilon(1e-9));

  const std::vector<double> more = {3, 1, 2, 5, 4, 6, 8, 7, 10, 9};
  res = spearman(x, more);
  CHECK(res.r == doctest::Approx(1.0 - 72.0 / 990.0).epsilon(1e-12));
  CHECK(res.p == doctest::Approx(1.1203450639397595e-04).epsilon(1e-9));

  std::iota(y.begin(), y.end(), 5.0);
  const auto perfect = spearman(x, y);
  CHECK(perfect.r == doctest::Approx(1.0));
  CHECK(perfect.p == 0.0);
}

TEST_CASE("spearman: applying ranks first changes nothing") {
  Rng rng(55);
  for (int trial = 0; trial < 4; ++trial) {
    const int64_t n = trial < 2 ? 7 : 20;
    std::vector<double> x, y;
    for (int64_t i = 0; i < n; ++i) {
      // Coarse grid forces ties.
      x.push_back(std::floor(rng.uniform(0, 5)));
      y.push_back(std::floor(rng.uniform(0, 5)));
    }
    const bool xconst = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    const bool yconst = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (xconst || yconst) continue;
    const auto direct = spearman(x, y);
    const auto ranked = spearman(average_ranks(x), average_ranks(y));
    CHECK(direct.r == ranked.r);
    CHECK(direct.p == ranked.p);
  }
}

namespace {

eval::MetricReport classification_report(const Tensor<float>& labels, const Tensor<float>& preds) {
  eval::MetricReport r;
  r.mode = "linear";
  r.metric = "auroc";
  r.labels = labels;
  r.predictions = preds;
  return r;
}

// Balanced single-target labels plus a prediction column built by blending
// the label with seeded noise; blend 0 is pure noise, 1 is perfect.
Tensor<float> blend_preds(const Tensor<float>& labels, double blend, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> out(labels.shape());
  for (int64_t i = 0; i < labels.numel(); ++i)
    out[i] = static_cast<float>(blend * labels[i] + (1.0 - blend) * rng.uniform());
  return out;
}

Tensor<float> balanced_labels(int64_t n) {
  Tensor<float> labels({n, 1});
  for (int64_t i = 0; i < n; ++i) labels[i] = static_cast<float>(i % 2);
  return labels;
}

}  // namespace

TEST_CASE("bootstrap ranking: ties, separation, groups") {
  const auto labels = balanced_labels(500);

  const auto shared = blend_preds(labels, 0.5, 77);
  const auto tie = bootstrap_rank({classification_report(labels, shared),
                                   classification_report(labels, shared)},
                                  500, 0.95, 1);
  CHECK(tie.ranks == std::vector<int64_t>{1, 1});
  REQUIRE(tie.groups.size() == 1);
  CHECK(tie.resamples == 500);

  const auto sep = bootstrap_rank({classification_report(labels, blend_preds(labels, 0.0, 78)),
                                   classification_report(labels, labels)},
                                  1000, 0.95, 2);
  CHECK(sep.ranks == std::vector<int64_t>{2, 1});

  const auto trio = bootstrap_rank({classification_report(labels, blend_preds(labels, 0.6, 80)),
                                    classification_report(labels, blend_preds(labels, 0.6, 81)),
                                    classification_report(labels, blend_preds(labels, 0.02, 82))},
                                   1000, 0.95, 3);
  CHECK(trio.ranks[0] == 1);
  CHECK(trio.ranks[1] == 1);
  CHECK(trio.ranks[2] == 3);
  REQUIRE(trio.groups.size() == 2);
  CHECK(trio.groups[0].size() == 2);
}

TEST_CASE("bootstrap ranking: improving predictions never hurts") {
  const auto labels = balanced_labels(300);
  const auto a = blend_preds(labels, 0.3, 90);
  const auto b = blend_preds(labels, 0.45, 91);
  const auto c = blend_preds(labels, 0.6, 92);

  const auto before = bootstrap_rank({classification_report(labels, a),
                                      classification_report(labels, b),
                                      classification_report(labels, c)},
                                     400, 0.95, 4);

  Tensor<float> improved(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i)
    improved[i] = a[i] + 0.5f * (labels[i] - a[i]);
  const auto after = bootstrap_rank({classification_report(labels, improved),
                                     classification_report(labels, b),
                                     classification_report(labels, c)},
                                    400, 0.95, 4);
  CHECK(after.ranks[0] <= before.ranks[0]);
}

TEST_CASE("bootstrap ranking: regression reports") {
  const int64_t n = 200;
  Rng rng(100);
  Tensor<float> labels({n, 1});
  for (int64_t i = 0; i < n; ++i) labels[i] = static_cast<float>(rng.normal(5.0, 2.0));

  eval::MetricReport exact;
  exact.mode = "linear";
  exact.metric = "mae";
  exact.labels = labels;
  exact.norm_mean = {5.0};
  exact.norm_std = {2.0};
  exact.predictions = Tensor<float>({n, 1});
  for (int64_t i = 0; i < n; ++i)
    exact.predictions[i] = static_cast<float>((labels[i] - 5.0) / 2.0);

  eval::MetricReport off = exact;
  for (int64_t i = 0; i < n; ++i)
    off.predictions[i] = exact.predictions[i] + static_cast<float>(rng.normal(0.0, 0.8));

  const auto table = bootstrap_rank({off, exact}, 500, 0.95, 5);
  CHECK(table.ranks == std::vector<int64_t>{2, 1});
}

TEST_CASE("bootstrap ranking: misaligned reports are rejected") {
  const auto labels = balanced_labels(40);
  auto a = classification_report(labels, blend_preds(labels, 0.5, 110));

  auto flipped = labels;
  flipped[0] = 1.0f - flipped[0];
  const auto b = classification_report(flipped, blend_preds(labels, 0.5, 111));
  CHECK_THROWS_AS(bootstrap_rank({a, b}, 100, 0.95, 6), DataError);

  auto mae = a;
  mae.metric = "mae";
  CHECK_THROWS_AS(bootstrap_rank({a, mae}, 100, 0.95, 6), DataError);

  const auto wide = classification_report(balanced_labels(42), blend_preds(balanced_labels(42), 0.5, 112));
  CHECK_THROWS_AS(bootstrap_rank({a, wide}, 100, 0.95, 6), DataError);

  CHECK_THROWS_AS(bootstrap_rank({}, 100, 0.95, 6), DataError);
  CHECK_THROWS_AS(bootstrap_rank({a}, 0, 0.95, 6), ConfigError);
  CHECK_THROWS_AS(bootstrap_rank({a}, 100, 1.5, 6), ConfigError);
}

TEST_CASE("report emission: files, tick labels, determinism") {
  ReportProducts products;

  ScalingSeries series;
  series.label = "cpc val";
  series.n = {1e3, 4e3, 16e3, 64e3};
  for (double v : series.n) series.y.push_back(2.0 * std::pow(v, -0.15) + 0.03);
  series.fit = fit_power_law(series.n, series.y, true);
  products.scaling.push_back(series);

  std::vector<Tensor<double>> layers;
  std::vector<std::string> labels;
  for (int i = 0; i < 8; ++i) {
    layers.push_back(random_matrix(20, 5, 200 + static_cast<uint64_t>(i)));
    labels.push_back("block" + std::to_string(i));
  }
  products.cka.emplace_back("probe", layer_cka_matrix(layers, 1.0, labels));

  EfficiencyCurve curve;
  curve.label = "frozen";
  curve.fractions = {0.01, 0.1, 1.0};
  curve.residuals = {0.4, 0.2, 0.1};
  products.label_eff.push_back(curve);

  ScatterSeries scatter;
  scatter.label = "loss vs error";
  scatter.x_name = "val loss";
  scatter.y_name = "error";
  scatter.x = {1.0, 2.0, 3.0, 4.0, 5.0};
  scatter.y = {0.1, 0.15, 0.3, 0.45, 0.5};
  scatter.correlation = spearman(scatter.x, scatter.y);
  products.scatter.push_back(scatter);

  RankedTask ranked;
  ranked.task = "rhythm";
  ranked.models = {"a", "b"};
  ranked.table.ranks = {1, 2};
  ranked.table.groups = {{0}, {1}};
  ranked.table.resamples = 100;
  ranked.table.confidence = 0.95;
  products.ranks.push_back(ranked);

  const auto dir1 = fresh_dir("report1");
  const auto dir2 = fresh_dir("report2");
  emit_report(products, dir1.string());
  emit_report(products, dir2.string());

  const std::vector<std::string> expected = {
      "scaling_fits.csv", "scaling_cpc_val.svg",   "cka_probe.csv",
      "cka_probe.svg",    "label_efficiency.csv",  "label_efficiency.svg",
      "correlation.csv",  "correlation_loss_vs_error.svg", "ranks.csv"};
  for (const auto& name : expected) {
    CAPTURE(name);
    REQUIRE(fs::exists(dir1 / name));
    CHECK(slurp(dir1 / name) == slurp(dir2 / name));
  }

  const auto fits = slurp(dir1 / "scaling_fits.csv");
  CHECK(fits.find("series,C,alpha,L0,R2") == 0);
  CHECK(std::count(fits.begin(), fits.end(), '\n') == 2);

  const auto heatmap = slurp(dir1 / "cka_probe.svg");
  for (int i = 0; i < 8; ++i) {
    const std::string tick = "block" + std::to_string(i);
    CAPTURE(tick);
    // Row and column tick labels both carry the layer name.
    size_t count = 0;
    for (size_t pos = heatmap.find(tick); pos != std::string::npos;
         pos = heatmap.find(tick, pos + 1))
      ++count;
    CHECK(count >= 2);
  }

  const auto ranks = slurp(dir1 / "ranks.csv");
  CHECK(ranks == "task,model,rank\nrhythm,a,1\nrhythm,b,2\n");
}
