#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <omp.h>

#include <set>

#include "doctest.h"
#include "gradcheck.hpp"
#include "sslts/nn/encoder.hpp"

using namespace sslts;
using nn::BackboneConfig;
using nn::Encoder;
using nn::Family;
using nn::StemConfig;

namespace {

Tensor<float> random_batch(int64_t B, int64_t C, int64_t T, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> x({B, C, T});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  return x;
}

BackboneConfig small_backbone(Family f, bool causal = false) {
  BackboneConfig bb;
  bb.family = f;
  bb.depth = 2;
  bb.model_dim = 16;
  bb.state_dim = 4;
  bb.num_heads = 4;
  bb.dropout = 0.1;
  bb.causal = causal;
  return bb;
}

StemConfig small_stem(int64_t d = 16) {
  StemConfig s;
  s.out_dims = {d, d, d, d};
  return s;
}

}  // namespace

TEST_CASE("default ssm encoder maps [2,12,600] to [2,300,512] tokens") {
  omp_set_num_threads(4);
  Encoder<float> enc(StemConfig{}, BackboneConfig{}, 12, 7);
  CHECK(enc.depth() == 4);
  CHECK(enc.stride_product() == 2);
  CHECK(enc.token_count(600) == 300);
  auto out = enc.encode(random_batch(2, 12, 600, 1), true);
  CHECK(out.tokens.shape() == std::vector<int64_t>{2, 300, 512});
  REQUIRE(out.per_layer.size() == 8);  // 4 stem + 4 backbone
  for (const auto& t : out.per_layer) CHECK(t.shape() == std::vector<int64_t>{2, 300, 512});
}

TEST_CASE("token count follows the stem stride product for every family") {
  for (Family f : {Family::kSsm, Family::kTransformer, Family::kNet1d}) {
    Encoder<float> enc(small_stem(), small_backbone(f), 3, 11);
    auto out = enc.encode(random_batch(2, 3, 601, 2));
    // 601 / 2 = 300 by integer division regardless of backbone.
    CHECK(out.tokens.dim(0) == 2);
    CHECK(out.tokens.dim(1) == 300);
    CHECK(out.tokens.dim(2) == 16);
  }
}

TEST_CASE("parameter counts: groups partition the total and match the scale") {
  Encoder<float> ssm(StemConfig{}, BackboneConfig{}, 12, 3);
  auto c = ssm.count_parameters();
  CHECK(c["stem"] + c["backbone"] == c["total"]);
  // Stated scale for the default state-space encoder is about 3M.
  CHECK(c["total"] > 2'250'000);
  CHECK(c["total"] < 3'750'000);

  BackboneConfig tf;
  tf.family = Family::kTransformer;
  Encoder<float> tenc(StemConfig{}, tf, 12, 3);
  auto ct = tenc.count_parameters();
  CHECK(ct["stem"] + ct["backbone"] == ct["total"]);
  // Stated scale for the default transformer encoder is about 19.2M.
  CHECK(ct["total"] > 14'400'000);
  CHECK(ct["total"] < 24'000'000);

  BackboneConfig nd;
  nd.family = Family::kNet1d;
  Encoder<float> nenc(StemConfig{}, nd, 12, 3);
  auto cn = nenc.count_parameters();
  CHECK(cn["stem"] + cn["backbone"] == cn["total"]);
  // Net1d targets roughly the 10M scale; composition is configurable.
  CHECK(cn["total"] > 7'500'000);
  CHECK(cn["total"] < 12'500'000);
}

TEST_CASE("first stem layer weight count is in_channels*out*kernel") {
  Encoder<float> enc(StemConfig{}, BackboneConfig{}, 12, 3);
  auto params = enc.params();
  bool found = false;
  for (const auto& p : params) {
    if (p.name == "stem.layer0.weight") {
      found = true;
      CHECK(p.var->value.numel() == 12 * 512 * 3);
      CHECK(p.group == "stem");
    }
  }
  CHECK(found);
  // Names must be unique so checkpoints can key blobs by name.
  std::set<std::string> names;
  for (const auto& p : params) names.insert(p.name);
  CHECK(names.size() == params.size());
}

TEST_CASE("same seed gives bitwise-identical parameters, different seed differs") {
  Encoder<float> a(small_stem(), small_backbone(Family::kSsm), 3, 42);
  Encoder<float> b(small_stem(), small_backbone(Family::kSsm), 3, 42);
  Encoder<float> c(small_stem(), small_backbone(Family::kSsm), 3, 43);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  REQUIRE(pa.size() == pb.size());
  bool any_diff_c = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    REQUIRE(pa[i].var->value.numel() == pb[i].var->value.numel());
    for (int64_t j = 0; j < pa[i].var->value.numel(); ++j) {
      CHECK(pa[i].var->value[j] == pb[i].var->value[j]);
      if (pa[i].var->value[j] != pc[i].var->value[j]) any_diff_c = true;
    }
  }
  CHECK(any_diff_c);
}

TEST_CASE("evaluation-mode encode is deterministic; training dropout is seeded") {
  for (Family f : {Family::kSsm, Family::kTransformer, Family::kNet1d}) {
    CAPTURE(nn::family_to_string(f));
    Encoder<float> enc(small_stem(), small_backbone(f), 3, 5);
    auto x = random_batch(2, 3, 64, 9);
    auto r1 = enc.encode(x);
    auto r2 = enc.encode(x);
    for (int64_t i = 0; i < r1.tokens.numel(); ++i) CHECK(r1.tokens[i] == r2.tokens[i]);

    auto xv = ag::make_leaf(x, false);
    auto t1 = enc.forward(xv, true, 123).tokens;
    auto t2 = enc.forward(xv, true, 123).tokens;
    auto t3 = enc.forward(xv, true, 124).tokens;
    bool same_seed_equal = true, diff_seed_equal = true;
    for (int64_t i = 0; i < t1->value.numel(); ++i) {
      if (t1->value[i] != t2->value[i]) same_seed_equal = false;
      if (t1->value[i] != t3->value[i]) diff_seed_equal = false;
    }
    CHECK(same_seed_equal);
    CHECK_FALSE(diff_seed_equal);
  }
}

TEST_CASE("batch norm running statistics move in training mode only") {
  Encoder<float> enc(small_stem(), small_backbone(Family::kSsm), 3, 5);
  std::vector<nn::NamedState<float>> st;
  enc.collect_state(st);
  REQUIRE(st.size() == 8);  // mean+var per stem layer
  auto x = random_batch(2, 3, 64, 9);
  enc.encode(x);
  bool still_default = true;
  for (auto& s : st)
    for (int64_t i = 0; i < s.tensor->numel(); ++i) {
      const float expect = s.name.find("mean") != std::string::npos ? 0.0f : 1.0f;
      if ((*s.tensor)[i] != expect) still_default = false;
    }
  CHECK(still_default);
  auto xv = ag::make_leaf(x, false);
  enc.forward(xv, true, 1);
  bool moved = false;
  for (auto& s : st)
    for (int64_t i = 0; i < s.tensor->numel(); ++i) {
      const float expect = s.name.find("mean") != std::string::npos ? 0.0f : 1.0f;
      if ((*s.tensor)[i] != expect) moved = true;
    }
  CHECK(moved);
}

TEST_CASE("causal backbones ignore future samples up to the stem slack") {
  // The state-space kernel is applied in the frequency domain, so its causal
  // truncation holds to numerical precision rather than bitwise; masked
  // attention is exactly causal. Both run here in double with a bound far
  // below any real leakage.
  const int64_t T = 256, k = 160;
  for (Family f : {Family::kSsm, Family::kTransformer}) {
    CAPTURE(nn::family_to_string(f));
    Encoder<double> enc(small_stem(), small_backbone(f, true), 3, 21);
    Rng rng0(31);
    Tensor<double> x1({1, 3, T});
    for (int64_t i = 0; i < x1.numel(); ++i) x1[i] = rng0.normal();
    auto x2 = x1;
    Rng rng(77);
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t t = k; t < T; ++t) x2.at({0, c, t}) = rng.normal();
    auto y1 = enc.encode(x1).tokens;
    auto y2 = enc.encode(x2).tokens;
    const int64_t boundary = k / 2 - 1;  // strict token bound for stride 2
    double prefix_max = 0.0, suffix_max = 0.0;
    for (int64_t t = 0; t < y1.dim(1); ++t)
      for (int64_t d = 0; d < y1.dim(2); ++d) {
        const double diff = std::abs(y1.at({0, t, d}) - y2.at({0, t, d}));
        if (t < boundary)
          prefix_max = std::max(prefix_max, diff);
        else
          suffix_max = std::max(suffix_max, diff);
      }
    CHECK(prefix_max < 1e-9);
    CHECK(suffix_max > 1e-3);
  }
  // Non-causal control: early tokens must see the perturbation.
  Encoder<double> enc(small_stem(), small_backbone(Family::kSsm, false), 3, 21);
  Rng rngc(31);
  Tensor<double> x1({1, 3, T});
  for (int64_t i = 0; i < x1.numel(); ++i) x1[i] = rngc.normal();
  auto x2 = x1;
  x2.at({0, 0, T - 1}) += 1.0;
  auto y1 = enc.encode(x1).tokens;
  auto y2 = enc.encode(x2).tokens;
  bool early_changed = false;
  for (int64_t d = 0; d < y1.dim(2); ++d)
    if (y1.at({0, 0, d}) != y2.at({0, 0, d})) early_changed = true;
  CHECK(early_changed);
}

TEST_CASE("config validation rejects bad setups") {
  CHECK_THROWS_AS(nn::family_from_string("rnn"), ConfigError);
  StemConfig bad;
  bad.strides = {2, 1, 1};
  CHECK_THROWS_AS(Encoder<float>(bad, BackboneConfig{}, 3, 1), ConfigError);
  BackboneConfig nd = small_backbone(Family::kNet1d, false);
  nd.causal = true;
  CHECK_THROWS_AS(Encoder<float>(small_stem(), nd, 3, 1), ConfigError);
  BackboneConfig tf = small_backbone(Family::kTransformer);
  tf.num_heads = 5;  // 16 % 5 != 0
  CHECK_THROWS_AS(Encoder<float>(small_stem(), tf, 3, 1), ConfigError);
  BackboneConfig mismatch = small_backbone(Family::kSsm);
  mismatch.model_dim = 32;  // stem still emits 16
  CHECK_THROWS_AS(Encoder<float>(small_stem(), mismatch, 3, 1), ConfigError);
  Encoder<float> enc(small_stem(), small_backbone(Family::kSsm), 3, 1);
  CHECK_THROWS_AS(enc.encode(random_batch(1, 4, 64, 1)), DataError);
}

TEST_CASE("analytic gradients match finite differences through each family") {
  omp_set_num_threads(3);
  StemConfig stem;
  stem.out_dims = {8, 8, 8, 8};
  stem.kernel_sizes = {3, 1, 1, 1};
  for (Family f : {Family::kSsm, Family::kTransformer, Family::kNet1d}) {
    CAPTURE(nn::family_to_string(f));
    BackboneConfig bb;
    bb.family = f;
    bb.depth = 1;
    bb.model_dim = 8;
    bb.state_dim = 2;
    bb.num_heads = 2;
    bb.dropout = 0.0;
    if (f == Family::kNet1d) {
      bb.net1d_widths = {8};
      bb.net1d_kernel = 3;
      bb.net1d_blocks_per_stage = 1;
    }
    Encoder<double> enc(stem, bb, 2, 51);
    auto x = ag::make_leaf(
        [&] {
          Rng rng(8);
          Tensor<double> t({2, 2, 24});
          for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
          return t;
        }(),
        false);
    std::vector<ag::Var<double>> leaves;
    for (auto& p : enc.params()) leaves.push_back(p.var);
    auto stats = testing::gradcheck(
        leaves, [&] { return ag::sum_all(enc.forward(x, false, 0).tokens); }, 1e-5, 2, 99);
    CHECK(stats.checked >= 20);
    CHECK(stats.max_rel_err < 1e-3);
  }
}
