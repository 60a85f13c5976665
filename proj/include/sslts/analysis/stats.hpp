#pragma once

#include <cstdint>
#include <vector>

#include "sslts/common.hpp"
#include "sslts/eval/adapt.hpp"

namespace sslts::analysis {

struct SpearmanResult {
  double r = 0.0;
  double p = 1.0;
};

// Average ranks of v, ties sharing the mean of their positions (1-based).
std::vector<double> average_ranks(const std::vector<double>& v);

// Spearman rank correlation with average ranks on ties. The p-value is an
// exact permutation test for n <= 8: the fraction of rank permutations whose
// correlation strictly exceeds the observed value in the direction of its
// sign (one-sided; the identity permutation is one of the n! outcomes but is
// never counted as exceeding, so a perfect monotone series reports exactly
// 0). Larger n uses the two-sided Student-t approximation. Either series
// being constant is an error.
SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y);

struct RankTable {
  std::vector<int64_t> ranks;                // per model, best group = 1
  std::vector<std::vector<int64_t>> groups;  // model indices, best group first
  int64_t resamples = 0;
  double confidence = 0.0;
};

// Statistical ranking of models evaluated on one shared test set. The metric
// is recomputed from the retained per-sample predictions (AUROC higher is
// better, standardized MAE lower is better). Group formation: take the
// point-estimate-best remaining model; every remaining model whose paired
// bootstrap CI of the metric difference (resampled test indices, percentile
// interval at `confidence`) contains 0 joins its group; the next group's rank
// is 1 + the size of all better groups. Resampling is seeded per unordered
// model pair so results do not depend on grouping order. Reports must agree
// on metric, shapes, labels, and normalization statistics.
RankTable bootstrap_rank(const std::vector<eval::MetricReport>& reports, int64_t resamples = 1000,
                         double confidence = 0.95, uint64_t seed = 0);

}  // namespace sslts::analysis
