#include "sslts/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sslts/common.hpp"

namespace sslts::eval {

namespace {

void check_matrix(const Tensor<float>& a, const Tensor<float>& b, const char* what) {
  if (a.ndim() != 2 || !a.same_shape(b))
    throw DataError(std::string(what) + ": scores " + a.shape_str() + " and labels " +
                    b.shape_str() + " must be matching [N, T] matrices");
}

double finish_macro(TargetScores& out, const char* what) {
  double sum = 0.0;
  int64_t n = 0;
  for (double v : out.per_target)
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  if (n == 0) throw DataError(std::string(what) + ": every target was excluded");
  return sum / static_cast<double>(n);
}

}  // namespace

TargetScores macro_auroc(const Tensor<float>& scores, const Tensor<float>& labels) {
  check_matrix(scores, labels, "macro_auroc");
  const int64_t N = scores.dim(0), T = scores.dim(1);

  TargetScores out;
  out.per_target.assign(static_cast<size_t>(T), std::numeric_limits<double>::quiet_NaN());

  std::vector<int64_t> order(static_cast<size_t>(N));
  for (int64_t t = 0; t < T; ++t) {
    int64_t pos = 0;
    for (int64_t i = 0; i < N; ++i) {
      const float y = labels[i * T + t];
      if (y != 0.0f && y != 1.0f)
        throw DataError("macro_auroc: label " + std::to_string(y) + " at sample " +
                        std::to_string(i) + ", target " + std::to_string(t) +
                        " is not binary");
      pos += y == 1.0f;
    }
    if (pos == 0 || pos == N) {
      out.excluded.push_back(t);
      continue;
    }

    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      return scores[a * T + t] < scores[b * T + t];
    });

    // Mann-Whitney with average ranks over tied runs: ties contribute 0.5.
    double pos_rank_sum = 0.0;
    int64_t i = 0;
    while (i < N) {
      int64_t j = i;
      while (j < N && scores[order[j] * T + t] == scores[order[i] * T + t]) ++j;
      const double rank = 0.5 * static_cast<double>(i + j + 1);  // ranks are 1-based
      for (int64_t k = i; k < j; ++k)
        if (labels[order[k] * T + t] == 1.0f) pos_rank_sum += rank;
      i = j;
    }
    const double P = static_cast<double>(pos);
    out.per_target[static_cast<size_t>(t)] =
        (pos_rank_sum - P * (P + 1.0) / 2.0) / (P * static_cast<double>(N - pos));
  }

  out.macro = finish_macro(out, "macro_auroc");
  return out;
}

TargetScores standardized_mae(const Tensor<float>& preds, const Tensor<float>& targets,
                              const std::vector<double>& train_mean,
                              const std::vector<double>& train_std) {
  check_matrix(preds, targets, "standardized_mae");
  const int64_t N = preds.dim(0), T = preds.dim(1);
  if (static_cast<int64_t>(train_mean.size()) != T || static_cast<int64_t>(train_std.size()) != T)
    throw DataError("standardized_mae: statistics cover " + std::to_string(train_mean.size()) +
                    " targets, data has " + std::to_string(T));

  TargetScores out;
  out.per_target.assign(static_cast<size_t>(T), std::numeric_limits<double>::quiet_NaN());
  for (int64_t t = 0; t < T; ++t) {
    if (!(train_std[static_cast<size_t>(t)] > 0.0)) {
      out.excluded.push_back(t);
      continue;
    }
    double acc = 0.0;
    for (int64_t i = 0; i < N; ++i) {
      const double z = (static_cast<double>(targets[i * T + t]) - train_mean[static_cast<size_t>(t)]) /
                       train_std[static_cast<size_t>(t)];
      acc += std::abs(static_cast<double>(preds[i * T + t]) - z);
    }
    out.per_target[static_cast<size_t>(t)] = acc / static_cast<double>(N);
  }

  out.macro = finish_macro(out, "standardized_mae");
  return out;
}

}  // namespace sslts::eval
