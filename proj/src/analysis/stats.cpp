#include "sslts/analysis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "sslts/core/rng.hpp"
#include "sslts/eval/metrics.hpp"

namespace sslts::analysis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<int64_t>(a.size());
  double ma = 0.0, mb = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    ma += a[static_cast<size_t>(i)];
    mb += b[static_cast<size_t>(i)];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double da = a[static_cast<size_t>(i)] - ma, db = b[static_cast<size_t>(i)] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) throw NumericError("constant series has no rank correlation");
  return sab / std::sqrt(saa * sbb);
}

// Continued fraction for the regularized incomplete beta (Lentz).
double betacf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const auto fm = static_cast<double>(m);
    double aa = fm * (b - fm) * x / ((qam + 2.0 * fm) * (a + 2.0 * fm));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + fm) * (qab + fm) * x / ((a + 2.0 * fm) * (qap + 2.0 * fm));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 3e-16) break;
  }
  return h;
}

double ibeta_reg(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// Two-sided p of Student's t with nu degrees of freedom.
double t_two_sided(double t, double nu) {
  return ibeta_reg(0.5 * nu, 0.5, nu / (nu + t * t));
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& v) {
  const auto n = static_cast<int64_t>(v.size());
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
    return v[static_cast<size_t>(a)] < v[static_cast<size_t>(b)];
  });
  std::vector<double> ranks(static_cast<size_t>(n));
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n &&
           v[static_cast<size_t>(idx[static_cast<size_t>(j + 1)])] ==
               v[static_cast<size_t>(idx[static_cast<size_t>(i)])])
      ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (int64_t k = i; k <= j; ++k) ranks[static_cast<size_t>(idx[static_cast<size_t>(k)])] = r;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw DataError("spearman got " + std::to_string(x.size()) + " vs " + std::to_string(y.size()) +
                    " values");
  const auto n = static_cast<int64_t>(x.size());
  if (n < 3) throw DataError("spearman needs at least 3 points, got " + std::to_string(n));

  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  SpearmanResult out;
  out.r = pearson(rx, ry);

  if (n <= 8) {
    // Exact one-sided permutation test, strict inequality: the observed
    // arrangement is one of the n! outcomes and never counts as exceeding
    // itself, so a perfect monotone series yields exactly 0.
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> permuted(static_cast<size_t>(n));
    int64_t total = 0, exceed = 0;
    constexpr double kSlack = 1e-12;
    do {
      for (int64_t i = 0; i < n; ++i)
        permuted[static_cast<size_t>(i)] = ry[static_cast<size_t>(perm[static_cast<size_t>(i)])];
      const double rp = pearson(rx, permuted);
      if (out.r >= 0.0 ? rp > out.r + kSlack : rp < out.r - kSlack) ++exceed;
      ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.p = static_cast<double>(exceed) / static_cast<double>(total);
  } else {
    if (std::abs(out.r) >= 1.0) {
      out.p = 0.0;
    } else {
      const auto nu = static_cast<double>(n - 2);
      const double t = out.r * std::sqrt(nu / (1.0 - out.r * out.r));
      out.p = t_two_sided(std::abs(t), nu);
    }
  }
  return out;
}

namespace {

// Higher-is-better score of one report over the given test rows; NaN when no
// target is scorable on that resample (e.g. every target single-class).
double subset_score(const eval::MetricReport& report, const std::vector<int64_t>& rows) {
  const int64_t t = report.predictions.dim(1);
  const auto n = static_cast<int64_t>(rows.size());
  Tensor<float> preds({n, t}), labels({n, t});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < t; ++j) {
      preds[i * t + j] = report.predictions[rows[static_cast<size_t>(i)] * t + j];
      labels[i * t + j] = report.labels[rows[static_cast<size_t>(i)] * t + j];
    }
  try {
    if (report.metric == "auroc") return eval::macro_auroc(preds, labels).macro;
    return -eval::standardized_mae(preds, labels, report.norm_mean, report.norm_std).macro;
  } catch (const DataError&) {
    // Every target excluded on this resample; the caller skips it.
    return kNaN;
  }
}

// Full-set score without the degenerate-resample escape hatch, so label
// problems surface with their own message.
double full_score(const eval::MetricReport& report) {
  if (report.metric == "auroc") return eval::macro_auroc(report.predictions, report.labels).macro;
  return -eval::standardized_mae(report.predictions, report.labels, report.norm_mean,
                                 report.norm_std)
              .macro;
}

double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

RankTable bootstrap_rank(const std::vector<eval::MetricReport>& reports, int64_t resamples,
                         double confidence, uint64_t seed) {
  const auto m = static_cast<int64_t>(reports.size());
  if (m == 0) throw DataError("bootstrap_rank needs at least one report");
  if (resamples < 1) throw ConfigError("bootstrap_rank needs at least one resample");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw ConfigError("confidence must lie strictly between 0 and 1");

  const auto& ref = reports[0];
  if (ref.metric != "auroc" && ref.metric != "mae")
    throw DataError("unknown metric in report: " + ref.metric);
  const int64_t n = ref.labels.dim(0), t = ref.labels.dim(1);
  if (n < 1) throw DataError("bootstrap_rank needs a non-empty test set");
  for (int64_t i = 1; i < m; ++i) {
    const auto& r = reports[static_cast<size_t>(i)];
    if (r.metric != ref.metric)
      throw DataError("misaligned test sets: report " + std::to_string(i) + " uses metric " +
                      r.metric + ", report 0 uses " + ref.metric);
    if (r.labels.shape() != ref.labels.shape() || r.predictions.shape() != ref.predictions.shape() ||
        std::memcmp(r.labels.data(), ref.labels.data(), sizeof(float) * static_cast<size_t>(n * t)) != 0 ||
        r.norm_mean != ref.norm_mean || r.norm_std != ref.norm_std)
      throw DataError("misaligned test sets: report " + std::to_string(i) +
                      " disagrees with report 0 on labels or normalization");
  }

  std::vector<double> point(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i)
    point[static_cast<size_t>(i)] = full_score(reports[static_cast<size_t>(i)]);

  std::vector<int64_t> remaining(static_cast<size_t>(m));
  std::iota(remaining.begin(), remaining.end(), 0);
  std::sort(remaining.begin(), remaining.end(), [&](int64_t a, int64_t b) {
    const double sa = point[static_cast<size_t>(a)], sb = point[static_cast<size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });

  RankTable table;
  table.resamples = resamples;
  table.confidence = confidence;
  table.ranks.assign(static_cast<size_t>(m), 0);

  int64_t assigned = 0;
  while (!remaining.empty()) {
    const int64_t best = remaining.front();
    std::vector<int64_t> group{best};
    std::vector<int64_t> rest;
    for (size_t k = 1; k < remaining.size(); ++k) {
      const int64_t other = remaining[k];
      const uint64_t lo = static_cast<uint64_t>(std::min(best, other));
      const uint64_t hi = static_cast<uint64_t>(std::max(best, other));
      Rng rng(derive_seed(seed, {0xb007, lo, hi}));
      std::vector<double> diffs;
      diffs.reserve(static_cast<size_t>(resamples));
      std::vector<int64_t> rows(static_cast<size_t>(n));
      for (int64_t r = 0; r < resamples; ++r) {
        for (int64_t i = 0; i < n; ++i)
          rows[static_cast<size_t>(i)] = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n));
        const double sb = subset_score(reports[static_cast<size_t>(best)], rows);
        const double so = subset_score(reports[static_cast<size_t>(other)], rows);
        if (!std::isnan(sb) && !std::isnan(so)) diffs.push_back(sb - so);
      }
      if (diffs.empty())
        throw NumericError("every bootstrap resample was degenerate for models " +
                           std::to_string(best) + " and " + std::to_string(other));
      std::sort(diffs.begin(), diffs.end());
      const double qlo = 0.5 * (1.0 - confidence);
      const double ci_lo = percentile(diffs, qlo);
      const double ci_hi = percentile(diffs, 1.0 - qlo);
      if (ci_lo <= 0.0 && 0.0 <= ci_hi)
        group.push_back(other);
      else
        rest.push_back(other);
    }
    const int64_t rank = assigned + 1;
    for (int64_t idx : group) table.ranks[static_cast<size_t>(idx)] = rank;
    assigned += static_cast<int64_t>(group.size());
    table.groups.push_back(std::move(group));
    remaining = std::move(rest);
  }
  return table;
}

}  // namespace sslts::analysis
