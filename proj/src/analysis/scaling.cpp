#include "sslts/analysis/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sslts::analysis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinearSolve {
  double c = 0.0;
  double l0 = 0.0;
  double sse = kInf;
};

// Least-squares (C, L0) for fixed alpha; L0 is projected to 0 when the
// unconstrained optimum is negative (and always for the pure model). A
// non-positive C marks the alpha as unusable.
LinearSolve solve_given_alpha(const std::vector<double>& n, const std::vector<double>& y,
                              double alpha, bool with_floor) {
  const auto m = static_cast<int64_t>(n.size());
  std::vector<double> phi(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) phi[static_cast<size_t>(i)] = std::pow(n[static_cast<size_t>(i)], -alpha);

  double spp = 0.0, sp = 0.0, spy = 0.0, sy = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    const double p = phi[static_cast<size_t>(i)], v = y[static_cast<size_t>(i)];
    spp += p * p;
    sp += p;
    spy += p * v;
    sy += v;
  }

  LinearSolve out;
  bool solved = false;
  if (with_floor) {
    const double det = spp * static_cast<double>(m) - sp * sp;
    if (std::abs(det) > 1e-30) {
      const double c = (spy * static_cast<double>(m) - sp * sy) / det;
      const double l0 = (spp * sy - sp * spy) / det;
      if (l0 >= 0.0) {
        out.c = c;
        out.l0 = l0;
        solved = true;
      }
    }
  }
  if (!solved) {
    if (spp <= 0.0) return out;
    out.c = spy / spp;
    out.l0 = 0.0;
  }
  if (!(out.c > 0.0) || !std::isfinite(out.c) || !std::isfinite(out.l0)) {
    out.sse = kInf;
    return out;
  }

  double sse = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    const double r = y[static_cast<size_t>(i)] - (out.c * phi[static_cast<size_t>(i)] + out.l0);
    sse += r * r;
  }
  out.sse = std::isfinite(sse) ? sse : kInf;
  return out;
}

// Golden-section minimum of sse(alpha) on [lo, hi].
double golden_min(const std::vector<double>& n, const std::vector<double>& y, bool with_floor,
                  double lo, double hi) {
  constexpr double kPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kPhi * (b - a), x2 = a + kPhi * (b - a);
  double f1 = solve_given_alpha(n, y, x1, with_floor).sse;
  double f2 = solve_given_alpha(n, y, x2, with_floor).sse;
  for (int iter = 0; iter < 200 && (b - a) > 1e-13 * std::max(1.0, b); ++iter) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kPhi * (b - a);
      f1 = solve_given_alpha(n, y, x1, with_floor).sse;
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kPhi * (b - a);
      f2 = solve_given_alpha(n, y, x2, with_floor).sse;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

FitResult fit_power_law(const std::vector<double>& n, const std::vector<double>& y,
                        bool with_floor) {
  const auto m = static_cast<int64_t>(n.size());
  if (n.size() != y.size())
    throw DataError("fit_power_law got " + std::to_string(n.size()) + " sizes for " +
                    std::to_string(y.size()) + " values");
  const int64_t need = with_floor ? 4 : 3;
  if (m < need)
    throw DataError("fit_power_law needs at least " + std::to_string(need) + " points, got " +
                    std::to_string(m));
  for (int64_t i = 0; i < m; ++i) {
    if (!(n[static_cast<size_t>(i)] > 0.0))
      throw DataError("corpus sizes must be positive");
    if (i > 0 && !(n[static_cast<size_t>(i)] > n[static_cast<size_t>(i - 1)]))
      throw DataError("corpus sizes must be strictly increasing");
    if (!(y[static_cast<size_t>(i)] > 0.0))
      throw DataError("fitted values must be positive");
  }

  FitResult fit;
  fit.model = with_floor ? FitModel::kPowerPlusFloor : FitModel::kPurePower;

  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(m);
  double sstot = 0.0;
  for (double v : y) sstot += (v - ybar) * (v - ybar);

  if (sstot == 0.0) {
    // Exactly constant series: no decay to estimate.
    fit.c = ybar;
    fit.alpha = 0.0;
    fit.l0 = 0.0;
    fit.r_squared = 1.0;
    fit.degenerate = true;
    return fit;
  }

  constexpr double kAlphaLo = 1e-8, kAlphaHi = 5.0;
  const double starts[] = {0.01, 0.05, 0.1, 0.3, 0.7};
  double best_alpha = 0.0, best_sse = kInf;
  for (double a0 : starts) {
    const double lo = std::max(kAlphaLo, a0 / 5.0);
    const double hi = std::min(kAlphaHi, a0 * 5.0);
    const double a = golden_min(n, y, with_floor, lo, hi);
    const double sse = solve_given_alpha(n, y, a, with_floor).sse;
    if (sse < best_sse) {
      best_sse = sse;
      best_alpha = a;
    }
  }

  if (!std::isfinite(best_sse)) {
    // No start produced a usable decay; report the flat best effort.
    fit.c = ybar;
    fit.alpha = 0.0;
    fit.l0 = 0.0;
    fit.r_squared = 0.0;
    fit.converged = false;
    return fit;
  }

  const auto sol = solve_given_alpha(n, y, best_alpha, with_floor);
  fit.c = sol.c;
  fit.alpha = best_alpha;
  fit.l0 = sol.l0;
  fit.r_squared = 1.0 - sol.sse / sstot;
  return fit;
}

double weighted_alpha(const std::vector<FitResult>& fits, AlphaWeighting weighting) {
  if (fits.empty()) throw DataError("weighted_alpha needs at least one fit");
  double num = 0.0, den = 0.0;
  for (const auto& f : fits) {
    const double r2 = std::max(f.r_squared, 0.0);
    const double w = weighting == AlphaWeighting::kR2 ? r2 : r2 * r2;
    num += w * f.alpha;
    den += w;
  }
  if (den <= 0.0) throw NumericError("weighted_alpha: every fit carries zero weight");
  return num / den;
}

}  // namespace sslts::analysis
