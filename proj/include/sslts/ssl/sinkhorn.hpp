#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sslts/common.hpp"
#include "sslts/core/tensor.hpp"

namespace sslts {

// Sinkhorn-Knopp balanced soft assignment. Input logits [N,K] are turned into
// Q = exp((logits - global_max) / epsilon), then each iteration rescales
// columns to mass N/K followed by rows to mass 1. The final row pass makes
// every row an exact distribution; column balance is approximate and improves
// with iterations. The iteration runs in double regardless of T: low epsilon
// drives exp() far below single-precision range, and zero-flushed entries
// would turn the scaling factors into inf.
template <class T>
Tensor<T> sinkhorn_knopp(const Tensor<T>& logits, double epsilon, int iterations) {
  if (logits.ndim() != 2) throw std::invalid_argument("sinkhorn_knopp: expects [N,K]");
  if (epsilon <= 0.0 || iterations < 1)
    throw std::invalid_argument("sinkhorn_knopp: epsilon and iterations must be positive");
  const int64_t N = logits.dim(0), K = logits.dim(1);
  for (int64_t i = 0; i < logits.numel(); ++i)
    if (!std::isfinite(static_cast<double>(logits[i])))
      throw NumericError("sinkhorn_knopp: non-finite logits");

  double gmax = static_cast<double>(logits[0]);
  for (int64_t i = 1; i < logits.numel(); ++i)
    gmax = std::max(gmax, static_cast<double>(logits[i]));
  std::vector<double> Q(static_cast<size_t>(logits.numel()));
  for (int64_t i = 0; i < logits.numel(); ++i)
    Q[static_cast<size_t>(i)] = std::exp((static_cast<double>(logits[i]) - gmax) / epsilon);

  const double col_mass = static_cast<double>(N) / static_cast<double>(K);
  for (int it = 0; it < iterations; ++it) {
    for (int64_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (int64_t n = 0; n < N; ++n) s += Q[static_cast<size_t>(n * K + k)];
      if (s <= 0.0) continue;
      const double f = col_mass / s;
      for (int64_t n = 0; n < N; ++n) Q[static_cast<size_t>(n * K + k)] *= f;
    }
    for (int64_t n = 0; n < N; ++n) {
      double s = 0.0;
      for (int64_t k = 0; k < K; ++k) s += Q[static_cast<size_t>(n * K + k)];
      if (s <= 0.0) continue;
      const double f = 1.0 / s;
      for (int64_t k = 0; k < K; ++k) Q[static_cast<size_t>(n * K + k)] *= f;
    }
  }
  Tensor<T> out(logits.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(Q[static_cast<size_t>(i)]);
  return out;
}

}  // namespace sslts
