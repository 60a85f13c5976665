#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sslts/common.hpp"
#include "sslts/core/kernels.hpp"
#include "sslts/core/rng.hpp"
#include "sslts/core/tensor.hpp"
#include "sslts/ssl/sinkhorn.hpp"

namespace sslts::ssl {

template <class T>
void normalize_rows_value(Tensor<T>& m, double eps = 1e-12) {
  const int64_t D = m.shape().back();
  const int64_t N = m.numel() / D;
  T* p = m.data();
  for (int64_t r = 0; r < N; ++r) {
    double ss = 0.0;
    for (int64_t d = 0; d < D; ++d) ss += static_cast<double>(p[r * D + d]) * p[r * D + d];
    const double inv = 1.0 / std::sqrt(ss + eps);
    for (int64_t d = 0; d < D; ++d) p[r * D + d] = static_cast<T>(p[r * D + d] * inv);
  }
}

// Unit-norm class centroids with balanced soft assignment targets. Updates
// are EMA pulls toward the assignment-weighted feature mean and keep every
// row unit-norm; nothing moves while update_count < freeze_steps.
template <class T>
struct PrototypeBank {
  Tensor<T> prototypes;  // [K, D], unit-norm rows
  double momentum = 0.9;
  int64_t freeze_steps = 300;
  double temperature = 0.1;

  PrototypeBank() = default;
  PrototypeBank(int64_t K, int64_t D, double momentum_, int64_t freeze_steps_, double temperature_,
                Rng& rng)
      : momentum(momentum_), freeze_steps(freeze_steps_), temperature(temperature_) {
    prototypes = Tensor<T>({K, D});
    for (int64_t i = 0; i < prototypes.numel(); ++i)
      prototypes[i] = static_cast<T>(rng.normal());
    normalize_rows_value(prototypes);
  }

  int64_t size() const { return prototypes.dim(0); }
  int64_t dim() const { return prototypes.dim(1); }

  // feats [N, D] (unit rows) -> logits [N, K] = feats . prototypes^T / tau.
  Tensor<T> logits(const Tensor<T>& feats) const {
    if (feats.ndim() != 2 || feats.dim(1) != dim())
      throw DataError("prototype logits: feature shape mismatch");
    const int64_t N = feats.dim(0), K = size(), D = dim();
    Tensor<T> out({N, K});
    kernels::matmul(feats.data(), prototypes.data(), out.data(), N, K, D, false, true, false);
    const T inv_tau = static_cast<T>(1.0 / temperature);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= inv_tau;
    return out;
  }

  // Balanced soft targets over the bank for unit-norm features.
  Tensor<T> targets(const Tensor<T>& feats, int64_t sinkhorn_iters, double sinkhorn_eps) const {
    return sinkhorn_knopp(logits(feats), sinkhorn_eps, sinkhorn_iters);
  }

  // new_k = normalize(sum_n targets[n,k] * feats[n,:]); bank row =
  // normalize(m*row + (1-m)*new_k). Rows with zero assignment mass keep their
  // direction. No-op while frozen or at momentum exactly 1.
  void update(const Tensor<T>& feats, const Tensor<T>& assignment_targets, int64_t update_count) {
    if (update_count < freeze_steps || momentum == 1.0) return;
    const int64_t N = feats.dim(0), K = size(), D = dim();
    if (assignment_targets.dim(0) != N || assignment_targets.dim(1) != K)
      throw DataError("prototype update: target shape mismatch");
    Tensor<T> fresh({K, D});
    kernels::matmul(assignment_targets.data(), feats.data(), fresh.data(), K, D, N, true, false,
                    false);
    for (int64_t k = 0; k < K; ++k) {
      double ss = 0.0;
      for (int64_t d = 0; d < D; ++d) ss += static_cast<double>(fresh[k * D + d]) * fresh[k * D + d];
      if (ss <= 0.0) {
        for (int64_t d = 0; d < D; ++d) fresh[k * D + d] = prototypes[k * D + d];
        continue;
      }
      const double inv = 1.0 / std::sqrt(ss);
      for (int64_t d = 0; d < D; ++d) fresh[k * D + d] = static_cast<T>(fresh[k * D + d] * inv);
    }
    for (int64_t i = 0; i < prototypes.numel(); ++i)
      prototypes[i] = static_cast<T>(momentum * static_cast<double>(prototypes[i]) +
                                     (1.0 - momentum) * static_cast<double>(fresh[i]));
    normalize_rows_value(prototypes);
  }

  // Entropy of the batch-mean target distribution. Individual rows are
  // sharp by design (low epsilon), so collapse shows up in the marginal: all
  // rows landing on one prototype drives this to zero, while balanced
  // assignment keeps it near ln K.
  static double mean_target_entropy(const Tensor<T>& targets) {
    const int64_t N = targets.dim(0), K = targets.dim(1);
    if (N == 0) return 0.0;
    double h = 0.0;
    for (int64_t k = 0; k < K; ++k) {
      double p = 0.0;
      for (int64_t n = 0; n < N; ++n) p += static_cast<double>(targets[n * K + k]);
      p /= static_cast<double>(N);
      if (p > 0.0) h -= p * std::log(p);
    }
    return h;
  }
};

}  // namespace sslts::ssl
