#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sslts/common.hpp"
#include "sslts/core/rng.hpp"
#include "sslts/core/tensor.hpp"

namespace sslts::ssl {

// Online quantizer: nearest-entry assignment plus an EMA pull of each used
// entry toward the mean of the features assigned to it. Unused entries are
// never touched or re-seeded; usage_counts exposes dead entries instead.
template <class T>
struct Codebook {
  Tensor<T> entries;       // [K, D]
  Tensor<T> usage_counts;  // [K], cumulative assignments
  double momentum = 0.9;

  Codebook() = default;
  Codebook(int64_t K, int64_t D, double momentum_, Rng& rng) : momentum(momentum_) {
    entries = Tensor<T>({K, D});
    for (int64_t i = 0; i < entries.numel(); ++i) entries[i] = static_cast<T>(rng.normal());
    usage_counts = Tensor<T>({K});
  }

  int64_t size() const { return entries.dim(0); }
  int64_t dim() const { return entries.dim(1); }

  // Nearest entry by squared Euclidean distance, ties to the lowest index.
  std::vector<int64_t> assign(const Tensor<T>& feats) const {
    if (feats.ndim() != 2 || feats.dim(1) != dim())
      throw DataError("codebook assign: feature shape mismatch");
    const int64_t N = feats.dim(0), K = size(), D = dim();
    std::vector<int64_t> labels(static_cast<size_t>(N));
    const T* fp = feats.data();
    const T* ep = entries.data();
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
      double best = 0.0;
      int64_t arg = 0;
      for (int64_t k = 0; k < K; ++k) {
        double d2 = 0.0;
        for (int64_t d = 0; d < D; ++d) {
          const double diff = static_cast<double>(fp[n * D + d]) - static_cast<double>(ep[k * D + d]);
          d2 += diff * diff;
        }
        if (k == 0 || d2 < best) {
          best = d2;
          arg = k;
        }
      }
      labels[static_cast<size_t>(n)] = arg;
    }
    return labels;
  }

  // entry_k' = m*entry_k + (1-m)*mean(assigned features); skipped when m == 1.
  void update(const Tensor<T>& feats, const std::vector<int64_t>& labels) {
    const int64_t N = feats.dim(0), K = size(), D = dim();
    if (static_cast<int64_t>(labels.size()) != N)
      throw DataError("codebook update: label count mismatch");
    std::vector<double> sum(static_cast<size_t>(K * D), 0.0);
    std::vector<int64_t> count(static_cast<size_t>(K), 0);
    const T* fp = feats.data();
    for (int64_t n = 0; n < N; ++n) {
      const int64_t k = labels[static_cast<size_t>(n)];
      if (k < 0 || k >= K) throw DataError("codebook update: label out of range");
      ++count[static_cast<size_t>(k)];
      for (int64_t d = 0; d < D; ++d) sum[static_cast<size_t>(k * D + d)] += fp[n * D + d];
    }
    for (int64_t k = 0; k < K; ++k) {
      if (count[static_cast<size_t>(k)] == 0) continue;
      usage_counts[k] += static_cast<T>(count[static_cast<size_t>(k)]);
      if (momentum == 1.0) continue;
      const double inv = 1.0 / static_cast<double>(count[static_cast<size_t>(k)]);
      for (int64_t d = 0; d < D; ++d) {
        const double mean = sum[static_cast<size_t>(k * D + d)] * inv;
        entries[k * D + d] =
            static_cast<T>(momentum * static_cast<double>(entries[k * D + d]) + (1.0 - momentum) * mean);
      }
    }
  }

  // Shannon entropy of the cumulative usage distribution, for diagnostics.
  double usage_entropy() const {
    double total = 0.0;
    for (int64_t k = 0; k < size(); ++k) total += static_cast<double>(usage_counts[k]);
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (int64_t k = 0; k < size(); ++k) {
      const double p = static_cast<double>(usage_counts[k]) / total;
      if (p > 0.0) h -= p * std::log(p);
    }
    return h;
  }
};

}  // namespace sslts::ssl
