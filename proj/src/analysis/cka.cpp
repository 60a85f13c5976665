#include "sslts/analysis/cka.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace sslts::analysis {

namespace {

// Pairwise squared distances between rows of [N, D], normalized by the
// feature count (mean per-feature squared difference). The normalization
// keeps a fixed bandwidth in the informative regime at any width: raw
// Euclidean distances grow with D, and once they dwarf the bandwidth every
// Gram matrix collapses toward the identity and all alignments read as 1.
std::vector<double> row_sqdist(const Tensor<double>& x) {
  const int64_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(static_cast<size_t>(n * n), 0.0);
  const double inv_d = 1.0 / static_cast<double>(d);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < d; ++k) {
        const double diff = x[i * d + k] - x[j * d + k];
        s += diff * diff;
      }
      out[static_cast<size_t>(i * n + j)] = s * inv_d;
      out[static_cast<size_t>(j * n + i)] = s * inv_d;
    }
  }
  return out;
}

bool all_zero(const std::vector<double>& v) {
  for (double d : v)
    if (d != 0.0) return false;
  return true;
}

double median_pair_distance(const std::vector<double>& d2, int64_t n) {
  std::vector<double> pairs;
  pairs.reserve(static_cast<size_t>(n * (n - 1) / 2));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) pairs.push_back(std::sqrt(d2[static_cast<size_t>(i * n + j)]));
  std::sort(pairs.begin(), pairs.end());
  const size_t m = pairs.size();
  return m % 2 == 1 ? pairs[m / 2] : 0.5 * (pairs[m / 2 - 1] + pairs[m / 2]);
}

// Doubly centered RBF Gram: H K H with K = exp(-d^2 / (2 bw^2)).
std::vector<double> centered_rbf_gram(const std::vector<double>& d2, int64_t n, double bw) {
  std::vector<double> k(d2.size());
  const double inv = -1.0 / (2.0 * bw * bw);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n * n; ++i) k[static_cast<size_t>(i)] = std::exp(d2[static_cast<size_t>(i)] * inv);

  std::vector<double> row_mean(static_cast<size_t>(n), 0.0);
  double grand = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += k[static_cast<size_t>(i * n + j)];
    row_mean[static_cast<size_t>(i)] = s / static_cast<double>(n);
    grand += s;
  }
  grand /= static_cast<double>(n * n);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      k[static_cast<size_t>(i * n + j)] +=
          grand - row_mean[static_cast<size_t>(i)] - row_mean[static_cast<size_t>(j)];
  return k;
}

double frob_inner(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : s)
  for (int64_t i = 0; i < static_cast<int64_t>(a.size()); ++i)
    s += a[static_cast<size_t>(i)] * b[static_cast<size_t>(i)];
  return s;
}

bool same_content(const Tensor<double>& x, const Tensor<double>& y) {
  return x.shape() == y.shape() &&
         std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<size_t>(x.numel())) == 0;
}

}  // namespace

double rbf_cka(const Tensor<double>& x, const Tensor<double>& y, double sigma, bool median_scale) {
  if (x.ndim() != 2 || y.ndim() != 2)
    throw DataError("rbf_cka expects [N, D] matrices, got " + x.shape_str() + " and " + y.shape_str());
  if (x.dim(0) != y.dim(0))
    throw DataError("rbf_cka expects a shared sample set: " + std::to_string(x.dim(0)) + " vs " +
                    std::to_string(y.dim(0)) + " rows");
  const int64_t n = x.dim(0);
  if (n < 3) throw DataError("rbf_cka needs at least 3 samples, got " + std::to_string(n));
  if (!(sigma > 0.0)) throw ConfigError("rbf_cka bandwidth must be positive");

  const auto d2x = row_sqdist(x);
  const auto d2y = row_sqdist(y);
  if (all_zero(d2x) || all_zero(d2y)) {
    if (same_content(x, y)) return 1.0;
    throw NumericError("rbf_cka is undefined when a representation collapses to identical rows");
  }

  double bwx = sigma, bwy = sigma;
  if (median_scale) {
    bwx = sigma * median_pair_distance(d2x, n);
    bwy = sigma * median_pair_distance(d2y, n);
    if (!(bwx > 0.0) || !(bwy > 0.0))
      throw NumericError("median pairwise distance is zero; cannot scale the bandwidth");
  }

  const auto kc = centered_rbf_gram(d2x, n, bwx);
  const auto lc = centered_rbf_gram(d2y, n, bwy);
  const double hxy = frob_inner(kc, lc);
  const double hxx = frob_inner(kc, kc);
  const double hyy = frob_inner(lc, lc);
  if (!(hxx > 0.0) || !(hyy > 0.0)) {
    if (same_content(x, y)) return 1.0;
    throw NumericError("rbf_cka is undefined when a representation collapses to identical rows");
  }
  return std::clamp(hxy / std::sqrt(hxx * hyy), 0.0, 1.0);
}

double linear_cka(const Tensor<double>& x, const Tensor<double>& y) {
  if (x.ndim() != 2 || y.ndim() != 2)
    throw DataError("linear_cka expects [N, D] matrices, got " + x.shape_str() + " and " +
                    y.shape_str());
  if (x.dim(0) != y.dim(0))
    throw DataError("linear_cka expects a shared sample set: " + std::to_string(x.dim(0)) +
                    " vs " + std::to_string(y.dim(0)) + " rows");
  const int64_t n = x.dim(0);
  if (n < 3) throw DataError("linear_cka needs at least 3 samples, got " + std::to_string(n));

  const auto gram = [n](const Tensor<double>& a) {
    const int64_t d = a.dim(1);
    std::vector<double> k(static_cast<size_t>(n * n));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i; j < n; ++j) {
        double s = 0.0;
        for (int64_t c = 0; c < d; ++c) s += a[i * d + c] * a[j * d + c];
        k[static_cast<size_t>(i * n + j)] = s;
        k[static_cast<size_t>(j * n + i)] = s;
      }
    std::vector<double> row_mean(static_cast<size_t>(n), 0.0);
    double grand = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < n; ++j) s += k[static_cast<size_t>(i * n + j)];
      row_mean[static_cast<size_t>(i)] = s / static_cast<double>(n);
      grand += s;
    }
    grand /= static_cast<double>(n * n);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        k[static_cast<size_t>(i * n + j)] +=
            grand - row_mean[static_cast<size_t>(i)] - row_mean[static_cast<size_t>(j)];
    return k;
  };

  const auto kc = gram(x);
  const auto lc = gram(y);
  const double hxy = frob_inner(kc, lc);
  const double hxx = frob_inner(kc, kc);
  const double hyy = frob_inner(lc, lc);
  if (!(hxx > 0.0) || !(hyy > 0.0)) {
    if (same_content(x, y)) return 1.0;
    throw NumericError("linear_cka is undefined when a representation collapses to identical rows");
  }
  return std::clamp(hxy / std::sqrt(hxx * hyy), 0.0, 1.0);
}

void standardize_features(Tensor<double>& x) {
  if (x.ndim() != 2) throw DataError("standardize_features expects [N, D], got " + x.shape_str());
  const int64_t n = x.dim(0), d = x.dim(1);
  for (int64_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (int64_t i = 0; i < n; ++i) mu += x[i * d + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double c = x[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (int64_t i = 0; i < n; ++i) x[i * d + j] = (x[i * d + j] - mu) / sd;
  }
}

Tensor<double> mean_pool_tokens(const Tensor<float>& activations, int64_t token_subsample) {
  if (activations.ndim() != 3)
    throw DataError("mean_pool_tokens expects [N, L, D], got " + activations.shape_str());
  const int64_t n = activations.dim(0), l = activations.dim(1), d = activations.dim(2);
  std::vector<int64_t> tokens;
  if (token_subsample > 0 && token_subsample < l) {
    for (int64_t t = 0; t < token_subsample; ++t) tokens.push_back(t * l / token_subsample);
  } else {
    for (int64_t t = 0; t < l; ++t) tokens.push_back(t);
  }
  Tensor<double> out({n, d});
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t k = 0; k < d; ++k) {
      double s = 0.0;
      for (int64_t t : tokens) s += static_cast<double>(activations[(i * l + t) * d + k]);
      out[i * d + k] = s * inv;
    }
  return out;
}

CKAMatrix layer_cka_matrix(const std::vector<Tensor<double>>& activations, double sigma,
                           std::vector<std::string> labels) {
  const auto l = static_cast<int64_t>(activations.size());
  if (l == 0) throw DataError("layer_cka_matrix needs at least one layer");
  if (!labels.empty() && static_cast<int64_t>(labels.size()) != l)
    throw ConfigError("layer_cka_matrix got " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(l) + " layers");
  for (int64_t i = 0; i < l; ++i) {
    const auto& a = activations[static_cast<size_t>(i)];
    if (a.ndim() != 2)
      throw DataError("layer " + std::to_string(i) + " must be [N, D], got " + a.shape_str());
    if (a.dim(0) < 3)
      throw DataError("layer " + std::to_string(i) + " has " + std::to_string(a.dim(0)) +
                      " samples; at least 3 required");
    if (a.dim(0) != activations[0].dim(0))
      throw DataError("layer " + std::to_string(i) + " holds " + std::to_string(a.dim(0)) +
                      " samples, expected " + std::to_string(activations[0].dim(0)));
  }

  std::vector<Tensor<double>> prepped;
  prepped.reserve(static_cast<size_t>(l));
  for (const auto& a : activations) {
    Tensor<double> copy = a;
    standardize_features(copy);
    prepped.push_back(std::move(copy));
  }

  CKAMatrix m;
  m.labels = labels.empty() ? std::vector<std::string>{} : std::move(labels);
  if (m.labels.empty())
    for (int64_t i = 0; i < l; ++i) m.labels.push_back("layer" + std::to_string(i));
  m.values.assign(static_cast<size_t>(l * l), 1.0);
  for (int64_t i = 0; i < l; ++i)
    for (int64_t j = i + 1; j < l; ++j) {
      const double v =
          rbf_cka(prepped[static_cast<size_t>(i)], prepped[static_cast<size_t>(j)], sigma);
      m.values[static_cast<size_t>(i * l + j)] = v;
      m.values[static_cast<size_t>(j * l + i)] = v;
    }
  return m;
}

Stage stage_from_string(const std::string& s) {
  if (s == "early") return Stage::kEarly;
  if (s == "mid") return Stage::kMid;
  if (s == "late") return Stage::kLate;
  throw ConfigError("unknown stage: " + s);
}

namespace {

// Runs the probe set through the encoder in eval mode, pooling each captured
// layer over tokens; keep_only < 0 keeps every layer.
std::vector<Tensor<double>> pooled_captures(nn::Encoder<float>& model, const Tensor<float>& probe,
                                            int64_t batch_size, int64_t keep_only) {
  if (probe.ndim() != 3) throw DataError("probe batch must be [N, C, W], got " + probe.shape_str());
  const int64_t n = probe.dim(0), c = probe.dim(1), w = probe.dim(2);
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");

  std::vector<Tensor<double>> pooled;
  for (int64_t lo = 0; lo < n; lo += batch_size) {
    const int64_t hi = std::min(n, lo + batch_size);
    Tensor<float> chunk({hi - lo, c, w});
    std::memcpy(chunk.data(), probe.data() + lo * c * w,
                sizeof(float) * static_cast<size_t>((hi - lo) * c * w));
    auto res = model.encode(chunk, true);
    const auto layers = static_cast<int64_t>(res.per_layer.size());
    if (pooled.empty()) {
      for (int64_t i = 0; i < layers; ++i) {
        if (keep_only >= 0 && i != keep_only) {
          pooled.emplace_back(Tensor<double>({0}));
          continue;
        }
        pooled.emplace_back(Tensor<double>({n, res.per_layer[static_cast<size_t>(i)].dim(2)}));
      }
    }
    for (int64_t i = 0; i < layers; ++i) {
      if (keep_only >= 0 && i != keep_only) continue;
      const auto rows = mean_pool_tokens(res.per_layer[static_cast<size_t>(i)]);
      std::memcpy(pooled[static_cast<size_t>(i)].data() + lo * rows.dim(1), rows.data(),
                  sizeof(double) * static_cast<size_t>(rows.numel()));
    }
  }
  return pooled;
}

int64_t stage_index(const nn::Encoder<float>& model, int64_t capture_count, Stage stage) {
  const int64_t backbone = model.depth();
  const int64_t stem = capture_count - backbone;
  switch (stage) {
    case Stage::kEarly: return 0;
    case Stage::kMid: return stem + backbone / 2;
    default: return capture_count - 1;
  }
}

}  // namespace

Tensor<double> stage_activations(nn::Encoder<float>& model, const Tensor<float>& probe, Stage stage,
                                 int64_t batch_size) {
  // One tiny dry run determines the capture count before the full pass.
  Tensor<float> first({1, probe.dim(1), probe.dim(2)});
  std::memcpy(first.data(), probe.data(), sizeof(float) * static_cast<size_t>(first.numel()));
  const auto layers = static_cast<int64_t>(model.encode(first, true).per_layer.size());
  const int64_t idx = stage_index(model, layers, stage);
  auto pooled = pooled_captures(model, probe, batch_size, idx);
  return std::move(pooled[static_cast<size_t>(idx)]);
}

std::vector<Tensor<double>> pooled_layer_activations(nn::Encoder<float>& model,
                                                     const Tensor<float>& probe,
                                                     std::vector<std::string>& labels_out,
                                                     int64_t batch_size) {
  auto pooled = pooled_captures(model, probe, batch_size, -1);
  const auto total = static_cast<int64_t>(pooled.size());
  const int64_t stem = total - model.depth();
  labels_out.clear();
  for (int64_t i = 0; i < total; ++i)
    labels_out.push_back(i < stem ? "stem.layer" + std::to_string(i)
                                  : "backbone.layer" + std::to_string(i - stem));
  return pooled;
}

CKAMatrix inter_model_cka(const std::vector<nn::Encoder<float>*>& models,
                          const std::vector<std::string>& labels, Stage stage,
                          const Tensor<float>& probe, double sigma, int64_t batch_size) {
  if (models.empty()) throw DataError("inter_model_cka needs at least one model");
  if (labels.size() != models.size())
    throw ConfigError("inter_model_cka got " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(models.size()) + " models");
  std::vector<Tensor<double>> acts;
  acts.reserve(models.size());
  for (auto* model : models) {
    auto a = stage_activations(*model, probe, stage, batch_size);
    acts.push_back(std::move(a));
  }
  return layer_cka_matrix(acts, sigma, labels);
}

}  // namespace sslts::analysis
