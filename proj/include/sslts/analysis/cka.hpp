#pragma once

#include <string>
#include <vector>

#include "sslts/common.hpp"
#include "sslts/core/tensor.hpp"
#include "sslts/nn/encoder.hpp"

namespace sslts::analysis {

// Symmetric [L, L] similarity matrix with one label per row/column.
struct CKAMatrix {
  std::vector<std::string> labels;
  std::vector<double> values;  // row-major L*L, entries in [0, 1]

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  double at(int64_t i, int64_t j) const { return values[static_cast<size_t>(i * size() + j)]; }
};

// Centered kernel alignment between two representations of the same N
// samples, using Gaussian RBF Gram matrices (biased HSIC, i.e. the Frobenius
// inner product of the doubly centered Grams). Distances are measured per
// feature (squared Euclidean / D), so one absolute bandwidth stays in the
// informative regime regardless of layer width. Invariant under sample
// permutations applied to both arguments and under distance-preserving maps
// (orthogonal transforms, translations) of either feature space. When
// median_scale is set, sigma multiplies the median pairwise distance of each
// argument instead of acting as an absolute bandwidth.
//
// A representation whose rows are all identical has a zero centered Gram and
// no defined alignment; X == Y (bitwise) is the exception and scores 1.
double rbf_cka(const Tensor<double>& x, const Tensor<double>& y, double sigma,
               bool median_scale = false);

// Linear-kernel variant (Gram = X X^T, same centering and ratio); invariant
// under orthogonal transforms, translations, and isotropic scaling.
double linear_cka(const Tensor<double>& x, const Tensor<double>& y);

// In-place per-feature standardization: each column is centered and scaled to
// unit variance (population). Columns with zero variance are centered only.
void standardize_features(Tensor<double>& x);

// [N, L, D] float activations -> [N, D] double, mean over the token axis.
// When token_subsample > 0, the mean runs over that many evenly spaced tokens
// instead of all of them.
Tensor<double> mean_pool_tokens(const Tensor<float>& activations, int64_t token_subsample = 0);

// Pairwise CKA over per-layer activations of a shared sample set. Each entry
// is [N, D_l]; activations are standardized per feature before the kernel.
// labels, when given, must match the layer count; defaults to layer<i>.
// median_scale applies sigma relative to the median pairwise distance of
// each pair, as in rbf_cka.
CKAMatrix layer_cka_matrix(const std::vector<Tensor<double>>& activations, double sigma,
                           std::vector<std::string> labels = {}, bool median_scale = false);

enum class Stage { kEarly, kMid, kLate };

Stage stage_from_string(const std::string& s);

// Pooled activations of one encoder stage for every probe window, evaluated
// in deterministic eval mode over mini-batches of batch_size. Stages map to
// the first stem layer, the middle backbone layer (floor(depth / 2)), and the
// last backbone layer.
Tensor<double> stage_activations(nn::Encoder<float>& model, const Tensor<float>& probe,
                                 Stage stage, int64_t batch_size = 64);

// Pooled activations of every layer (stem then backbone) plus their names.
std::vector<Tensor<double>> pooled_layer_activations(nn::Encoder<float>& model,
                                                     const Tensor<float>& probe,
                                                     std::vector<std::string>& labels_out,
                                                     int64_t batch_size = 64);

// Pairwise CKA across models at one stage, on a shared probe batch [N, C, W].
CKAMatrix inter_model_cka(const std::vector<nn::Encoder<float>*>& models,
                          const std::vector<std::string>& labels, Stage stage,
                          const Tensor<float>& probe, double sigma, int64_t batch_size = 64,
                          bool median_scale = false);

}  // namespace sslts::analysis
