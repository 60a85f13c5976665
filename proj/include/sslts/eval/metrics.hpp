#pragma once

#include <vector>

#include "sslts/core/tensor.hpp"

namespace sslts::eval {

// Per-target metric values plus their unweighted mean over the targets that
// qualified; disqualified target indices are listed, never silently averaged.
struct TargetScores {
  std::vector<double> per_target;  // NaN at excluded positions
  std::vector<int64_t> excluded;
  double macro = 0.0;
};

// Area under the ROC curve per target via the rank statistic (tied scores
// count half), macro-averaged over targets with both classes present.
// Targets with a single observed class are excluded and listed. scores and
// labels are [N, T]; labels must be 0 or 1.
TargetScores macro_auroc(const Tensor<float>& scores, const Tensor<float>& labels);

// Mean absolute error in z-units: targets are standardized with the training
// split's per-target statistics before comparison. Targets whose training
// deviation is not positive are excluded and listed.
TargetScores standardized_mae(const Tensor<float>& preds, const Tensor<float>& targets,
                              const std::vector<double>& train_mean,
                              const std::vector<double>& train_std);

}  // namespace sslts::eval
