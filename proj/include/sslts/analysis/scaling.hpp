#pragma once

#include <string>
#include <vector>

#include "sslts/common.hpp"

namespace sslts::analysis {

enum class FitModel { kPurePower, kPowerPlusFloor };

struct FitResult {
  double c = 0.0;
  double alpha = 0.0;
  double l0 = 0.0;  // 0 when the floor is disabled
  double r_squared = 0.0;
  FitModel model = FitModel::kPurePower;
  bool converged = true;
  bool degenerate = false;  // constant y: alpha pinned to 0, r_squared reported as 1
};

// Least-squares fit of y = C * N^(-alpha) (+ L0 when with_floor) in linear
// space. For a fixed alpha the remaining parameters are linear, so the search
// runs one-dimensional over alpha: multi-start from a coarse grid, refined by
// golden-section minimization of the residual sum of squares, with L0
// projected to 0 whenever the unconstrained solution goes negative. Requires
// at least 3 points (4 with the floor), strictly increasing positive N, and
// positive y. A search that ends on a non-finite objective is returned with
// converged = false rather than thrown.
FitResult fit_power_law(const std::vector<double>& n, const std::vector<double>& y,
                        bool with_floor);

enum class AlphaWeighting { kR2, kR2Squared };

// Sum(w_i * alpha_i) / Sum(w_i) with w = r_squared (or its square). Negative
// r_squared values carry zero weight; all-zero total weight is an error.
double weighted_alpha(const std::vector<FitResult>& fits, AlphaWeighting weighting);

}  // namespace sslts::analysis
