#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vblmm/error.hpp"

namespace vblmm::savs {

using Vector = Eigen::VectorXd;

struct SelectionResult {
  std::vector<int> gamma;  // 1 = selected
  Vector mu_star;          // sparsified posterior-mean estimates
  Vector norm_sq;          // ||x_h||^2 used for each coefficient
};

/// Signal-adaptive soft-thresholding of posterior means.  A coefficient is
/// kept when ||x_h||^2 exceeds |mu_h|^{-3}; the kept estimate is
/// sign(mu_h) ||x_h||^{-2} (|mu_h| ||x_h||^2 - mu_h^{-2}).  mu_h = 0 is never
/// selected (the threshold diverges).
SelectionResult select(const Vector& mu, const Vector& column_norms_sq);

}  // namespace vblmm::savs
