#include "vblmm/savs.hpp"

#include <cmath>

namespace vblmm::savs {

SelectionResult select(const Vector& mu, const Vector& column_norms_sq) {
  if (mu.size() != column_norms_sq.size())
    throw Error(ErrorCode::DimensionMismatch,
                "coefficient and column-norm vectors differ in length");
  const auto h_count = mu.size();
  SelectionResult out;
  out.gamma.assign(static_cast<std::size_t>(h_count), 0);
  out.mu_star = Vector::Zero(h_count);
  out.norm_sq = column_norms_sq;
  for (Eigen::Index h = 0; h < h_count; ++h) {
    if (out.norm_sq(h) < 0)
      throw Error(ErrorCode::InvalidArgument, "column norms must be nonnegative");
    const double abs_mu = std::abs(mu(h));
    if (abs_mu == 0.0) continue;
    const double threshold = 1.0 / (abs_mu * abs_mu * abs_mu);
    if (out.norm_sq(h) <= threshold) continue;
    out.gamma[static_cast<std::size_t>(h)] = 1;
    const double sign = mu(h) > 0 ? 1.0 : -1.0;
    out.mu_star(h) =
        sign / out.norm_sq(h) * (abs_mu * out.norm_sq(h) - 1.0 / (mu(h) * mu(h)));
  }
  return out;
}

}  // namespace vblmm::savs
