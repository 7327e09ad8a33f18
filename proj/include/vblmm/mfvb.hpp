#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vblmm/data.hpp"
#include "vblmm/linalg.hpp"

namespace vblmm::model {

using data::Matrix;
using data::Vector;

enum class PriorFamily { Gaussian, Laplace, Horseshoe, Neg };

const char* prior_family_name(PriorFamily f);
PriorFamily prior_family_from_name(const std::string& name);

/// Hyperparameters of the hierarchical model.  The selection block is driven
/// by the chosen family: Gaussian keeps a fixed normal prior on the selected
/// block, the other three place a global scale and per-coefficient local
/// scales on it.
struct PriorSpec {
  PriorFamily family = PriorFamily::Horseshoe;
  double neg_shape = 0.25;  // shape of the local-scale hierarchy, Neg family only

  Vector mu_betaR, mu_betaA;
  Matrix Sigma_betaR, Sigma_betaA;
  Vector mu_betaS;   // Gaussian family only
  Matrix Sigma_betaS;

  double nu_sigsq = 1.0;
  double s_sigsq = 1e5;
  double s_tausq = 1e5;

  double nu_Sigma = 2.0;  // two-level covariance hierarchy
  Vector s_Sigma;
  double nu_SigmaL1 = 2.0, nu_SigmaL2 = 2.0;  // three-level hierarchies
  Vector s_SigmaL1, s_SigmaL2;

  /// Diffuse defaults (zero prior means, 1e10 I prior covariances, scale
  /// hyperparameters 1e5) sized for the given dataset.
  static PriorSpec diffuse(const data::MultilevelDataset& ds,
                           PriorFamily family = PriorFamily::Horseshoe);

  void validate(const data::MultilevelDataset& ds) const;
};

enum class Mode { Streamlined, Naive };

struct FitOptions {
  int max_iters = 200;
  double rel_change_tol = 1e-3;
  Mode mode = Mode::Streamlined;
  bool track_trace = true;
};

/// Every q-density parameter.  Shape parameters (xi_*) are set once at
/// initialization and never change across sweeps.
struct VariationalState {
  data::Depth depth = data::Depth::Two;
  Eigen::Index p_R = 0, p_A = 0, p_S = 0, q1 = 0, q2 = 0;

  Vector mu_beta;     // p
  Matrix Sigma_beta;  // p x p
  // Group blocks: two-level u_i, or three-level level-1 effects.
  std::vector<Vector> mu_u;
  std::vector<Matrix> Sigma_u;
  std::vector<Matrix> Cov_beta_u;  // p x q blocks E{(beta-mu)(u_i-mu)^T}
  // Three-level level-2 effects, indexed [i][j].
  std::vector<std::vector<Vector>> mu_u2;
  std::vector<std::vector<Matrix>> Sigma_u2;
  std::vector<std::vector<Matrix>> Cov_beta_u2;
  std::vector<std::vector<Matrix>> Cov_u1_u2;  // q1 x q2 blocks

  double xi_sigsq = 0, lambda_sigsq = 0;
  double xi_a_sigsq = 0, lambda_a_sigsq = 0;
  double xi_tausq = 0, lambda_tausq = 0;
  double xi_a_tausq = 0, lambda_a_tausq = 0;

  Vector mu_zeta, lambda_zeta;          // local scale q-parameters
  Vector mu_a_zeta, lambda_a_zeta;
  Vector mu_recip_zeta;                 // Neg family only

  // Covariance q-densities; the "1" slot carries the two-level state.
  double xi_Sigma1 = 0, xi_ASigma1 = 0, xi_Sigma2 = 0, xi_ASigma2 = 0;
  Matrix Lambda_Sigma1, Lambda_ASigma1, Lambda_Sigma2, Lambda_ASigma2;

  // Cached expectations reused across the sweep.
  double mu_recip_sigsq = 1, mu_recip_a_sigsq = 1;
  double mu_recip_tausq = 1, mu_recip_a_tausq = 1;
  Matrix M_Sigma1_inv, M_ASigma1_inv, M_Sigma2_inv, M_ASigma2_inv;

  Eigen::Index p() const { return p_R + p_A + p_S; }
  /// Flattens every scalar parameter, used by the relative-change stopping
  /// rule and the cross-implementation equality checks.
  std::vector<double> scalar_parameters() const;
};

struct FitResult {
  VariationalState state;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // max relative change per sweep
  double wall_seconds = 0;
  std::size_t storage_bytes = 0;  // inputs + caches + per-sweep blocks
};

/// Coordinate-ascent engine.  Cross-products of the design blocks are formed
/// once at construction; each sweep then touches only the cached blocks.
/// Keeps a reference to the dataset, which must outlive the engine.
class MfvbEngine {
 public:
  MfvbEngine(const data::MultilevelDataset& ds, PriorSpec prior, Mode mode);
  ~MfvbEngine();
  MfvbEngine(MfvbEngine&&) noexcept;
  MfvbEngine& operator=(MfvbEngine&&) noexcept;

  VariationalState init_state() const;

  /// One full coordinate-ascent cycle in the fixed update order.
  void sweep(VariationalState& state) const;

  linalg::TwoLevelSparseSystem build_two_level_system(const VariationalState& state) const;
  linalg::ThreeLevelSparseSystem build_three_level_system(const VariationalState& state) const;

  const PriorSpec& prior() const;
  Mode mode() const;
  std::size_t storage_bytes() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs sweeps until max_iters or until the maximum relative parameter change
/// drops below rel_change_tol.  Numerical failures carry the sweep index.
FitResult fit(const data::MultilevelDataset& ds, const PriorSpec& prior, const FitOptions& opts);

/// Gaussian-marginal summaries (mean, sd, equal-tail credible bounds) for all
/// fixed and random effects at the given credible level.
struct PosteriorSummaries {
  std::vector<data::CoefficientSummary> beta;  // R, A, S in order
  std::vector<data::CoefficientSummary> u;     // group blocks in order
};
PosteriorSummaries posterior_summaries(const VariationalState& state, double level);

}  // namespace vblmm::model
