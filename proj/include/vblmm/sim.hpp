#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vblmm/data.hpp"
#include "vblmm/gibbs.hpp"
#include "vblmm/mfvb.hpp"
#include "vblmm/savs.hpp"

namespace vblmm::sim {

using data::Matrix;
using data::Vector;

/// Fixed value or uniform draw over {lo, ..., hi}.
struct IntRule {
  Eigen::Index lo = 1, hi = 1;
  static IntRule fixed(Eigen::Index v) { return {v, v}; }
  static IntRule uniform(Eigen::Index lo, Eigen::Index hi) { return {lo, hi}; }
};

/// Generator configuration.  The R block is an intercept plus standard-normal
/// slope columns; A and S rows are multivariate normal with covariances drawn
/// once per dataset from Wishart(p_A, I) and Wishart(p_S, I), which yields
/// covariates with unequal scales and non-zero correlations.
struct SimConfig {
  data::Depth depth = data::Depth::Three;
  Eigen::Index m = 20;
  IntRule n_rule = IntRule::fixed(5);   // subgroups per group (three-level)
  IntRule o_rule = IntRule::fixed(10);  // units per (sub)group
  Eigen::Index p_R = 2, p_A = 3, p_S = 50;
  Vector beta_R, beta_A, beta_S;
  double sigsq = 0.7;
  Matrix Sigma;               // two-level
  Matrix Sigma_L1, Sigma_L2;  // three-level
  bool wishart_covariates = true;

  /// The sparse benchmark design: 10 non-null selection coefficients out of
  /// 50, two correlated random effects per level.
  static SimConfig sparse_benchmark(Eigen::Index m = 20, Eigen::Index n_i = 5,
                                    Eigen::Index o_ij = 10, Eigen::Index p_S = 50);
};

struct GroundTruth {
  Vector beta_R, beta_A, beta_S;
  double sigsq = 0;
  Matrix Sigma, Sigma_L1, Sigma_L2;
  std::vector<int> nonzero_s;  // 1 where beta_S is non-null
};

std::pair<data::MultilevelDataset, GroundTruth> simulate(const SimConfig& cfg,
                                                         std::uint64_t seed);

// --- comparison metrics ------------------------------------------------------

struct GriddedDensity {
  Vector grid;    // strictly increasing
  Vector values;  // nonnegative
};

struct GaussianMarginal {
  double mean, sd;
};
struct InvChiSqMarginal {
  double xi, lambda;
};
using ClosedFormMarginal = std::variant<GaussianMarginal, InvChiSqMarginal>;

/// 100 (1 - L1/2) between a closed-form marginal and a gridded estimate,
/// by trapezoidal quadrature on a common grid covering >= 99.9% of both
/// masses.  Throws Error{GridTooNarrow} when the estimate's grid misses too
/// much of the closed-form mass.
double accuracy_index(const ClosedFormMarginal& q, const GriddedDensity& p);

/// Same index for two gridded densities (symmetric in its arguments).
double accuracy_index(const GriddedDensity& a, const GriddedDensity& b);

struct SelectionScore {
  int tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;  // percentages for f1
};

/// Confusion counts and F1 (in percent) of a binary selection against the
/// non-null truth indicators.  Empty problems (no selections, no signals)
/// score 100.
SelectionScore f1_score(const std::vector<int>& gamma, const std::vector<int>& truth_nonzero);

// --- timing / memory harness -------------------------------------------------

struct BenchOptions {
  int sweeps = 10;
  bool force_naive = false;
  Eigen::Index naive_guard = 5000;  // refuse naive above this (beta,u) dimension
};

struct BenchResult {
  int sweeps = 0;
  double streamlined_seconds = 0;
  double naive_seconds = 0;  // 0 when skipped
  bool naive_skipped = false;
  double time_ratio = 0;  // lower bound when skipped
  std::size_t streamlined_input_bytes = 0;
  std::size_t naive_input_bytes = 0;
  double input_ratio = 0;
};

/// Analytic input-storage sizes: per-block design storage for the streamlined
/// route versus the fully stacked [X | Z] design (zero blocks included).
std::pair<std::size_t, std::size_t> input_storage_bytes(const data::MultilevelDataset& ds);

/// Times both modes at equal sweep counts.  The naive mode is skipped above
/// the dimension guard unless forced; the reported ratio is then a lower
/// bound from the streamlined time alone.
BenchResult bench(const data::MultilevelDataset& ds, const model::PriorSpec& prior,
                  const BenchOptions& opts);

// --- replicated evaluation pipeline -------------------------------------------

struct EvalConfig {
  SimConfig sim;
  int replicates = 1;
  std::uint64_t seed = 1;
  std::vector<model::PriorFamily> priors = {model::PriorFamily::Horseshoe};
  double neg_shape = 0.25;
  model::FitOptions fit;
  bool standardize = true;
  bool savs_original_scale = true;
  bool with_mcmc = false;
  gibbs::GibbsOptions mcmc;         // seed is derived per replicate
  int accuracy_grid = 401;
  int max_workers = 0;              // 0 = hardware concurrency
};

struct ReplicateReport {
  std::uint64_t seed = 0;
  std::map<std::string, SelectionScore> selection;     // by prior name
  std::map<std::string, double> fit_seconds;           // by prior name
  std::map<std::string, int> fit_iterations;           // by prior name
  std::map<std::string, double> accuracy;              // by parameter name
  std::size_t streamlined_input_bytes = 0;             // analytic, per dataset
  std::size_t naive_input_bytes = 0;
};

struct EvalReport {
  EvalConfig config;
  std::vector<ReplicateReport> replicates;
  std::map<std::string, double> median_f1;  // by prior name
};

/// simulate -> (standardize) -> fit -> selection, and optionally the sampler
/// comparison, independently per replicate (parallel workers, one seeded
/// generator each).
EvalReport evaluate(const EvalConfig& cfg);

double median(std::vector<double> values);

}  // namespace vblmm::sim
