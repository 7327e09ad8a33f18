#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <utility>

#include "vblmm/error.hpp"

namespace vblmm::dist {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct InvChiSqParams {
  double xi;      // shape (degrees of freedom), > 0
  double lambda;  // scale, > 0
};

struct InvGaussianParams {
  double mu;   // mean, > 0
  double lam;  // rate, > 0
};

struct GammaParams {
  double alpha;  // shape, > 0
  double beta;   // rate, > 0
};

enum class Graph { Full, Diag };

struct InvGWishartParams {
  Graph graph;
  double xi;      // shape, > 0
  Matrix Lambda;  // symmetric positive definite scale
};

// --- expectations used by the coordinate-ascent updates ------------------

/// E[1/x] for x ~ InvChiSq(xi, lambda): xi / lambda.
double inv_chisq_mean_reciprocal(const InvChiSqParams& p);

/// E[X^{-1}] for X ~ InvGWishart(graph, xi, Lambda):
///   Full graph: (xi - d + 1) Lambda^{-1}
///   Diag graph: xi Lambda^{-1} (Lambda diagonal)
Matrix igw_mean_inverse(const InvGWishartParams& p);

/// (E[x], E[1/x]) for x ~ InvGaussian(mu, lam): (mu, 1/mu + 1/lam).
std::pair<double, double> inv_gaussian_moments(const InvGaussianParams& p);

// --- density functions ----------------------------------------------------

double laplace_pdf(double x, double mu, double sigma);
double horseshoe_pdf(double x, double mu, double sigma);
double neg_pdf(double x, double mu, double sigma, double shape);
double gamma_pdf(double x, const GammaParams& p);
double inv_chisq_pdf(double x, const InvChiSqParams& p);
double inv_gaussian_pdf(double x, const InvGaussianParams& p);
double half_t_pdf(double x, double sigma, double nu);
double normal_pdf(double x, double mu, double sigma);

// --- special functions ------------------------------------------------------

/// exp(x) * E1(x) for x > 0, where E1 is the exponential integral.  Series
/// for small x, continued fraction for large x; relative error <= 1e-12.
double exp_e1(double x);

double normal_cdf(double x);
/// Inverse standard normal CDF.
double normal_quantile(double prob);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
double inv_chisq_cdf(double x, const InvChiSqParams& p);
/// Quantile of the scaled inverse chi-squared distribution (bisection).
double inv_chisq_quantile(double prob, const InvChiSqParams& p);

// --- sampling ---------------------------------------------------------------

/// Seeded random generator with the samplers required by the Gibbs oracle
/// and the simulation harness.  Not thread-safe; use one per worker.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform();                       // U(0,1), 53-bit
  double normal(double mu = 0.0, double sigma = 1.0);
  double gamma(const GammaParams& p);     // shape/rate
  double chi_squared(double df);
  double exponential(double rate);
  double inv_chisq(const InvChiSqParams& p);
  double inv_gaussian(const InvGaussianParams& p);

  Vector normal_vector(Eigen::Index n);
  /// Multivariate normal draw, cov symmetric positive definite.
  Vector mv_normal(const Vector& mean, const Matrix& cov);
  /// Inverse-Wishart draw with df nu and scale Psi (mean Psi/(nu - d - 1)).
  Matrix inv_wishart(double nu, const Matrix& Psi);

  std::mt19937_64& generator() { return gen_; }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vblmm::dist
