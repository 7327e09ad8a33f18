#include "vblmm/distributions.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

namespace vblmm::dist {

namespace {

constexpr double kEulerGamma = 0.57721566490153286060651209008240243;
constexpr double kPi = 3.14159265358979323846264338327950288;

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

void require_support(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::OutOfSupport, what);
}

// Double-exponential quadrature of f over (0, inf) via s = exp(c sinh(t)).
template <typename F>
double exp_sinh_integrate(F&& f) {
  const double c = 0.5 * kPi;
  const double tmax = 4.2;
  auto weighted = [&](double t) {
    const double sh = c * std::sinh(t);
    if (std::abs(sh) > 700.0) return 0.0;
    const double s = std::exp(sh);
    return f(s) * s * c * std::cosh(t);
  };
  double h = 0.5;
  double sum = weighted(0.0);
  for (int k = 1; k * h <= tmax; ++k) sum += weighted(k * h) + weighted(-k * h);
  double integral = h * sum;
  for (int level = 0; level < 8; ++level) {
    h *= 0.5;
    for (int k = 1; k * h <= tmax; k += 2) sum += weighted(k * h) + weighted(-k * h);
    const double next = h * sum;
    if (level > 1 && std::abs(next - integral) <= 1e-13 * std::abs(next)) return next;
    integral = next;
  }
  return integral;
}

}  // namespace

double inv_chisq_mean_reciprocal(const InvChiSqParams& p) {
  require(p.xi > 0 && p.lambda > 0, "inverse chi-squared parameters must be positive");
  return p.xi / p.lambda;
}

Matrix igw_mean_inverse(const InvGWishartParams& p) {
  const auto d = p.Lambda.rows();
  require(p.Lambda.cols() == d && d > 0, "Lambda must be square");
  require(p.xi > 0, "xi must be positive");
  if (p.graph == Graph::Diag) {
    Matrix out = Matrix::Zero(d, d);
    for (Eigen::Index k = 0; k < d; ++k) {
      if (p.Lambda(k, k) <= 0)
        throw Error(ErrorCode::NonSpd, "diagonal scale entry is not positive");
      out(k, k) = p.xi / p.Lambda(k, k);
    }
    return out;
  }
  Eigen::LLT<Matrix> llt(p.Lambda);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::NonSpd, "scale matrix is not positive definite");
  Matrix inv = llt.solve(Matrix::Identity(d, d));
  return (p.xi - static_cast<double>(d) + 1.0) * 0.5 * (inv + inv.transpose());
}

std::pair<double, double> inv_gaussian_moments(const InvGaussianParams& p) {
  require(p.mu > 0 && p.lam > 0, "inverse gaussian parameters must be positive");
  return {p.mu, 1.0 / p.mu + 1.0 / p.lam};
}

double laplace_pdf(double x, double mu, double sigma) {
  require(sigma > 0, "scale must be positive");
  return std::exp(-std::abs(x - mu) / sigma) / (2.0 * sigma);
}

double exp_e1(double x) {
  require(x > 0, "exp_e1 requires x > 0");
  if (x <= 1.0) {
    // E1(x) = -gamma - log x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
    double sum = -kEulerGamma - std::log(x);
    double term = 1.0;
    for (int k = 1; k <= 40; ++k) {
      term *= -x / k;
      const double add = -term / k;
      sum += add;
      if (std::abs(add) < 1e-17 * std::abs(sum)) break;
    }
    return std::exp(x) * sum;
  }
  // Continued fraction (Lentz): exp(x) E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...)))
  const double tiny = 1e-300;
  double b = x + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k <= 200; ++k) {
    const double a = -static_cast<double>(k) * k;
    b += 2.0;
    d = a * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + a / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return h;
}

double horseshoe_pdf(double x, double mu, double sigma) {
  require(sigma > 0, "scale must be positive");
  const double z = (x - mu) / sigma;
  const double t = 0.5 * z * z;
  if (t == 0.0) return std::numeric_limits<double>::infinity();  // pole at the center
  const double c = 1.0 / std::sqrt(2.0 * kPi * kPi * kPi);
  return c / sigma * exp_e1(t);
}

double neg_pdf(double x, double mu, double sigma, double shape) {
  require(sigma > 0 && shape > 0, "scale and shape must be positive");
  const double z = std::abs(x - mu) / sigma;
  // 2^{-shape}/(sigma Gamma(shape)) * int_0^inf s^{2 shape} exp(-s^2/2 - z s) ds
  const double integral = exp_sinh_integrate([&](double s) {
    return std::exp(2.0 * shape * std::log(s) - 0.5 * s * s - z * s);
  });
  return std::exp(-shape * std::log(2.0) - std::lgamma(shape)) / sigma * integral;
}

double gamma_pdf(double x, const GammaParams& p) {
  require(p.alpha > 0 && p.beta > 0, "gamma parameters must be positive");
  require_support(x > 0, "gamma density requires x > 0");
  return std::exp(p.alpha * std::log(p.beta) - std::lgamma(p.alpha) +
                  (p.alpha - 1.0) * std::log(x) - p.beta * x);
}

double inv_chisq_pdf(double x, const InvChiSqParams& p) {
  require(p.xi > 0 && p.lambda > 0, "inverse chi-squared parameters must be positive");
  require_support(x > 0, "inverse chi-squared density requires x > 0");
  const double half_xi = 0.5 * p.xi;
  return std::exp(half_xi * std::log(0.5 * p.lambda) - std::lgamma(half_xi) -
                  (half_xi + 1.0) * std::log(x) - 0.5 * p.lambda / x);
}

double inv_gaussian_pdf(double x, const InvGaussianParams& p) {
  require(p.mu > 0 && p.lam > 0, "inverse gaussian parameters must be positive");
  require_support(x > 0, "inverse gaussian density requires x > 0");
  const double d = x - p.mu;
  return std::sqrt(p.lam / (2.0 * kPi * x * x * x)) *
         std::exp(-p.lam * d * d / (2.0 * p.mu * p.mu * x));
}

double half_t_pdf(double x, double sigma, double nu) {
  require(sigma > 0 && nu > 0, "half-t parameters must be positive");
  require_support(x >= 0, "half-t density requires x >= 0");
  const double r = x / sigma;
  return 2.0 * std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)) /
         (std::sqrt(kPi * nu) * sigma * std::pow(1.0 + r * r / nu, 0.5 * (nu + 1.0)));
}

double normal_pdf(double x, double mu, double sigma) {
  require(sigma > 0, "scale must be positive");
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * kPi));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double prob) {
  require(prob > 0.0 && prob < 1.0, "probability must lie in (0,1)");
  // Acklam's rational approximation, then one Halley refinement.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (prob < plow) {
    const double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (prob <= 1.0 - plow) {
    const double q = prob - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - prob;
  const double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double gamma_p(double a, double x) {
  require(a > 0, "shape must be positive");
  if (x <= 0) return 0.0;
  if (x < a + 1.0) {
    // series expansion
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < 500; ++k) {
      term *= x / (a + k);
      sum += term;
      if (term < sum * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  // continued fraction for Q(a, x), Lentz
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k < 500; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  const double q = std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  return 1.0 - q;
}

double inv_chisq_cdf(double x, const InvChiSqParams& p) {
  require(p.xi > 0 && p.lambda > 0, "inverse chi-squared parameters must be positive");
  if (x <= 0) return 0.0;
  // P(X <= x) = P(chi2_xi >= lambda / x)
  return 1.0 - gamma_p(0.5 * p.xi, 0.5 * p.lambda / x);
}

double inv_chisq_quantile(double prob, const InvChiSqParams& p) {
  require(prob > 0 && prob < 1, "probability must lie in (0,1)");
  double lo = p.lambda / (p.xi + 2.0);  // the mode
  double hi = lo;
  while (inv_chisq_cdf(lo, p) > prob) lo *= 0.5;
  while (inv_chisq_cdf(hi, p) < prob) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (inv_chisq_cdf(mid, p) < prob)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-12 * hi) break;
  }
  return 0.5 * (lo + hi);
}

// --- Rng ---------------------------------------------------------------------

double Rng::uniform() {
  return (gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mu, double sigma) {
  // Marsaglia polar method with spare caching.
  if (has_spare_) {
    has_spare_ = false;
    return mu + sigma * spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return mu + sigma * u * factor;
}

double Rng::gamma(const GammaParams& p) {
  require(p.alpha > 0 && p.beta > 0, "gamma parameters must be positive");
  if (p.alpha < 1.0) {
    // Boost a shape-(alpha+1) draw down.
    const double g = gamma({p.alpha + 1.0, p.beta});
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return g * std::pow(u, 1.0 / p.alpha);
  }
  // Marsaglia-Tsang squeeze.
  const double d = p.alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / p.beta;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v / p.beta;
  }
}

double Rng::chi_squared(double df) { return gamma({0.5 * df, 0.5}); }

double Rng::exponential(double rate) {
  require(rate > 0, "rate must be positive");
  double u;
  do {
    u = uniform();
  } while (u == 0.0);
  return -std::log(u) / rate;
}

double Rng::inv_chisq(const InvChiSqParams& p) {
  require(p.xi > 0 && p.lambda > 0, "inverse chi-squared parameters must be positive");
  return 1.0 / gamma({0.5 * p.xi, 0.5 * p.lambda});
}

double Rng::inv_gaussian(const InvGaussianParams& p) {
  require(p.mu > 0 && p.lam > 0, "inverse gaussian parameters must be positive");
  // Transformation with rejection (one normal, one uniform).
  const double z = normal();
  const double y = z * z;
  const double x = p.mu + p.mu * p.mu * y / (2.0 * p.lam) -
                   p.mu / (2.0 * p.lam) *
                       std::sqrt(4.0 * p.mu * p.lam * y + p.mu * p.mu * y * y);
  if (uniform() <= p.mu / (p.mu + x)) return x;
  return p.mu * p.mu / x;
}

Vector Rng::normal_vector(Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Vector Rng::mv_normal(const Vector& mean, const Matrix& cov) {
  require(cov.rows() == mean.size() && cov.cols() == mean.size(),
          "covariance does not match mean");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::NonSpd, "covariance is not positive definite");
  return mean + Matrix(llt.matrixL()) * normal_vector(mean.size());
}

Matrix Rng::inv_wishart(double nu, const Matrix& Psi) {
  const auto d = Psi.rows();
  require(Psi.cols() == d && d > 0, "scale must be square");
  require(nu > static_cast<double>(d) - 1.0, "degrees of freedom too small");
  Eigen::LLT<Matrix> llt(Psi);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::NonSpd, "scale is not positive definite");
  // X^{-1} ~ Wishart(nu, Psi^{-1}); Bartlett factor of the Wishart draw.
  Matrix Linv = llt.matrixL();
  Matrix A = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    A(i, i) = std::sqrt(chi_squared(nu - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = normal();
  }
  // W = (Psi^{-1/2})^T A A^T Psi^{-1/2} with Psi^{-1/2} from chol(Psi).
  // Solve L^T B = A  =>  B = L^{-T} A, then W = B B^T and X = W^{-1}.
  Matrix B = Linv.transpose().triangularView<Eigen::Upper>().solve(A);
  Matrix W = B * B.transpose();
  Eigen::LLT<Matrix> wllt(W);
  if (wllt.info() != Eigen::Success)
    throw Error(ErrorCode::NonSpd, "degenerate Wishart draw");
  Matrix inv = wllt.solve(Matrix::Identity(d, d));
  return 0.5 * (inv + inv.transpose());
}

}  // namespace vblmm::dist
