#include "vblmm/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vblmm/distributions.hpp"
#include "vblmm/linalg.hpp"

namespace vblmm::gibbs {

namespace {

using dist::Rng;
using model::PriorFamily;

Matrix inverse_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonSpd, what);
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

double safe_abs(double v) { return std::max(std::abs(v), 1e-100); }

}  // namespace

struct GibbsChain::Impl {
  const data::MultilevelDataset* ds;
  model::PriorSpec prior;
  bool prior_only;
  Rng rng;
  model::MfvbEngine engine;
  model::VariationalState carrier;

  Eigen::Index pR, pA, pS, p, q1, q2, m, n, dimu;
  std::vector<Eigen::Index> ni;
  std::vector<Eigen::Index> uoff;
  std::vector<std::vector<Eigen::Index>> u2off;

  // Assembled X blocks for residual evaluation.
  std::vector<Matrix> X2;                 // two-level, per group
  std::vector<std::vector<Matrix>> X3;    // three-level, per (i,j)

  GibbsState state;

  Impl(const data::MultilevelDataset& d, model::PriorSpec pr, std::uint64_t seed, bool po)
      : ds(&d),
        prior(std::move(pr)),
        prior_only(po),
        rng(seed),
        engine(d, prior, model::Mode::Streamlined),
        carrier(engine.init_state()) {
    pR = d.p_R();
    pA = d.p_A();
    pS = d.p_S();
    p = d.p();
    q1 = d.depth == data::Depth::Two ? d.q() : d.q1();
    q2 = d.depth == data::Depth::Two ? 0 : d.q2();
    m = d.m();
    n = d.total_obs();
    ni = d.subgroup_counts();

    Eigen::Index off = 0;
    if (d.depth == data::Depth::Two) {
      for (Eigen::Index i = 0; i < m; ++i) {
        uoff.push_back(off);
        off += q1;
      }
      X2.reserve(d.groups.size());
      for (const auto& g : d.groups) {
        Matrix X(g.y.size(), p);
        X << g.XR, g.XA, g.XS;
        X2.push_back(std::move(X));
      }
    } else {
      u2off.resize(d.groups3.size());
      X3.resize(d.groups3.size());
      for (std::size_t i = 0; i < d.groups3.size(); ++i) {
        uoff.push_back(off);
        off += q1;
        for (const auto& s : d.groups3[i].subgroups) {
          u2off[i].push_back(off);
          off += q2;
          Matrix X(s.y.size(), p);
          X << s.XR, s.XA, s.XS;
          X3[i].push_back(std::move(X));
        }
      }
    }
    dimu = off;

    state.theta = Vector::Zero(p + dimu);
    state.zeta = Vector::Ones(pS);
    state.a_zeta = Vector::Ones(pS);
    state.Sigma1 = Matrix::Identity(q1, q1);
    state.A1 = Vector::Ones(q1);
    if (d.depth == data::Depth::Three) {
      state.Sigma2 = Matrix::Identity(q2, q2);
      state.A2 = Vector::Ones(q2);
    }
  }

  void draw_effects() {
    carrier.mu_recip_sigsq = 1.0 / state.sigsq;
    carrier.mu_recip_tausq = 1.0 / state.tausq;
    carrier.mu_zeta = state.zeta;
    carrier.M_Sigma1_inv = inverse_spd(state.Sigma1, "covariance draw is not SPD");
    if (ds->depth == data::Depth::Three)
      carrier.M_Sigma2_inv = inverse_spd(state.Sigma2, "covariance draw is not SPD");
    if (ds->depth == data::Depth::Two) {
      state.theta = linalg::sample_gaussian(engine.build_two_level_system(carrier),
                                            rng.generator());
    } else {
      state.theta = linalg::sample_gaussian(engine.build_three_level_system(carrier),
                                            rng.generator());
    }
  }

  void draw_effects_from_prior() {
    Vector& t = state.theta;
    t.head(pR) = rng.mv_normal(prior.mu_betaR, prior.Sigma_betaR);
    t.segment(pR, pA) = rng.mv_normal(prior.mu_betaA, prior.Sigma_betaA);
    if (prior.family == PriorFamily::Gaussian) {
      t.segment(pR + pA, pS) = rng.mv_normal(prior.mu_betaS, prior.Sigma_betaS);
    } else {
      for (Eigen::Index h = 0; h < pS; ++h)
        t(pR + pA + h) = rng.normal(0.0, std::sqrt(state.tausq / state.zeta(h)));
    }
    if (ds->depth == data::Depth::Two) {
      for (Eigen::Index i = 0; i < m; ++i)
        t.segment(p + uoff[i], q1) = rng.mv_normal(Vector::Zero(q1), state.Sigma1);
    } else {
      for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
        t.segment(p + uoff[i], q1) = rng.mv_normal(Vector::Zero(q1), state.Sigma1);
        for (auto o2 : u2off[i])
          t.segment(p + o2, q2) = rng.mv_normal(Vector::Zero(q2), state.Sigma2);
      }
    }
  }

  double residual_sum_sq() const {
    const Vector beta = state.theta.head(p);
    double rss = 0.0;
    if (ds->depth == data::Depth::Two) {
      for (std::size_t i = 0; i < ds->groups.size(); ++i) {
        const auto& g = ds->groups[i];
        rss += (g.y - X2[i] * beta - g.Z * state.theta.segment(p + uoff[i], q1)).squaredNorm();
      }
    } else {
      for (std::size_t i = 0; i < ds->groups3.size(); ++i) {
        const auto& g = ds->groups3[i];
        const Vector u1 = state.theta.segment(p + uoff[i], q1);
        for (std::size_t j = 0; j < g.subgroups.size(); ++j) {
          const auto& s = g.subgroups[j];
          rss += (s.y - X3[i][j] * beta - s.ZL1 * u1 -
                  s.ZL2 * state.theta.segment(p + u2off[i][j], q2))
                     .squaredNorm();
        }
      }
    }
    return rss;
  }

  void scan() {
    if (prior_only)
      draw_effects_from_prior();
    else
      draw_effects();

    const double rss = prior_only ? 0.0 : residual_sum_sq();
    const double n_eff = prior_only ? 0.0 : static_cast<double>(n);
    state.sigsq = rng.inv_chisq({prior.nu_sigsq + n_eff, 1.0 / state.a_sigsq + rss});
    state.a_sigsq = rng.inv_chisq(
        {prior.nu_sigsq + 1.0,
         1.0 / state.sigsq + 1.0 / (prior.nu_sigsq * prior.s_sigsq * prior.s_sigsq)});

    if (prior.family != PriorFamily::Gaussian && pS > 0) {
      const Vector beta_s = state.theta.segment(pR + pA, pS);
      state.tausq = rng.inv_chisq({static_cast<double>(pS) + 1.0,
                                   1.0 / state.a_tausq +
                                       state.zeta.dot(beta_s.cwiseProduct(beta_s))});
      state.a_tausq = rng.inv_chisq(
          {2.0, 1.0 / state.tausq + 1.0 / (prior.s_tausq * prior.s_tausq)});
      const double tau = std::sqrt(state.tausq);
      for (Eigen::Index h = 0; h < pS; ++h) {
        const double b = beta_s(h);
        switch (prior.family) {
          case PriorFamily::Laplace:
            state.zeta(h) = rng.inv_gaussian({std::min(tau / safe_abs(b), 1e100), 1.0});
            break;
          case PriorFamily::Horseshoe:
            state.zeta(h) = rng.exponential(b * b / (2.0 * state.tausq) + state.a_zeta(h));
            state.a_zeta(h) = rng.exponential(state.zeta(h) + 1.0);
            break;
          case PriorFamily::Neg: {
            const double lam = 2.0 * state.a_zeta(h);
            state.zeta(h) = rng.inv_gaussian(
                {std::min(std::sqrt(lam) * tau / safe_abs(b), 1e100), lam});
            state.a_zeta(h) = rng.gamma(
                {prior.neg_shape + 1.0, 1.0 / state.zeta(h) + 1.0});
            break;
          }
          case PriorFamily::Gaussian:
            break;
        }
      }
    }

    // Covariance blocks and their diagonal auxiliaries.
    auto draw_cov = [&](Eigen::Index q, double nu, const Vector& s_scales,
                        const Matrix& scatter, double count, Matrix& Sigma, Vector& A) {
      Matrix scale = scatter;
      for (Eigen::Index k = 0; k < q; ++k) scale(k, k) += 1.0 / A(k);
      Sigma = rng.inv_wishart(nu + count + static_cast<double>(q) - 1.0, scale);
      const Matrix Sinv = inverse_spd(Sigma, "covariance draw is not SPD");
      for (Eigen::Index k = 0; k < q; ++k) {
        const double prior_rate = 1.0 / (nu * s_scales(k) * s_scales(k));
        A(k) = rng.inv_chisq({nu + static_cast<double>(q), Sinv(k, k) + prior_rate});
      }
    };

    if (ds->depth == data::Depth::Two) {
      Matrix scatter = Matrix::Zero(q1, q1);
      for (Eigen::Index i = 0; i < m; ++i) {
        const Vector u = state.theta.segment(p + uoff[i], q1);
        scatter += u * u.transpose();
      }
      draw_cov(q1, prior.nu_Sigma, prior.s_Sigma, scatter, static_cast<double>(m),
               state.Sigma1, state.A1);
    } else {
      Matrix scatter1 = Matrix::Zero(q1, q1);
      Matrix scatter2 = Matrix::Zero(q2, q2);
      double n2 = 0;
      for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
        const Vector u1 = state.theta.segment(p + uoff[i], q1);
        scatter1 += u1 * u1.transpose();
        for (auto o2 : u2off[i]) {
          const Vector u2 = state.theta.segment(p + o2, q2);
          scatter2 += u2 * u2.transpose();
          n2 += 1.0;
        }
      }
      draw_cov(q1, prior.nu_SigmaL1, prior.s_SigmaL1, scatter1, static_cast<double>(m),
               state.Sigma1, state.A1);
      draw_cov(q2, prior.nu_SigmaL2, prior.s_SigmaL2, scatter2, n2, state.Sigma2, state.A2);
    }
  }
};

GibbsChain::GibbsChain(const data::MultilevelDataset& ds, model::PriorSpec prior,
                       std::uint64_t seed, bool prior_only)
    : impl_(std::make_unique<Impl>(ds, std::move(prior), seed, prior_only)) {}

GibbsChain::~GibbsChain() = default;
GibbsChain::GibbsChain(GibbsChain&&) noexcept = default;

void GibbsChain::step() { impl_->scan(); }
const GibbsState& GibbsChain::state() const { return impl_->state; }
void GibbsChain::set_state(const GibbsState& s) { impl_->state = s; }
Eigen::Index GibbsChain::p() const { return impl_->p; }
Eigen::Index GibbsChain::dim_u() const { return impl_->dimu; }
Eigen::Index GibbsChain::u_offset(Eigen::Index i) const {
  return impl_->p + impl_->uoff[static_cast<std::size_t>(i)];
}
Eigen::Index GibbsChain::u2_offset(Eigen::Index i, Eigen::Index j) const {
  return impl_->p + impl_->u2off[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
}

PosteriorSamples gibbs_fit(const data::MultilevelDataset& ds, const model::PriorSpec& prior,
                           const GibbsOptions& opts) {
  if (opts.iters < 1 || opts.warmup < 0 || opts.thin < 1)
    throw Error(ErrorCode::InvalidArgument, "invalid chain lengths");
  GibbsChain chain(ds, prior, opts.seed, opts.prior_only);

  const Eigen::Index p = chain.p();
  const Eigen::Index pS = ds.p_S();
  const Eigen::Index q1 = ds.depth == data::Depth::Two ? ds.q() : ds.q1();
  const Eigen::Index q2 = ds.depth == data::Depth::Two ? 0 : ds.q2();
  const auto retained = static_cast<Eigen::Index>(opts.iters / opts.thin);

  PosteriorSamples out;
  out.warmup = opts.warmup;
  out.thin = opts.thin;
  out.seed = opts.seed;
  out.beta.resize(retained, p);
  out.sigsq.resize(retained);
  out.tausq.resize(retained);
  out.zeta.resize(retained, pS);
  out.Sigma1.resize(retained, q1 * q1);
  if (ds.depth == data::Depth::Three) out.Sigma2.resize(retained, q2 * q2);

  // Tracked random-effect coordinates.
  std::vector<Eigen::Index> u_cols;
  const auto g_track =
      std::min<Eigen::Index>(opts.track_level1_groups, ds.m());
  const char* level1 = ds.depth == data::Depth::Two ? "u" : "uL1";
  for (Eigen::Index i = 0; i < g_track; ++i) {
    for (Eigen::Index k = 0; k < q1; ++k) {
      u_cols.push_back(chain.u_offset(i) + k);
      out.u_names.push_back(std::string(level1) + "_" + std::to_string(i + 1) + "_" +
                            std::to_string(k + 1));
    }
    if (ds.depth == data::Depth::Three) {
      const auto s_track = std::min<Eigen::Index>(
          opts.track_level2_subgroups,
          static_cast<Eigen::Index>(ds.groups3[static_cast<std::size_t>(i)].subgroups.size()));
      for (Eigen::Index j = 0; j < s_track; ++j)
        for (Eigen::Index k = 0; k < q2; ++k) {
          u_cols.push_back(chain.u2_offset(i, j) + k);
          out.u_names.push_back("uL2_" + std::to_string(i + 1) + "_" + std::to_string(j + 1) +
                                "_" + std::to_string(k + 1));
        }
    }
  }
  out.u.resize(retained, static_cast<Eigen::Index>(u_cols.size()));

  for (int it = 0; it < opts.warmup; ++it) chain.step();
  Eigen::Index row = 0;
  for (int it = 0; it < opts.iters; ++it) {
    chain.step();
    if (it % opts.thin != opts.thin - 1) continue;
    if (row >= retained) break;
    const auto& st = chain.state();
    out.beta.row(row) = st.theta.head(p).transpose();
    for (std::size_t c = 0; c < u_cols.size(); ++c)
      out.u(row, static_cast<Eigen::Index>(c)) = st.theta(u_cols[c]);
    out.sigsq(row) = st.sigsq;
    out.tausq(row) = st.tausq;
    out.zeta.row(row) = st.zeta.transpose();
    for (Eigen::Index r = 0; r < q1; ++r)
      for (Eigen::Index c = 0; c < q1; ++c) out.Sigma1(row, r * q1 + c) = st.Sigma1(r, c);
    if (ds.depth == data::Depth::Three)
      for (Eigen::Index r = 0; r < q2; ++r)
        for (Eigen::Index c = 0; c < q2; ++c) out.Sigma2(row, r * q2 + c) = st.Sigma2(r, c);
    ++row;
  }
  return out;
}

void write_samples_csv(const PosteriorSamples& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << "sigsq,tausq";
  for (Eigen::Index k = 0; k < samples.beta.cols(); ++k) out << ",beta" << (k + 1);
  for (const auto& n : samples.u_names) out << ',' << n;
  for (Eigen::Index k = 0; k < samples.zeta.cols(); ++k) out << ",zeta" << (k + 1);
  for (Eigen::Index k = 0; k < samples.Sigma1.cols(); ++k) out << ",Sigma1_" << (k + 1);
  for (Eigen::Index k = 0; k < samples.Sigma2.cols(); ++k) out << ",Sigma2_" << (k + 1);
  out << '\n';
  out.precision(17);
  for (Eigen::Index r = 0; r < samples.retained(); ++r) {
    out << samples.sigsq(r) << ',' << samples.tausq(r);
    for (Eigen::Index k = 0; k < samples.beta.cols(); ++k) out << ',' << samples.beta(r, k);
    for (Eigen::Index k = 0; k < samples.u.cols(); ++k) out << ',' << samples.u(r, k);
    for (Eigen::Index k = 0; k < samples.zeta.cols(); ++k) out << ',' << samples.zeta(r, k);
    for (Eigen::Index k = 0; k < samples.Sigma1.cols(); ++k) out << ',' << samples.Sigma1(r, k);
    for (Eigen::Index k = 0; k < samples.Sigma2.cols(); ++k) out << ',' << samples.Sigma2(r, k);
    out << '\n';
  }
}

namespace {

double rule_of_thumb_bandwidth(const Vector& samples) {
  const auto n = samples.size();
  const double mean = samples.mean();
  const double sd = std::sqrt((samples.array() - mean).square().sum() /
                              static_cast<double>(n - 1));
  Vector sorted = samples;
  std::sort(sorted.data(), sorted.data() + n);
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<Eigen::Index>(pos);
    const double w = pos - static_cast<double>(lo);
    return lo + 1 < n ? (1.0 - w) * sorted(lo) + w * sorted(lo + 1) : sorted(lo);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = sd;
  if (iqr > 0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0))
    throw Error(ErrorCode::TooFewDraws, "samples are degenerate");
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

Vector binned_kde(const Vector& samples, const Vector& grid, double h) {
  const auto G = grid.size();
  const double lo = grid(0);
  const double step = grid(1) - grid(0);
  for (Eigen::Index i = 2; i < G; ++i)
    if (std::abs((grid(i) - grid(i - 1)) - step) > 1e-9 * std::abs(step))
      throw Error(ErrorCode::InvalidArgument, "kde grid must be uniform");

  // Linear binning of the draws onto the grid.
  Vector counts = Vector::Zero(G);
  for (Eigen::Index k = 0; k < samples.size(); ++k) {
    const double pos = (samples(k) - lo) / step;
    if (pos <= 0) {
      counts(0) += 1.0;
    } else if (pos >= static_cast<double>(G - 1)) {
      counts(G - 1) += 1.0;
    } else {
      const auto i0 = static_cast<Eigen::Index>(pos);
      const double w = pos - static_cast<double>(i0);
      counts(i0) += 1.0 - w;
      counts(i0 + 1) += w;
    }
  }
  Vector kernel(G);
  const double norm = 1.0 / (h * std::sqrt(2.0 * 3.14159265358979323846));
  for (Eigen::Index d = 0; d < G; ++d) {
    const double z = static_cast<double>(d) * step / h;
    kernel(d) = norm * std::exp(-0.5 * z * z);
  }
  Vector density = Vector::Zero(G);
  for (Eigen::Index j = 0; j < G; ++j) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < G; ++k) {
      if (counts(k) == 0.0) continue;
      acc += counts(k) * kernel(std::abs(j - k));
    }
    density(j) = acc / static_cast<double>(samples.size());
  }
  return density;
}

}  // namespace

KdeResult kde_marginal(const Vector& samples, Eigen::Index grid_size) {
  if (samples.size() < 100)
    throw Error(ErrorCode::TooFewDraws, "need at least 100 retained draws");
  if (grid_size < 16) throw Error(ErrorCode::InvalidArgument, "grid too small");
  const double h = rule_of_thumb_bandwidth(samples);
  const double lo = samples.minCoeff() - 4.5 * h;
  const double hi = samples.maxCoeff() + 4.5 * h;
  KdeResult out;
  out.grid = Vector::LinSpaced(grid_size, lo, hi);
  out.density = binned_kde(samples, out.grid, h);
  return out;
}

Vector kde_marginal_on_grid(const Vector& samples, const Vector& grid) {
  if (samples.size() < 100)
    throw Error(ErrorCode::TooFewDraws, "need at least 100 retained draws");
  if (grid.size() < 16) throw Error(ErrorCode::InvalidArgument, "grid too small");
  return binned_kde(samples, grid, rule_of_thumb_bandwidth(samples));
}

}  // namespace vblmm::gibbs
