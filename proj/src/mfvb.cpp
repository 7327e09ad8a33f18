#include "vblmm/mfvb.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>

#include "vblmm/distributions.hpp"

namespace vblmm::model {

namespace {

Matrix inverse_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonSpd, what);
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw Error(ErrorCode::NumericalBreakdown, std::string(what) + " is not positive");
}

Matrix diffuse_cov(Eigen::Index d) { return 1e10 * Matrix::Identity(d, d); }

}  // namespace

const char* prior_family_name(PriorFamily f) {
  switch (f) {
    case PriorFamily::Gaussian: return "gaussian";
    case PriorFamily::Laplace: return "laplace";
    case PriorFamily::Horseshoe: return "horseshoe";
    case PriorFamily::Neg: return "neg";
  }
  return "unknown";
}

PriorFamily prior_family_from_name(const std::string& name) {
  if (name == "gaussian") return PriorFamily::Gaussian;
  if (name == "laplace") return PriorFamily::Laplace;
  if (name == "horseshoe") return PriorFamily::Horseshoe;
  if (name == "neg") return PriorFamily::Neg;
  throw Error(ErrorCode::ConfigError, "unknown prior family '" + name + "'");
}

PriorSpec PriorSpec::diffuse(const data::MultilevelDataset& ds, PriorFamily family) {
  PriorSpec p;
  p.family = family;
  p.mu_betaR = Vector::Zero(ds.p_R());
  p.mu_betaA = Vector::Zero(ds.p_A());
  p.Sigma_betaR = diffuse_cov(ds.p_R());
  p.Sigma_betaA = diffuse_cov(ds.p_A());
  if (family == PriorFamily::Gaussian) {
    p.mu_betaS = Vector::Zero(ds.p_S());
    p.Sigma_betaS = diffuse_cov(ds.p_S());
  }
  if (ds.depth == data::Depth::Two) {
    p.s_Sigma = Vector::Constant(ds.q(), 1e5);
  } else {
    p.s_SigmaL1 = Vector::Constant(ds.q1(), 1e5);
    p.s_SigmaL2 = Vector::Constant(ds.q2(), 1e5);
  }
  return p;
}

void PriorSpec::validate(const data::MultilevelDataset& ds) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, what);
  };
  require(mu_betaR.size() == ds.p_R() && Sigma_betaR.rows() == ds.p_R(),
          "R-block prior does not match dataset");
  require(mu_betaA.size() == ds.p_A() && Sigma_betaA.rows() == ds.p_A(),
          "A-block prior does not match dataset");
  require(nu_sigsq > 0 && s_sigsq > 0 && s_tausq > 0, "scale hyperparameters must be positive");
  if (family == PriorFamily::Gaussian)
    require(mu_betaS.size() == ds.p_S() && Sigma_betaS.rows() == ds.p_S(),
            "S-block prior does not match dataset");
  if (family == PriorFamily::Neg) require(neg_shape > 0, "neg shape must be positive");
  if (ds.depth == data::Depth::Two) {
    require(nu_Sigma > 0 && s_Sigma.size() == ds.q() && (s_Sigma.array() > 0).all(),
            "covariance hyperparameters must be positive and match q");
  } else {
    require(nu_SigmaL1 > 0 && s_SigmaL1.size() == ds.q1() && (s_SigmaL1.array() > 0).all(),
            "level-1 covariance hyperparameters must be positive and match q1");
    require(nu_SigmaL2 > 0 && s_SigmaL2.size() == ds.q2() && (s_SigmaL2.array() > 0).all(),
            "level-2 covariance hyperparameters must be positive and match q2");
  }
}

// --- engine internals -------------------------------------------------------

namespace {

struct TwoCache {
  Matrix XtX, XtZ, ZtZ;
  Vector Xty, Zty;
  double yty = 0;
  Eigen::Index o = 0;
};

struct ThreeCache {
  Matrix XtX, XtZ1, XtZ2, Z1tZ1, Z1tZ2, Z2tZ2;
  Vector Xty, Z1ty, Z2ty;
  double yty = 0;
  Eigen::Index o = 0;
};

}  // namespace

struct MfvbEngine::Impl {
  const data::MultilevelDataset* ds;
  PriorSpec prior;
  Mode mode;
  data::Depth depth;
  Eigen::Index pR, pA, pS, p, q1, q2, m, n, dimu;
  std::vector<Eigen::Index> ni;

  Matrix SbR_inv, SbA_inv, SbS_inv;
  Vector prior_mean_rhs;  // [SbR^{-1} muR; SbA^{-1} muA; gaussian S term or 0]
  Matrix LambdaA1_prior, LambdaA2_prior;

  std::vector<TwoCache> two;
  std::vector<std::vector<ThreeCache>> three;
  Matrix sum_XtX;
  Vector sum_Xty;

  // Naive-mode workspace: the full stacked design and its cross-products.
  Matrix C, CtC;
  Vector Cty;
  std::vector<Eigen::Index> uoff;                // u-block offsets within [beta|u]
  std::vector<std::vector<Eigen::Index>> u2off;

  void build_caches();
  void build_naive_workspace();
  Vector s_block_precision(const VariationalState& s) const;
  void update_beta_u_streamlined(VariationalState& s, const MfvbEngine& eng) const;
  void update_beta_u_naive(VariationalState& s) const;
  void update_remaining(VariationalState& s) const;
  std::size_t storage_bytes() const;
};

void MfvbEngine::Impl::build_caches() {
  if (depth == data::Depth::Two) {
    two.reserve(ds->groups.size());
    for (const auto& g : ds->groups) {
      Matrix X(g.y.size(), p);
      X << g.XR, g.XA, g.XS;
      TwoCache c;
      c.o = g.y.size();
      c.XtX = X.transpose() * X;
      c.XtZ = X.transpose() * g.Z;
      c.ZtZ = g.Z.transpose() * g.Z;
      c.Xty = X.transpose() * g.y;
      c.Zty = g.Z.transpose() * g.y;
      c.yty = g.y.squaredNorm();
      sum_XtX += c.XtX;
      sum_Xty += c.Xty;
      two.push_back(std::move(c));
    }
  } else {
    three.resize(ds->groups3.size());
    for (std::size_t i = 0; i < ds->groups3.size(); ++i) {
      const auto& g = ds->groups3[i];
      three[i].reserve(g.subgroups.size());
      for (const auto& s : g.subgroups) {
        Matrix X(s.y.size(), p);
        X << s.XR, s.XA, s.XS;
        ThreeCache c;
        c.o = s.y.size();
        c.XtX = X.transpose() * X;
        c.XtZ1 = X.transpose() * s.ZL1;
        c.XtZ2 = X.transpose() * s.ZL2;
        c.Z1tZ1 = s.ZL1.transpose() * s.ZL1;
        c.Z1tZ2 = s.ZL1.transpose() * s.ZL2;
        c.Z2tZ2 = s.ZL2.transpose() * s.ZL2;
        c.Xty = X.transpose() * s.y;
        c.Z1ty = s.ZL1.transpose() * s.y;
        c.Z2ty = s.ZL2.transpose() * s.y;
        c.yty = s.y.squaredNorm();
        sum_XtX += c.XtX;
        sum_Xty += c.Xty;
        three[i].push_back(std::move(c));
      }
    }
  }
}

void MfvbEngine::Impl::build_naive_workspace() {
  C = Matrix::Zero(n, p + dimu);
  Eigen::Index row = 0;
  Vector y_all(n);
  if (depth == data::Depth::Two) {
    for (std::size_t i = 0; i < ds->groups.size(); ++i) {
      const auto& g = ds->groups[i];
      const auto o = g.y.size();
      C.block(row, 0, o, pR) = g.XR;
      C.block(row, pR, o, pA) = g.XA;
      C.block(row, pR + pA, o, pS) = g.XS;
      C.block(row, p + uoff[i], o, q1) = g.Z;
      y_all.segment(row, o) = g.y;
      row += o;
    }
  } else {
    for (std::size_t i = 0; i < ds->groups3.size(); ++i) {
      const auto& g = ds->groups3[i];
      for (std::size_t j = 0; j < g.subgroups.size(); ++j) {
        const auto& s = g.subgroups[j];
        const auto o = s.y.size();
        C.block(row, 0, o, pR) = s.XR;
        C.block(row, pR, o, pA) = s.XA;
        C.block(row, pR + pA, o, pS) = s.XS;
        C.block(row, p + uoff[i], o, q1) = s.ZL1;
        C.block(row, p + u2off[i][j], o, q2) = s.ZL2;
        y_all.segment(row, o) = s.y;
        row += o;
      }
    }
  }
  CtC = C.transpose() * C;
  Cty = C.transpose() * y_all;
}

Vector MfvbEngine::Impl::s_block_precision(const VariationalState& s) const {
  if (prior.family == PriorFamily::Gaussian) return SbS_inv.diagonal();
  return s.mu_recip_tausq * s.mu_zeta;
}

MfvbEngine::MfvbEngine(const data::MultilevelDataset& ds, PriorSpec prior, Mode mode)
    : impl_(std::make_unique<Impl>()) {
  ds.validate();
  prior.validate(ds);
  auto& im = *impl_;
  im.ds = &ds;
  im.prior = std::move(prior);
  im.mode = mode;
  im.depth = ds.depth;
  im.pR = ds.p_R();
  im.pA = ds.p_A();
  im.pS = ds.p_S();
  im.p = ds.p();
  im.q1 = im.depth == data::Depth::Two ? ds.q() : ds.q1();
  im.q2 = im.depth == data::Depth::Two ? 0 : ds.q2();
  im.m = ds.m();
  im.n = ds.total_obs();
  im.ni = ds.subgroup_counts();

  im.SbR_inv = inverse_spd(im.prior.Sigma_betaR, "R-block prior covariance is not SPD");
  im.SbA_inv = inverse_spd(im.prior.Sigma_betaA, "A-block prior covariance is not SPD");
  im.prior_mean_rhs = Vector::Zero(im.p);
  im.prior_mean_rhs.head(im.pR) = im.SbR_inv * im.prior.mu_betaR;
  im.prior_mean_rhs.segment(im.pR, im.pA) = im.SbA_inv * im.prior.mu_betaA;
  if (im.prior.family == PriorFamily::Gaussian) {
    im.SbS_inv = inverse_spd(im.prior.Sigma_betaS, "S-block prior covariance is not SPD");
    im.prior_mean_rhs.tail(im.pS) = im.SbS_inv * im.prior.mu_betaS;
  }
  if (im.depth == data::Depth::Two) {
    im.LambdaA1_prior =
        Matrix((1.0 / (im.prior.nu_Sigma * im.prior.s_Sigma.array().square())).matrix().asDiagonal());
  } else {
    im.LambdaA1_prior = Matrix(
        (1.0 / (im.prior.nu_SigmaL1 * im.prior.s_SigmaL1.array().square())).matrix().asDiagonal());
    im.LambdaA2_prior = Matrix(
        (1.0 / (im.prior.nu_SigmaL2 * im.prior.s_SigmaL2.array().square())).matrix().asDiagonal());
  }

  // u-block offsets in the stacked order: (u_i) or (uL1_i, uL2_i1, ..., uL2_in_i).
  Eigen::Index off = 0;
  if (im.depth == data::Depth::Two) {
    for (Eigen::Index i = 0; i < im.m; ++i) {
      im.uoff.push_back(off);
      off += im.q1;
    }
  } else {
    im.u2off.resize(ds.groups3.size());
    for (std::size_t i = 0; i < ds.groups3.size(); ++i) {
      im.uoff.push_back(off);
      off += im.q1;
      for (std::size_t j = 0; j < ds.groups3[i].subgroups.size(); ++j) {
        im.u2off[i].push_back(off);
        off += im.q2;
      }
    }
  }
  im.dimu = off;

  im.sum_XtX = Matrix::Zero(im.p, im.p);
  im.sum_Xty = Vector::Zero(im.p);
  im.build_caches();
  if (mode == Mode::Naive) im.build_naive_workspace();
}

MfvbEngine::~MfvbEngine() = default;
MfvbEngine::MfvbEngine(MfvbEngine&&) noexcept = default;
MfvbEngine& MfvbEngine::operator=(MfvbEngine&&) noexcept = default;

const PriorSpec& MfvbEngine::prior() const { return impl_->prior; }
Mode MfvbEngine::mode() const { return impl_->mode; }
std::size_t MfvbEngine::storage_bytes() const { return impl_->storage_bytes(); }

VariationalState MfvbEngine::init_state() const {
  const auto& im = *impl_;
  VariationalState s;
  s.depth = im.depth;
  s.p_R = im.pR;
  s.p_A = im.pA;
  s.p_S = im.pS;
  s.q1 = im.q1;
  s.q2 = im.q2;

  s.mu_beta = Vector::Zero(im.p);
  s.Sigma_beta = Matrix::Identity(im.p, im.p);
  s.mu_u.assign(im.m, Vector::Zero(im.q1));
  s.Sigma_u.assign(im.m, Matrix::Identity(im.q1, im.q1));
  s.Cov_beta_u.assign(im.m, Matrix::Zero(im.p, im.q1));
  if (im.depth == data::Depth::Three) {
    s.mu_u2.resize(im.m);
    s.Sigma_u2.resize(im.m);
    s.Cov_beta_u2.resize(im.m);
    s.Cov_u1_u2.resize(im.m);
    for (Eigen::Index i = 0; i < im.m; ++i) {
      const auto nsub = im.ni[static_cast<std::size_t>(i)];
      s.mu_u2[i].assign(nsub, Vector::Zero(im.q2));
      s.Sigma_u2[i].assign(nsub, Matrix::Identity(im.q2, im.q2));
      s.Cov_beta_u2[i].assign(nsub, Matrix::Zero(im.p, im.q2));
      s.Cov_u1_u2[i].assign(nsub, Matrix::Zero(im.q1, im.q2));
    }
  }

  // Shape parameters: set once, constant thereafter.
  s.xi_sigsq = im.prior.nu_sigsq + static_cast<double>(im.n);
  s.xi_a_sigsq = im.prior.nu_sigsq + 1.0;
  s.xi_tausq = static_cast<double>(im.pS) + 1.0;
  s.xi_a_tausq = 2.0;
  if (im.depth == data::Depth::Two) {
    s.xi_Sigma1 = im.prior.nu_Sigma + static_cast<double>(im.m) + 2.0 * im.q1 - 2.0;
    s.xi_ASigma1 = im.prior.nu_Sigma + static_cast<double>(im.q1);
  } else {
    double total_subgroups = 0;
    for (auto c : im.ni) total_subgroups += static_cast<double>(c);
    s.xi_Sigma1 = im.prior.nu_SigmaL1 + static_cast<double>(im.m) + 2.0 * im.q1 - 2.0;
    s.xi_ASigma1 = im.prior.nu_SigmaL1 + static_cast<double>(im.q1);
    s.xi_Sigma2 = im.prior.nu_SigmaL2 + total_subgroups + 2.0 * im.q2 - 2.0;
    s.xi_ASigma2 = im.prior.nu_SigmaL2 + static_cast<double>(im.q2);
  }

  // Free initial values: scale-neutral ones.
  s.lambda_sigsq = s.xi_sigsq;
  s.lambda_a_sigsq = s.xi_a_sigsq;
  s.lambda_tausq = s.xi_tausq;
  s.lambda_a_tausq = s.xi_a_tausq;
  s.mu_recip_sigsq = s.mu_recip_a_sigsq = 1.0;
  s.mu_recip_tausq = s.mu_recip_a_tausq = 1.0;
  s.mu_zeta = Vector::Ones(im.pS);
  s.mu_a_zeta = Vector::Ones(im.pS);
  s.lambda_zeta = Vector::Ones(im.pS);
  s.lambda_a_zeta = Vector::Ones(im.pS);
  s.mu_recip_zeta = Vector::Ones(im.pS);

  s.M_Sigma1_inv = Matrix::Identity(im.q1, im.q1);
  s.M_ASigma1_inv = Matrix::Identity(im.q1, im.q1);
  s.Lambda_Sigma1 = Matrix::Identity(im.q1, im.q1);
  s.Lambda_ASigma1 = Matrix::Identity(im.q1, im.q1);
  if (im.depth == data::Depth::Three) {
    s.M_Sigma2_inv = Matrix::Identity(im.q2, im.q2);
    s.M_ASigma2_inv = Matrix::Identity(im.q2, im.q2);
    s.Lambda_Sigma2 = Matrix::Identity(im.q2, im.q2);
    s.Lambda_ASigma2 = Matrix::Identity(im.q2, im.q2);
  }
  return s;
}

linalg::TwoLevelSparseSystem MfvbEngine::build_two_level_system(
    const VariationalState& state) const {
  const auto& im = *impl_;
  if (im.depth != data::Depth::Two)
    throw Error(ErrorCode::InvalidArgument, "engine holds a three-level dataset");
  linalg::TwoLevelSparseSystem sys;
  sys.A11 = state.mu_recip_sigsq * im.sum_XtX;
  sys.A11.topLeftCorner(im.pR, im.pR) += im.SbR_inv;
  sys.A11.block(im.pR, im.pR, im.pA, im.pA) += im.SbA_inv;
  sys.A11.bottomRightCorner(im.pS, im.pS) += Matrix(im.s_block_precision(state).asDiagonal());
  sys.a1 = state.mu_recip_sigsq * im.sum_Xty + im.prior_mean_rhs;
  sys.groups.resize(im.two.size());
  for (std::size_t i = 0; i < im.two.size(); ++i) {
    const auto& c = im.two[i];
    auto& g = sys.groups[i];
    g.A22 = state.mu_recip_sigsq * c.ZtZ + state.M_Sigma1_inv;
    g.A12 = state.mu_recip_sigsq * c.XtZ;
    g.a2 = state.mu_recip_sigsq * c.Zty;
  }
  return sys;
}

linalg::ThreeLevelSparseSystem MfvbEngine::build_three_level_system(
    const VariationalState& state) const {
  const auto& im = *impl_;
  if (im.depth != data::Depth::Three)
    throw Error(ErrorCode::InvalidArgument, "engine holds a two-level dataset");
  linalg::ThreeLevelSparseSystem sys;
  sys.A11 = state.mu_recip_sigsq * im.sum_XtX;
  sys.A11.topLeftCorner(im.pR, im.pR) += im.SbR_inv;
  sys.A11.block(im.pR, im.pR, im.pA, im.pA) += im.SbA_inv;
  sys.A11.bottomRightCorner(im.pS, im.pS) += Matrix(im.s_block_precision(state).asDiagonal());
  sys.a1 = state.mu_recip_sigsq * im.sum_Xty + im.prior_mean_rhs;
  sys.groups.resize(im.three.size());
  for (std::size_t i = 0; i < im.three.size(); ++i) {
    auto& g = sys.groups[i];
    g.A22 = state.M_Sigma1_inv;
    g.A12 = Matrix::Zero(im.p, im.q1);
    g.a2 = Vector::Zero(im.q1);
    g.subgroups.resize(im.three[i].size());
    for (std::size_t j = 0; j < im.three[i].size(); ++j) {
      const auto& c = im.three[i][j];
      g.A22 += state.mu_recip_sigsq * c.Z1tZ1;
      g.A12 += state.mu_recip_sigsq * c.XtZ1;
      g.a2 += state.mu_recip_sigsq * c.Z1ty;
      auto& sub = g.subgroups[j];
      sub.A22 = state.mu_recip_sigsq * c.Z2tZ2 + state.M_Sigma2_inv;
      sub.A12 = state.mu_recip_sigsq * c.XtZ2;
      sub.A12_inner = state.mu_recip_sigsq * c.Z1tZ2;
      sub.a2 = state.mu_recip_sigsq * c.Z2ty;
    }
  }
  return sys;
}

void MfvbEngine::Impl::update_beta_u_streamlined(VariationalState& s,
                                                 const MfvbEngine& eng) const {
  if (depth == data::Depth::Two) {
    auto sol = linalg::solve_two_level(eng.build_two_level_system(s));
    s.mu_beta = std::move(sol.x1);
    s.Sigma_beta = std::move(sol.Ainv11);
    for (std::size_t i = 0; i < sol.groups.size(); ++i) {
      s.mu_u[i] = std::move(sol.groups[i].x2);
      s.Sigma_u[i] = std::move(sol.groups[i].Ainv22);
      s.Cov_beta_u[i] = std::move(sol.groups[i].Ainv12);
    }
  } else {
    auto sol = linalg::solve_three_level(eng.build_three_level_system(s));
    s.mu_beta = std::move(sol.x1);
    s.Sigma_beta = std::move(sol.Ainv11);
    for (std::size_t i = 0; i < sol.groups.size(); ++i) {
      s.mu_u[i] = std::move(sol.groups[i].x2);
      s.Sigma_u[i] = std::move(sol.groups[i].Ainv22);
      s.Cov_beta_u[i] = std::move(sol.groups[i].Ainv12);
      for (std::size_t j = 0; j < sol.groups[i].subgroups.size(); ++j) {
        auto& sub = sol.groups[i].subgroups[j];
        s.mu_u2[i][j] = std::move(sub.x2);
        s.Sigma_u2[i][j] = std::move(sub.Ainv22);
        s.Cov_beta_u2[i][j] = std::move(sub.Ainv12);
        s.Cov_u1_u2[i][j] = std::move(sub.Ainv12_inner);
      }
    }
  }
}

void MfvbEngine::Impl::update_beta_u_naive(VariationalState& s) const {
  const auto dim = p + dimu;
  Matrix P = s.mu_recip_sigsq * CtC;
  P.topLeftCorner(pR, pR) += SbR_inv;
  P.block(pR, pR, pA, pA) += SbA_inv;
  P.block(pR + pA, pR + pA, pS, pS) += Matrix(s_block_precision(s).asDiagonal());
  if (depth == data::Depth::Two) {
    for (std::size_t i = 0; i < uoff.size(); ++i)
      P.block(p + uoff[i], p + uoff[i], q1, q1) += s.M_Sigma1_inv;
  } else {
    for (std::size_t i = 0; i < uoff.size(); ++i) {
      P.block(p + uoff[i], p + uoff[i], q1, q1) += s.M_Sigma1_inv;
      for (auto o2 : u2off[i]) P.block(p + o2, p + o2, q2, q2) += s.M_Sigma2_inv;
    }
  }
  Eigen::LLT<Matrix> llt(P);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::SingularMatrix, "dense precision matrix is not positive definite");
  Matrix Sigma = llt.solve(Matrix::Identity(dim, dim));
  Sigma = 0.5 * (Sigma + Sigma.transpose());
  Vector rhs = s.mu_recip_sigsq * Cty;
  rhs.head(p) += prior_mean_rhs;
  Vector mu = Sigma * rhs;

  s.mu_beta = mu.head(p);
  s.Sigma_beta = Sigma.topLeftCorner(p, p);
  for (std::size_t i = 0; i < uoff.size(); ++i) {
    s.mu_u[i] = mu.segment(p + uoff[i], q1);
    s.Sigma_u[i] = Sigma.block(p + uoff[i], p + uoff[i], q1, q1);
    s.Cov_beta_u[i] = Sigma.block(0, p + uoff[i], p, q1);
    if (depth == data::Depth::Three) {
      for (std::size_t j = 0; j < u2off[i].size(); ++j) {
        const auto o2 = u2off[i][j];
        s.mu_u2[i][j] = mu.segment(p + o2, q2);
        s.Sigma_u2[i][j] = Sigma.block(p + o2, p + o2, q2, q2);
        s.Cov_beta_u2[i][j] = Sigma.block(0, p + o2, p, q2);
        s.Cov_u1_u2[i][j] = Sigma.block(p + uoff[i], p + o2, q1, q2);
      }
    }
  }
}

void MfvbEngine::Impl::update_remaining(VariationalState& s) const {
  const Vector mu_s = s.mu_beta.tail(pS);
  const Vector mu_s_sq =
      s.Sigma_beta.bottomRightCorner(pS, pS).diagonal() + mu_s.cwiseProduct(mu_s);

  double lam_sig = s.mu_recip_a_sigsq;
  Matrix Lambda1 = s.M_ASigma1_inv;
  Matrix Lambda2;
  if (depth == data::Depth::Three) Lambda2 = s.M_ASigma2_inv;

  if (depth == data::Depth::Two) {
    for (std::size_t i = 0; i < two.size(); ++i) {
      const auto& c = two[i];
      const auto& mb = s.mu_beta;
      const auto& mu = s.mu_u[i];
      double resid = c.yty - 2.0 * mb.dot(c.Xty) - 2.0 * mu.dot(c.Zty) +
                     mb.dot(c.XtX * mb) + 2.0 * mb.dot(c.XtZ * mu) + mu.dot(c.ZtZ * mu);
      lam_sig += resid + (c.XtX.array() * s.Sigma_beta.array()).sum() +
                 (c.ZtZ.array() * s.Sigma_u[i].array()).sum() +
                 2.0 * (c.XtZ.array() * s.Cov_beta_u[i].array()).sum();
      Lambda1 += s.mu_u[i] * s.mu_u[i].transpose() + s.Sigma_u[i];
    }
  } else {
    for (std::size_t i = 0; i < three.size(); ++i) {
      Lambda1 += s.mu_u[i] * s.mu_u[i].transpose() + s.Sigma_u[i];
      for (std::size_t j = 0; j < three[i].size(); ++j) {
        const auto& c = three[i][j];
        const auto& mb = s.mu_beta;
        const auto& m1 = s.mu_u[i];
        const auto& m2 = s.mu_u2[i][j];
        double resid = c.yty - 2.0 * mb.dot(c.Xty) - 2.0 * m1.dot(c.Z1ty) -
                       2.0 * m2.dot(c.Z2ty) + mb.dot(c.XtX * mb) + m1.dot(c.Z1tZ1 * m1) +
                       m2.dot(c.Z2tZ2 * m2) + 2.0 * mb.dot(c.XtZ1 * m1) +
                       2.0 * mb.dot(c.XtZ2 * m2) + 2.0 * m1.dot(c.Z1tZ2 * m2);
        lam_sig += resid + (c.XtX.array() * s.Sigma_beta.array()).sum() +
                   (c.Z1tZ1.array() * s.Sigma_u[i].array()).sum() +
                   (c.Z2tZ2.array() * s.Sigma_u2[i][j].array()).sum() +
                   2.0 * (c.XtZ1.array() * s.Cov_beta_u[i].array()).sum() +
                   2.0 * (c.XtZ2.array() * s.Cov_beta_u2[i][j].array()).sum() +
                   2.0 * (c.Z1tZ2.array() * s.Cov_u1_u2[i][j].array()).sum();
        Lambda2 += s.mu_u2[i][j] * s.mu_u2[i][j].transpose() + s.Sigma_u2[i][j];
      }
    }
  }

  check_positive(lam_sig, "lambda for the error variance");
  s.lambda_sigsq = lam_sig;
  s.mu_recip_sigsq = s.xi_sigsq / s.lambda_sigsq;

  s.Lambda_Sigma1 = 0.5 * (Lambda1 + Lambda1.transpose());
  s.M_Sigma1_inv = (s.xi_Sigma1 - static_cast<double>(q1) + 1.0) *
                   inverse_spd(s.Lambda_Sigma1, "covariance scale update is not SPD");
  if (depth == data::Depth::Three) {
    s.Lambda_Sigma2 = 0.5 * (Lambda2 + Lambda2.transpose());
    s.M_Sigma2_inv = (s.xi_Sigma2 - static_cast<double>(q2) + 1.0) *
                     inverse_spd(s.Lambda_Sigma2, "covariance scale update is not SPD");
  }

  s.lambda_a_sigsq = s.mu_recip_sigsq + 1.0 / (prior.nu_sigsq * prior.s_sigsq * prior.s_sigsq);
  check_positive(s.lambda_a_sigsq, "lambda for the error-variance auxiliary");
  s.mu_recip_a_sigsq = s.xi_a_sigsq / s.lambda_a_sigsq;

  if (prior.family != PriorFamily::Gaussian && pS > 0) {
    s.lambda_tausq = s.mu_recip_a_tausq + s.mu_zeta.dot(mu_s_sq);
    check_positive(s.lambda_tausq, "lambda for the global scale");
    s.mu_recip_tausq = s.xi_tausq / s.lambda_tausq;
    s.lambda_a_tausq = s.mu_recip_tausq + 1.0 / (prior.s_tausq * prior.s_tausq);
    check_positive(s.lambda_a_tausq, "lambda for the global-scale auxiliary");
    s.mu_recip_a_tausq = s.xi_a_tausq / s.lambda_a_tausq;

    const Vector g = 0.5 * s.mu_recip_tausq * mu_s_sq;
    switch (prior.family) {
      case PriorFamily::Laplace:
        s.mu_zeta = (0.5 * g.array().inverse()).sqrt();
        break;
      case PriorFamily::Horseshoe:
        s.lambda_zeta = s.mu_a_zeta + g;
        s.mu_zeta = s.lambda_zeta.array().inverse();
        s.lambda_a_zeta = s.mu_zeta.array() + 1.0;
        s.mu_a_zeta = s.lambda_a_zeta.array().inverse();
        break;
      case PriorFamily::Neg:
        s.lambda_zeta = 2.0 * s.mu_a_zeta;
        s.mu_zeta = (s.lambda_zeta.array() / (2.0 * g.array())).sqrt();
        s.mu_recip_zeta =
            s.mu_zeta.array().inverse() + (2.0 * s.mu_a_zeta.array()).inverse();
        s.lambda_a_zeta = s.mu_recip_zeta.array() + 1.0;
        s.mu_a_zeta = (prior.neg_shape + 1.0) * s.lambda_a_zeta.array().inverse();
        break;
      case PriorFamily::Gaussian:
        break;
    }
    for (Eigen::Index h = 0; h < pS; ++h) {
      check_positive(s.mu_zeta(h), "local scale mean");
      check_positive(s.mu_a_zeta(h), "local scale auxiliary mean");
    }
  }

  s.Lambda_ASigma1 = Matrix(s.M_Sigma1_inv.diagonal().asDiagonal()) + LambdaA1_prior;
  {
    Vector d = s.Lambda_ASigma1.diagonal();
    for (Eigen::Index k = 0; k < d.size(); ++k) check_positive(d(k), "auxiliary scale update");
    s.M_ASigma1_inv = Matrix((s.xi_ASigma1 * d.array().inverse()).matrix().asDiagonal());
  }
  if (depth == data::Depth::Three) {
    s.Lambda_ASigma2 = Matrix(s.M_Sigma2_inv.diagonal().asDiagonal()) + LambdaA2_prior;
    Vector d = s.Lambda_ASigma2.diagonal();
    for (Eigen::Index k = 0; k < d.size(); ++k) check_positive(d(k), "auxiliary scale update");
    s.M_ASigma2_inv = Matrix((s.xi_ASigma2 * d.array().inverse()).matrix().asDiagonal());
  }
}

void MfvbEngine::sweep(VariationalState& state) const {
  if (impl_->mode == Mode::Streamlined)
    impl_->update_beta_u_streamlined(state, *this);
  else
    impl_->update_beta_u_naive(state);
  impl_->update_remaining(state);
}

std::size_t MfvbEngine::Impl::storage_bytes() const {
  const auto sz = [](Eigen::Index r, Eigen::Index c = 1) {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(c) * sizeof(double);
  };
  std::size_t bytes = 0;
  if (mode == Mode::Naive) {
    // Full stacked design (zero blocks included) and its dense workspaces.
    bytes += sz(n, p + dimu) + sz(n);
    bytes += 3 * sz(p + dimu, p + dimu) + 2 * sz(p + dimu);
    return bytes;
  }
  if (depth == data::Depth::Two) {
    for (const auto& c : two) {
      bytes += sz(c.o, p + q1) + sz(c.o);              // per-block inputs
      bytes += sz(p, p) + sz(p, q1) + sz(q1, q1) + sz(p) + sz(q1);  // cross-products
      bytes += 2 * (sz(q1) + sz(q1, q1) + sz(p, q1));  // system + solution blocks
    }
  } else {
    for (const auto& gi : three) {
      bytes += 2 * (sz(q1) + sz(q1, q1) + sz(p, q1));
      for (const auto& c : gi) {
        bytes += sz(c.o, p + q1 + q2) + sz(c.o);
        bytes += sz(p, p) + sz(p, q1) + sz(p, q2) + sz(q1, q1) + sz(q1, q2) + sz(q2, q2) +
                 sz(p) + sz(q1) + sz(q2);
        bytes += 2 * (sz(q2) + sz(q2, q2) + sz(p, q2) + sz(q1, q2));
      }
    }
  }
  bytes += 2 * (sz(p) + sz(p, p));
  return bytes;
}

std::vector<double> VariationalState::scalar_parameters() const {
  std::vector<double> out;
  auto push_vec = [&](const Vector& v) { out.insert(out.end(), v.data(), v.data() + v.size()); };
  auto push_mat = [&](const Matrix& m) { out.insert(out.end(), m.data(), m.data() + m.size()); };
  push_vec(mu_beta);
  push_mat(Sigma_beta);
  for (const auto& v : mu_u) push_vec(v);
  for (const auto& m : Sigma_u) push_mat(m);
  for (const auto& m : Cov_beta_u) push_mat(m);
  for (const auto& gi : mu_u2)
    for (const auto& v : gi) push_vec(v);
  for (const auto& gi : Sigma_u2)
    for (const auto& m : gi) push_mat(m);
  for (const auto& gi : Cov_beta_u2)
    for (const auto& m : gi) push_mat(m);
  for (const auto& gi : Cov_u1_u2)
    for (const auto& m : gi) push_mat(m);
  out.insert(out.end(), {xi_sigsq, lambda_sigsq, xi_a_sigsq, lambda_a_sigsq, xi_tausq,
                         lambda_tausq, xi_a_tausq, lambda_a_tausq});
  push_vec(mu_zeta);
  push_vec(lambda_zeta);
  push_vec(mu_a_zeta);
  push_vec(lambda_a_zeta);
  push_vec(mu_recip_zeta);
  out.insert(out.end(), {xi_Sigma1, xi_ASigma1, xi_Sigma2, xi_ASigma2, mu_recip_sigsq,
                         mu_recip_a_sigsq, mu_recip_tausq, mu_recip_a_tausq});
  push_mat(Lambda_Sigma1);
  push_mat(Lambda_ASigma1);
  push_mat(Lambda_Sigma2);
  push_mat(Lambda_ASigma2);
  push_mat(M_Sigma1_inv);
  push_mat(M_ASigma1_inv);
  push_mat(M_Sigma2_inv);
  push_mat(M_ASigma2_inv);
  return out;
}

FitResult fit(const data::MultilevelDataset& ds, const PriorSpec& prior, const FitOptions& opts) {
  if (opts.max_iters < 1)
    throw Error(ErrorCode::InvalidArgument, "max_iters must be at least 1");
  if (opts.rel_change_tol < 0)
    throw Error(ErrorCode::InvalidArgument, "rel_change_tol must be nonnegative");

  const auto t0 = std::chrono::steady_clock::now();
  MfvbEngine engine(ds, prior, opts.mode);
  FitResult result;
  result.state = engine.init_state();
  result.storage_bytes = engine.storage_bytes();

  std::vector<double> previous = result.state.scalar_parameters();
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    try {
      engine.sweep(result.state);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (sweep " + std::to_string(iter + 1) + ")");
    }
    std::vector<double> current = result.state.scalar_parameters();
    double max_rel = 0.0;
    for (std::size_t k = 0; k < current.size(); ++k) {
      const double rel = std::abs(current[k] - previous[k]) / (std::abs(previous[k]) + 1e-12);
      max_rel = std::max(max_rel, rel);
    }
    previous = std::move(current);
    result.iterations = iter + 1;
    if (opts.track_trace) result.trace.push_back(max_rel);
    if (max_rel < opts.rel_change_tol) {
      result.converged = true;
      break;
    }
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

PosteriorSummaries posterior_summaries(const VariationalState& state, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw Error(ErrorCode::InvalidArgument, "credible level must lie in (0,1)");
  const double z = dist::normal_quantile(0.5 * (1.0 + level));
  PosteriorSummaries out;
  auto summary = [&](std::string name, double mean, double var) {
    const double sd = std::sqrt(std::max(var, 0.0));
    return data::CoefficientSummary{std::move(name), mean, sd, mean - z * sd, mean + z * sd};
  };
  for (Eigen::Index k = 0; k < state.p(); ++k) {
    std::string name;
    if (k < state.p_R)
      name = "betaR" + std::to_string(k + 1);
    else if (k < state.p_R + state.p_A)
      name = "betaA" + std::to_string(k - state.p_R + 1);
    else
      name = "betaS" + std::to_string(k - state.p_R - state.p_A + 1);
    out.beta.push_back(summary(std::move(name), state.mu_beta(k), state.Sigma_beta(k, k)));
  }
  const char* level1 = state.depth == data::Depth::Two ? "u" : "uL1";
  for (std::size_t i = 0; i < state.mu_u.size(); ++i) {
    for (Eigen::Index k = 0; k < state.q1; ++k) {
      out.u.push_back(summary(std::string(level1) + "_" + std::to_string(i + 1) + "_" +
                                  std::to_string(k + 1),
                              state.mu_u[i](k), state.Sigma_u[i](k, k)));
    }
    if (state.depth == data::Depth::Three) {
      for (std::size_t j = 0; j < state.mu_u2[i].size(); ++j)
        for (Eigen::Index k = 0; k < state.q2; ++k)
          out.u.push_back(summary("uL2_" + std::to_string(i + 1) + "_" + std::to_string(j + 1) +
                                      "_" + std::to_string(k + 1),
                                  state.mu_u2[i][j](k), state.Sigma_u2[i][j](k, k)));
    }
  }
  return out;
}

}  // namespace vblmm::model
