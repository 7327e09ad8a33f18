#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vblmm/distributions.hpp"
#include "vblmm/gibbs.hpp"
#include "vblmm/sim.hpp"

using namespace vblmm;
using data::Matrix;
using data::Vector;
using gibbs::GibbsChain;
using gibbs::GibbsOptions;
using model::PriorFamily;
using model::PriorSpec;

namespace {

sim::SimConfig tiny_config() {
  sim::SimConfig cfg;
  cfg.depth = data::Depth::Two;
  cfg.m = 3;
  cfg.o_rule = sim::IntRule::fixed(6);
  cfg.p_R = 1;
  cfg.p_A = 1;
  cfg.p_S = 2;
  cfg.beta_R = Vector::Constant(1, 0.4);
  cfg.beta_A = Vector::Constant(1, -0.7);
  cfg.beta_S = Vector(2);
  cfg.beta_S << 1.2, 0.0;
  cfg.sigsq = 0.4;
  cfg.Sigma = Matrix::Constant(1, 1, 0.3);
  cfg.wishart_covariates = false;
  return cfg;
}

PriorSpec tame_prior(const data::MultilevelDataset& ds, PriorFamily family) {
  auto prior = PriorSpec::diffuse(ds, family);
  prior.s_sigsq = 1.0;
  prior.s_tausq = 1.0;
  if (ds.depth == data::Depth::Two)
    prior.s_Sigma.setConstant(1.0);
  return prior;
}

}  // namespace

TEST_CASE("fixed seeds give bit-identical chains") {
  auto [ds, truth] = sim::simulate(tiny_config(), 42);
  const auto prior = PriorSpec::diffuse(ds, PriorFamily::Horseshoe);
  GibbsOptions opts;
  opts.iters = 200;
  opts.warmup = 50;
  opts.thin = 2;
  opts.seed = 7;
  const auto a = gibbs::gibbs_fit(ds, prior, opts);
  const auto b = gibbs::gibbs_fit(ds, prior, opts);
  CHECK(a.retained() == 100);
  CHECK(a.beta == b.beta);
  CHECK(a.sigsq == b.sigsq);
  CHECK(a.zeta == b.zeta);
  CHECK(a.Sigma1 == b.Sigma1);

  GibbsOptions other = opts;
  other.seed = 8;
  const auto c = gibbs::gibbs_fit(ds, prior, other);
  CHECK(a.sigsq != c.sigsq);
}

TEST_CASE("retained draws satisfy the basic chain invariants") {
  auto [ds, truth] = sim::simulate(tiny_config(), 5);
  const auto prior = tame_prior(ds, PriorFamily::Neg);
  GibbsOptions opts;
  opts.iters = 400;
  opts.warmup = 100;
  opts.thin = 4;
  opts.seed = 3;
  const auto s = gibbs::gibbs_fit(ds, prior, opts);
  CHECK(s.retained() == 100);
  CHECK((s.sigsq.array() > 0).all());
  CHECK((s.tausq.array() > 0).all());
  CHECK((s.zeta.array() > 0).all());
  for (Eigen::Index r = 0; r < s.retained(); ++r) {
    Matrix S(1, 1);
    S << s.Sigma1(r, 0);
    CHECK(Eigen::LLT<Matrix>(S).info() == Eigen::Success);
  }
}

TEST_CASE("joint effects draw matches its conjugate normal full conditional") {
  auto [ds, truth] = sim::simulate(tiny_config(), 11);
  const auto prior = tame_prior(ds, PriorFamily::Horseshoe);
  GibbsChain chain(ds, prior, 17);

  // Freeze a conditioning state with non-trivial values.
  gibbs::GibbsState s0 = chain.state();
  s0.sigsq = 0.5;
  s0.tausq = 0.8;
  s0.zeta << 1.3, 0.6;
  s0.Sigma1 = Matrix::Constant(1, 1, 0.4);

  // Dense closed form: precision = C^T C / sigsq + blockdiag(priors, G^{-1}).
  const auto p = ds.p();
  const auto dim = p + ds.m() * ds.q();
  Matrix C = Matrix::Zero(ds.total_obs(), dim);
  Vector y(ds.total_obs());
  Eigen::Index r0 = 0;
  for (Eigen::Index i = 0; i < ds.m(); ++i) {
    const auto& g = ds.groups[static_cast<std::size_t>(i)];
    const auto o = g.y.size();
    C.block(r0, 0, o, 1) = g.XR;
    C.block(r0, 1, o, 1) = g.XA;
    C.block(r0, 2, o, 2) = g.XS;
    C.block(r0, p + i, o, 1) = g.Z;
    y.segment(r0, o) = g.y;
    r0 += o;
  }
  Matrix P = C.transpose() * C / s0.sigsq;
  P(0, 0) += 1.0 / prior.Sigma_betaR(0, 0);
  P(1, 1) += 1.0 / prior.Sigma_betaA(0, 0);
  P(2, 2) += s0.zeta(0) / s0.tausq;
  P(3, 3) += s0.zeta(1) / s0.tausq;
  for (Eigen::Index i = 0; i < ds.m(); ++i) P(p + i, p + i) += 1.0 / s0.Sigma1(0, 0);
  const Matrix cov = P.inverse();
  const Vector mean = cov * (C.transpose() * y / s0.sigsq);

  const int draws = 6000;
  Vector acc = Vector::Zero(dim);
  Matrix acc2 = Matrix::Zero(dim, dim);
  for (int k = 0; k < draws; ++k) {
    chain.set_state(s0);
    chain.step();
    const Vector theta = chain.state().theta;
    acc += theta;
    acc2 += theta * theta.transpose();
  }
  const Vector mean_hat = acc / draws;
  const Matrix cov_hat = acc2 / draws - mean_hat * mean_hat.transpose();
  for (Eigen::Index k = 0; k < dim; ++k) {
    const double se = std::sqrt(cov(k, k) / draws);
    CHECK(std::abs(mean_hat(k) - mean(k)) < 3.0 * se + 1e-12);
  }
  CHECK((cov_hat - cov).cwiseAbs().maxCoeff() < 0.15 * cov.cwiseAbs().maxCoeff());
}

TEST_CASE("prior-only chain reproduces the error-variance prior marginal") {
  auto [ds, truth] = sim::simulate(tiny_config(), 13);
  auto prior = tame_prior(ds, PriorFamily::Horseshoe);
  prior.nu_sigsq = 1.0;
  prior.s_sigsq = 1.0;  // sigma ~ Half-Cauchy(1), so median(sigsq) = 1
  GibbsOptions opts;
  opts.iters = 30000;
  opts.warmup = 500;
  opts.thin = 3;
  opts.seed = 23;
  opts.prior_only = true;
  const auto s = gibbs::gibbs_fit(ds, prior, opts);
  std::vector<double> draws(s.sigsq.data(), s.sigsq.data() + s.sigsq.size());
  std::sort(draws.begin(), draws.end());
  const double med = draws[draws.size() / 2];
  CHECK(med == doctest::Approx(1.0).epsilon(0.08));
  // Kolmogorov check of sqrt(sigsq) against the Half-Cauchy law.
  double ks = 0.0;
  const auto n = static_cast<double>(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = 2.0 / 3.14159265358979323846 * std::atan(std::sqrt(draws[i]));
    ks = std::max(ks, std::abs(f - (i + 0.5) / n));
  }
  CHECK(ks < 0.03);
}

TEST_CASE("one scan from retained states does not shift component means") {
  auto [ds, truth] = sim::simulate(tiny_config(), 29);
  const auto prior = tame_prior(ds, PriorFamily::Horseshoe);
  GibbsChain chain(ds, prior, 31);
  for (int k = 0; k < 500; ++k) chain.step();  // warm up

  std::vector<gibbs::GibbsState> states;
  for (int k = 0; k < 2000; ++k) {
    chain.step();
    if (k % 2 == 0) states.push_back(chain.state());
  }
  auto component = [](const gibbs::GibbsState& s) {
    return Vector{(Vector(4) << s.theta(0), s.theta(2), s.sigsq, s.Sigma1(0, 0)).finished()};
  };
  Vector before = Vector::Zero(4), after = Vector::Zero(4);
  Vector diff2 = Vector::Zero(4);
  for (auto& s : states) {
    const Vector b = component(s);
    chain.set_state(s);
    chain.step();
    const Vector a = component(chain.state());
    before += b;
    after += a;
    diff2 += (a - b).cwiseAbs2();
  }
  const auto n = static_cast<double>(states.size());
  for (Eigen::Index k = 0; k < 4; ++k) {
    const double se = std::sqrt(diff2(k) / n) / std::sqrt(n);
    CHECK(std::abs(after(k) - before(k)) / n < 5.0 * se + 1e-9);
  }
}

TEST_CASE("kernel density estimates recover a known density") {
  dist::Rng rng(37);
  Vector draws(100000);
  for (Eigen::Index i = 0; i < draws.size(); ++i) draws(i) = rng.normal();
  const auto kde = gibbs::kde_marginal(draws, 512);
  double worst = 0.0;
  double mass = 0.0;
  for (Eigen::Index i = 0; i < kde.grid.size(); ++i) {
    worst = std::max(worst, std::abs(kde.density(i) - dist::normal_pdf(kde.grid(i), 0, 1)));
    if (i > 0)
      mass += 0.5 * (kde.density(i) + kde.density(i - 1)) * (kde.grid(i) - kde.grid(i - 1));
  }
  CHECK(worst < 0.01);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));

  SUBCASE("grid-evaluated variant agrees") {
    const Vector dens = gibbs::kde_marginal_on_grid(draws, kde.grid);
    CHECK((dens - kde.density).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("too few draws") {
    CHECK_THROWS_AS(gibbs::kde_marginal(Vector::Ones(50)), Error);
  }
  SUBCASE("degenerate draws") {
    try {
      gibbs::kde_marginal(Vector::Ones(500));
      FAIL("expected TooFewDraws");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooFewDraws);
    }
  }
}

TEST_CASE("samples export to CSV") {
  auto [ds, truth] = sim::simulate(tiny_config(), 3);
  const auto prior = tame_prior(ds, PriorFamily::Laplace);
  GibbsOptions opts;
  opts.iters = 50;
  opts.warmup = 10;
  opts.thin = 1;
  const auto s = gibbs::gibbs_fit(ds, prior, opts);
  const std::string path = "/tmp/vblmm_test_samples.csv";
  gibbs::write_samples_csv(s, path);
  std::ifstream in(path);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header.find("sigsq") == 0);
  CHECK(header.find("beta1") != std::string::npos);
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 50);
  std::remove(path.c_str());
}
