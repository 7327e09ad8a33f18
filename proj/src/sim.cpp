#include "vblmm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <optional>
#include <thread>

#include "vblmm/distributions.hpp"

namespace vblmm::sim {

namespace {

using dist::Rng;
using model::PriorFamily;

Eigen::Index draw_count(const IntRule& rule, Rng& rng) {
  if (rule.lo > rule.hi || rule.lo < 1)
    throw Error(ErrorCode::InvalidArgument, "invalid count rule");
  if (rule.lo == rule.hi) return rule.lo;
  const auto span = static_cast<double>(rule.hi - rule.lo + 1);
  auto k = static_cast<Eigen::Index>(rng.uniform() * span);
  if (k >= rule.hi - rule.lo + 1) k = rule.hi - rule.lo;
  return rule.lo + k;
}

// Wishart(df, I) draw as G G^T with G a df-column standard normal matrix.
Matrix wishart_identity(Eigen::Index d, Rng& rng) {
  Matrix G(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) G(i, j) = rng.normal();
  return G * G.transpose();
}

Matrix chol_lower(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonSpd, what);
  return llt.matrixL();
}

double trapezoid(const Vector& x, const Vector& y) {
  double acc = 0.0;
  for (Eigen::Index i = 1; i < x.size(); ++i)
    acc += 0.5 * (y(i) + y(i - 1)) * (x(i) - x(i - 1));
  return acc;
}

double interp_or_zero(const GriddedDensity& d, double x) {
  if (x < d.grid(0) || x > d.grid(d.grid.size() - 1)) return 0.0;
  const auto it = std::lower_bound(d.grid.data(), d.grid.data() + d.grid.size(), x);
  auto hi = static_cast<Eigen::Index>(it - d.grid.data());
  if (hi == 0) return d.values(0);
  const auto lo = hi - 1;
  const double w = (x - d.grid(lo)) / (d.grid(hi) - d.grid(lo));
  return (1.0 - w) * d.values(lo) + w * d.values(hi);
}

double pdf_of(const ClosedFormMarginal& q, double x) {
  if (std::holds_alternative<GaussianMarginal>(q)) {
    const auto& g = std::get<GaussianMarginal>(q);
    return dist::normal_pdf(x, g.mean, g.sd);
  }
  const auto& ic = std::get<InvChiSqMarginal>(q);
  if (x <= 0) return 0.0;
  return dist::inv_chisq_pdf(x, {ic.xi, ic.lambda});
}

double quantile_of(const ClosedFormMarginal& q, double prob) {
  if (std::holds_alternative<GaussianMarginal>(q)) {
    const auto& g = std::get<GaussianMarginal>(q);
    return g.mean + g.sd * dist::normal_quantile(prob);
  }
  const auto& ic = std::get<InvChiSqMarginal>(q);
  return dist::inv_chisq_quantile(prob, {ic.xi, ic.lambda});
}

}  // namespace

SimConfig SimConfig::sparse_benchmark(Eigen::Index m, Eigen::Index n_i, Eigen::Index o_ij,
                                      Eigen::Index p_S) {
  SimConfig cfg;
  cfg.depth = data::Depth::Three;
  cfg.m = m;
  cfg.n_rule = IntRule::fixed(n_i);
  cfg.o_rule = IntRule::fixed(o_ij);
  cfg.p_R = 2;
  cfg.p_A = 3;
  cfg.p_S = p_S;
  cfg.beta_R = Vector(2);
  cfg.beta_R << 0.58, 1.98;
  cfg.beta_A = Vector(3);
  cfg.beta_A << 0.7, -0.9, 1.8;
  cfg.beta_S = Vector::Zero(p_S);
  const double head[10] = {1.91, 1.96, -0.10, 1.62, -1.45, -1.53, 0.24, 1.76, 1.79, -0.15};
  for (Eigen::Index h = 0; h < std::min<Eigen::Index>(10, p_S); ++h) cfg.beta_S(h) = head[h];
  cfg.sigsq = 0.7;
  cfg.Sigma_L1 = Matrix(2, 2);
  cfg.Sigma_L1 << 0.42, -0.09, -0.09, 0.52;
  cfg.Sigma_L2 = Matrix(2, 2);
  cfg.Sigma_L2 << 0.80, -0.24, -0.24, 0.75;
  return cfg;
}

std::pair<data::MultilevelDataset, GroundTruth> simulate(const SimConfig& cfg,
                                                         std::uint64_t seed) {
  if (cfg.beta_R.size() != cfg.p_R || cfg.beta_A.size() != cfg.p_A ||
      cfg.beta_S.size() != cfg.p_S)
    throw Error(ErrorCode::DimensionMismatch, "true coefficient sizes do not match dimensions");
  if (cfg.p_R < 1) throw Error(ErrorCode::InvalidArgument, "p_R must be at least 1");
  if (cfg.m < 1) throw Error(ErrorCode::InvalidArgument, "m must be at least 1");

  Rng rng(seed);
  const bool three = cfg.depth == data::Depth::Three;
  const Matrix& S1 = three ? cfg.Sigma_L1 : cfg.Sigma;
  if (S1.rows() != cfg.p_R)
    throw Error(ErrorCode::DimensionMismatch,
                "random-effects covariance must match p_R (random intercept and slopes)");
  const Matrix L1 = chol_lower(S1, "random-effects covariance is not SPD");
  Matrix L2;
  if (three) L2 = chol_lower(cfg.Sigma_L2, "level-2 covariance is not SPD");
  const double err_sd = std::sqrt(cfg.sigsq);

  // Covariate-generation covariances, drawn once per dataset.
  Matrix La = Matrix::Identity(cfg.p_A, cfg.p_A);
  Matrix Ls = Matrix::Identity(cfg.p_S, cfg.p_S);
  if (cfg.wishart_covariates) {
    if (cfg.p_A > 0)
      La = chol_lower(wishart_identity(cfg.p_A, rng), "covariate covariance is not SPD");
    if (cfg.p_S > 0)
      Ls = chol_lower(wishart_identity(cfg.p_S, rng), "covariate covariance is not SPD");
  }

  auto normal_matrix = [&](Eigen::Index r, Eigen::Index c) {
    Matrix out(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) out(i, j) = rng.normal();
    return out;
  };
  auto make_block = [&](Eigen::Index o, Matrix& XR, Matrix& XA, Matrix& XS) {
    XR.resize(o, cfg.p_R);
    XR.col(0).setOnes();
    for (Eigen::Index c = 1; c < cfg.p_R; ++c)
      for (Eigen::Index r = 0; r < o; ++r) XR(r, c) = rng.normal();
    XA = normal_matrix(o, cfg.p_A) * La.transpose();
    XS = normal_matrix(o, cfg.p_S) * Ls.transpose();
  };

  data::MultilevelDataset ds;
  ds.depth = cfg.depth;
  for (Eigen::Index h = 0; h < cfg.p_S; ++h)
    ds.selection_names.push_back("xs" + std::to_string(h + 1));

  auto group_label = [](Eigen::Index i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04ld", static_cast<long>(i + 1));
    return std::string(buf);
  };

  if (!three) {
    for (Eigen::Index i = 0; i < cfg.m; ++i) {
      data::TwoLevelGroup g;
      g.id = group_label(i);
      const auto o = draw_count(cfg.o_rule, rng);
      make_block(o, g.XR, g.XA, g.XS);
      g.Z = g.XR;
      const Vector u = L1 * rng.normal_vector(cfg.p_R);
      g.y = g.XR * cfg.beta_R + g.XA * cfg.beta_A + g.XS * cfg.beta_S + g.Z * u;
      for (Eigen::Index r = 0; r < o; ++r) g.y(r) += err_sd * rng.normal();
      ds.groups.push_back(std::move(g));
    }
  } else {
    for (Eigen::Index i = 0; i < cfg.m; ++i) {
      data::ThreeLevelGroup g;
      g.id = group_label(i);
      const auto n_i = draw_count(cfg.n_rule, rng);
      const Vector u1 = L1 * rng.normal_vector(cfg.p_R);
      for (Eigen::Index j = 0; j < n_i; ++j) {
        data::ThreeLevelSubgroup s;
        s.id = group_label(j);
        const auto o = draw_count(cfg.o_rule, rng);
        make_block(o, s.XR, s.XA, s.XS);
        s.ZL1 = s.XR;
        s.ZL2 = s.XR;
        const Vector u2 = L2 * rng.normal_vector(cfg.Sigma_L2.rows());
        s.y = s.XR * cfg.beta_R + s.XA * cfg.beta_A + s.XS * cfg.beta_S + s.ZL1 * u1 +
              s.ZL2 * u2;
        for (Eigen::Index r = 0; r < o; ++r) s.y(r) += err_sd * rng.normal();
        g.subgroups.push_back(std::move(s));
      }
      ds.groups3.push_back(std::move(g));
    }
  }

  GroundTruth truth;
  truth.beta_R = cfg.beta_R;
  truth.beta_A = cfg.beta_A;
  truth.beta_S = cfg.beta_S;
  truth.sigsq = cfg.sigsq;
  truth.Sigma = cfg.Sigma;
  truth.Sigma_L1 = cfg.Sigma_L1;
  truth.Sigma_L2 = cfg.Sigma_L2;
  for (Eigen::Index h = 0; h < cfg.p_S; ++h)
    truth.nonzero_s.push_back(cfg.beta_S(h) != 0.0 ? 1 : 0);
  return {std::move(ds), std::move(truth)};
}

double accuracy_index(const ClosedFormMarginal& q, const GriddedDensity& p) {
  if (p.grid.size() < 2 || p.grid.size() != p.values.size())
    throw Error(ErrorCode::InvalidArgument, "invalid gridded density");
  const double p_mass = trapezoid(p.grid, p.values);
  if (p_mass < 0.999)
    throw Error(ErrorCode::GridTooNarrow, "estimate grid holds less than 99.9% of its mass");

  // Common grid: the estimate's own nodes merged with equal-mass quantile
  // nodes of the closed form, so arbitrarily spiky marginals stay resolved.
  std::vector<double> nodes(p.grid.data(), p.grid.data() + p.grid.size());
  const int qn = 2001;
  for (int k = 0; k < qn; ++k) {
    const double prob = 1e-6 + (1.0 - 2e-6) * static_cast<double>(k) / (qn - 1);
    nodes.push_back(quantile_of(q, prob));
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  double l1 = 0.0;
  double prev_abs = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double cur_abs = std::abs(pdf_of(q, nodes[i]) - interp_or_zero(p, nodes[i]));
    if (i > 0) l1 += 0.5 * (nodes[i] - nodes[i - 1]) * (cur_abs + prev_abs);
    prev_abs = cur_abs;
  }
  return std::clamp(100.0 * (1.0 - 0.5 * l1), 0.0, 100.0);
}

double accuracy_index(const GriddedDensity& a, const GriddedDensity& b) {
  for (const auto* d : {&a, &b}) {
    if (d->grid.size() < 2 || d->grid.size() != d->values.size())
      throw Error(ErrorCode::InvalidArgument, "invalid gridded density");
    if (trapezoid(d->grid, d->values) < 0.999)
      throw Error(ErrorCode::GridTooNarrow, "grid holds less than 99.9% of its mass");
  }
  const double lo = std::min(a.grid(0), b.grid(0));
  const double hi = std::max(a.grid(a.grid.size() - 1), b.grid(b.grid.size() - 1));
  const Eigen::Index n = 4001;
  double l1 = 0.0;
  double prev = 0.0;
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = lo + step * static_cast<double>(i);
    const double cur = std::abs(interp_or_zero(a, x) - interp_or_zero(b, x));
    if (i > 0) l1 += 0.5 * step * (cur + prev);
    prev = cur;
  }
  return std::clamp(100.0 * (1.0 - 0.5 * l1), 0.0, 100.0);
}

SelectionScore f1_score(const std::vector<int>& gamma, const std::vector<int>& truth_nonzero) {
  if (gamma.size() != truth_nonzero.size())
    throw Error(ErrorCode::DimensionMismatch, "selector and truth lengths differ");
  SelectionScore s;
  for (std::size_t h = 0; h < gamma.size(); ++h) {
    const bool sel = gamma[h] != 0;
    const bool sig = truth_nonzero[h] != 0;
    s.tp += sel && sig;
    s.fp += sel && !sig;
    s.tn += !sel && !sig;
    s.fn += !sel && sig;
  }
  if (s.tp == 0 && s.fp == 0 && s.fn == 0) {
    s.precision = s.recall = 1.0;
    s.f1 = 100.0;
    return s;
  }
  s.precision = (s.tp + s.fp) > 0 ? static_cast<double>(s.tp) / (s.tp + s.fp) : 0.0;
  s.recall = (s.tp + s.fn) > 0 ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
  s.f1 = (s.precision + s.recall) > 0
             ? 200.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

std::pair<std::size_t, std::size_t> input_storage_bytes(const data::MultilevelDataset& ds) {
  const auto p = ds.p();
  const std::size_t n = static_cast<std::size_t>(ds.total_obs());
  std::size_t streamlined = 0;
  std::size_t zcols = 0;
  if (ds.depth == data::Depth::Two) {
    zcols = static_cast<std::size_t>(ds.m()) * static_cast<std::size_t>(ds.q());
    for (const auto& g : ds.groups)
      streamlined += static_cast<std::size_t>(g.y.size()) *
                     (1 + static_cast<std::size_t>(p) + static_cast<std::size_t>(ds.q()));
  } else {
    std::size_t total_sub = 0;
    for (const auto& g : ds.groups3) total_sub += g.subgroups.size();
    zcols = static_cast<std::size_t>(ds.m()) * static_cast<std::size_t>(ds.q1()) +
            total_sub * static_cast<std::size_t>(ds.q2());
    for (const auto& g : ds.groups3)
      for (const auto& s : g.subgroups)
        streamlined += static_cast<std::size_t>(s.y.size()) *
                       (1 + static_cast<std::size_t>(p) + static_cast<std::size_t>(ds.q1()) +
                        static_cast<std::size_t>(ds.q2()));
  }
  const std::size_t naive = n * (1 + static_cast<std::size_t>(p) + zcols);
  return {streamlined * sizeof(double), naive * sizeof(double)};
}

BenchResult bench(const data::MultilevelDataset& ds, const model::PriorSpec& prior,
                  const BenchOptions& opts) {
  if (opts.sweeps < 1) throw Error(ErrorCode::InvalidArgument, "sweeps must be at least 1");
  BenchResult out;
  out.sweeps = opts.sweeps;
  auto [sb, nb] = input_storage_bytes(ds);
  out.streamlined_input_bytes = sb;
  out.naive_input_bytes = nb;
  out.input_ratio = static_cast<double>(nb) / static_cast<double>(sb);

  model::FitOptions fo;
  fo.max_iters = opts.sweeps;
  fo.rel_change_tol = 0.0;
  fo.track_trace = false;

  fo.mode = model::Mode::Streamlined;
  out.streamlined_seconds = model::fit(ds, prior, fo).wall_seconds;

  Eigen::Index dim = ds.p();
  if (ds.depth == data::Depth::Two) {
    dim += ds.m() * ds.q();
  } else {
    dim += ds.m() * ds.q1();
    for (auto c : ds.subgroup_counts()) dim += c * ds.q2();
  }
  if (dim > opts.naive_guard && !opts.force_naive) {
    out.naive_skipped = true;
    // Input-traffic lower bound on the unmeasured naive time.
    out.time_ratio = out.input_ratio;
    return out;
  }
  fo.mode = model::Mode::Naive;
  out.naive_seconds = model::fit(ds, prior, fo).wall_seconds;
  out.time_ratio = out.naive_seconds / out.streamlined_seconds;
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "median of empty set");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

ReplicateReport run_replicate(const EvalConfig& cfg, int r) {
  ReplicateReport rep;
  rep.seed = cfg.seed + static_cast<std::uint64_t>(r);
  auto [raw, truth] = simulate(cfg.sim, rep.seed);
  const Vector norms_original = data::selection_column_norms_sq(raw);
  std::tie(rep.streamlined_input_bytes, rep.naive_input_bytes) = input_storage_bytes(raw);

  data::MultilevelDataset ds_fit;
  data::StandardizationRecord record;
  if (cfg.standardize && raw.p_S() > 0) {
    std::tie(ds_fit, record) = data::standardize_selection_columns(raw);
  } else {
    ds_fit = raw;
    record.mean = Vector::Zero(raw.p_S());
    record.sd = Vector::Ones(raw.p_S());
    record.names = raw.selection_names;
  }
  const Vector norms_fit = data::selection_column_norms_sq(ds_fit);

  std::optional<model::FitResult> first_fit;
  for (const auto family : cfg.priors) {
    auto prior = model::PriorSpec::diffuse(ds_fit, family);
    prior.neg_shape = cfg.neg_shape;
    auto result = model::fit(ds_fit, prior, cfg.fit);
    const std::string name = model::prior_family_name(family);
    rep.fit_seconds[name] = result.wall_seconds;
    rep.fit_iterations[name] = result.iterations;

    Vector mu_s = result.state.mu_beta.tail(ds_fit.p_S());
    savs::SelectionResult sel;
    if (cfg.savs_original_scale && cfg.standardize) {
      const Vector mu_original = mu_s.cwiseQuotient(record.sd);
      sel = savs::select(mu_original, norms_original);
    } else {
      sel = savs::select(mu_s, norms_fit);
    }
    rep.selection[name] = f1_score(sel.gamma, truth.nonzero_s);
    if (!first_fit) first_fit = std::move(result);
  }

  if (cfg.with_mcmc && first_fit) {
    auto prior = model::PriorSpec::diffuse(ds_fit, cfg.priors.front());
    prior.neg_shape = cfg.neg_shape;
    gibbs::GibbsOptions gopt = cfg.mcmc;
    gopt.seed = cfg.mcmc.seed + 7919u * static_cast<std::uint64_t>(r) + 1u;
    const auto samples = gibbs::gibbs_fit(ds_fit, prior, gopt);
    const auto& st = first_fit->state;

    auto add_accuracy = [&](const std::string& name, const ClosedFormMarginal& q,
                            const Vector& draws) {
      const auto kde = gibbs::kde_marginal(draws, cfg.accuracy_grid);
      rep.accuracy[name] = accuracy_index(q, {kde.grid, kde.density});
    };
    const auto p = ds_fit.p();
    for (Eigen::Index k = 0; k < p; ++k) {
      std::string name;
      if (k < st.p_R)
        name = "betaR" + std::to_string(k + 1);
      else if (k < st.p_R + st.p_A)
        name = "betaA" + std::to_string(k - st.p_R + 1);
      else
        name = "betaS" + std::to_string(k - st.p_R - st.p_A + 1);
      add_accuracy(name, GaussianMarginal{st.mu_beta(k), std::sqrt(st.Sigma_beta(k, k))},
                   samples.beta.col(k));
    }
    // Tracked random-effect coordinates, in the sampler's storage order.
    Eigen::Index col = 0;
    const auto g_track = std::min<Eigen::Index>(gopt.track_level1_groups, ds_fit.m());
    for (Eigen::Index i = 0; i < g_track; ++i) {
      for (Eigen::Index k = 0; k < st.q1; ++k, ++col)
        add_accuracy(samples.u_names[static_cast<std::size_t>(col)],
                     GaussianMarginal{st.mu_u[static_cast<std::size_t>(i)](k),
                                      std::sqrt(st.Sigma_u[static_cast<std::size_t>(i)](k, k))},
                     samples.u.col(col));
      if (ds_fit.depth == data::Depth::Three) {
        const auto s_track = std::min<Eigen::Index>(
            gopt.track_level2_subgroups,
            static_cast<Eigen::Index>(
                ds_fit.groups3[static_cast<std::size_t>(i)].subgroups.size()));
        for (Eigen::Index j = 0; j < s_track; ++j)
          for (Eigen::Index k = 0; k < st.q2; ++k, ++col)
            add_accuracy(
                samples.u_names[static_cast<std::size_t>(col)],
                GaussianMarginal{
                    st.mu_u2[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](k),
                    std::sqrt(st.Sigma_u2[static_cast<std::size_t>(i)]
                                         [static_cast<std::size_t>(j)](k, k))},
                samples.u.col(col));
      }
    }
    add_accuracy("sigsq", InvChiSqMarginal{st.xi_sigsq, st.lambda_sigsq}, samples.sigsq);
    if (cfg.priors.front() != PriorFamily::Gaussian)
      add_accuracy("tausq", InvChiSqMarginal{st.xi_tausq, st.lambda_tausq}, samples.tausq);
    for (Eigen::Index k = 0; k < st.q1; ++k)
      add_accuracy("Sigma1_" + std::to_string(k + 1) + std::to_string(k + 1),
                   InvChiSqMarginal{st.xi_Sigma1 - 2.0 * st.q1 + 2.0, st.Lambda_Sigma1(k, k)},
                   samples.Sigma1.col(k * st.q1 + k));
    if (ds_fit.depth == data::Depth::Three)
      for (Eigen::Index k = 0; k < st.q2; ++k)
        add_accuracy("Sigma2_" + std::to_string(k + 1) + std::to_string(k + 1),
                     InvChiSqMarginal{st.xi_Sigma2 - 2.0 * st.q2 + 2.0, st.Lambda_Sigma2(k, k)},
                     samples.Sigma2.col(k * st.q2 + k));
  }
  return rep;
}

}  // namespace

EvalReport evaluate(const EvalConfig& cfg) {
  if (cfg.replicates < 1) throw Error(ErrorCode::ConfigError, "replicates must be at least 1");
  if (cfg.priors.empty()) throw Error(ErrorCode::ConfigError, "at least one prior required");
  EvalReport report;
  report.config = cfg;
  report.replicates.resize(static_cast<std::size_t>(cfg.replicates));

  unsigned workers = cfg.max_workers > 0 ? static_cast<unsigned>(cfg.max_workers)
                                         : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(cfg.replicates)));

  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&](unsigned w) {
    for (int r = static_cast<int>(w); r < cfg.replicates; r += static_cast<int>(workers)) {
      try {
        report.replicates[static_cast<std::size_t>(r)] = run_replicate(cfg, r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (const auto family : cfg.priors) {
    const std::string name = model::prior_family_name(family);
    std::vector<double> f1s;
    for (const auto& rep : report.replicates) f1s.push_back(rep.selection.at(name).f1);
    report.median_f1[name] = median(std::move(f1s));
  }
  return report;
}

}  // namespace vblmm::sim
