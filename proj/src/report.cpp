#include "vblmm/report.hpp"

#include <json.hpp>
#include <sstream>

#include "vblmm/savs.hpp"

namespace vblmm::report {

using data::Matrix;
using data::Vector;
using model::PriorFamily;

namespace {

using json = nlohmann::json;

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid ") + what + ": " + e.what());
  }
}

Matrix matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty())
    throw Error(ErrorCode::ConfigError, std::string(what) + " must be a nested array");
  const auto rows = j.size();
  const auto cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols)
      throw Error(ErrorCode::ConfigError, std::string(what) + " rows differ in length");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::ConfigError, std::string(what) + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

sim::IntRule int_rule_from_json(const json& j, const char* what) {
  if (j.is_number_integer() || j.is_number_unsigned())
    return sim::IntRule::fixed(j.get<Eigen::Index>());
  if (j.is_object() && j.contains("lo") && j.contains("hi"))
    return sim::IntRule::uniform(j["lo"].get<Eigen::Index>(), j["hi"].get<Eigen::Index>());
  throw Error(ErrorCode::ConfigError,
              std::string(what) + " must be an integer or {\"lo\":..,\"hi\":..}");
}

json int_rule_to_json(const sim::IntRule& r) {
  if (r.lo == r.hi) return json(r.lo);
  return json{{"lo", r.lo}, {"hi", r.hi}};
}

model::PriorSpec prior_from_parsed(const json& j, const data::MultilevelDataset& ds) {
  const auto family = model::prior_family_from_name(j.value("family", "horseshoe"));
  auto prior = model::PriorSpec::diffuse(ds, family);
  try {
    prior.neg_shape = j.value("neg_shape", prior.neg_shape);
    if (j.contains("mu_betaR")) prior.mu_betaR = vector_from_json(j["mu_betaR"], "mu_betaR");
    if (j.contains("mu_betaA")) prior.mu_betaA = vector_from_json(j["mu_betaA"], "mu_betaA");
    if (j.contains("mu_betaS")) prior.mu_betaS = vector_from_json(j["mu_betaS"], "mu_betaS");
    if (j.contains("Sigma_betaR"))
      prior.Sigma_betaR = matrix_from_json(j["Sigma_betaR"], "Sigma_betaR");
    if (j.contains("Sigma_betaA"))
      prior.Sigma_betaA = matrix_from_json(j["Sigma_betaA"], "Sigma_betaA");
    if (j.contains("Sigma_betaS"))
      prior.Sigma_betaS = matrix_from_json(j["Sigma_betaS"], "Sigma_betaS");
    prior.nu_sigsq = j.value("nu_sigsq", prior.nu_sigsq);
    prior.s_sigsq = j.value("s_sigsq", prior.s_sigsq);
    prior.s_tausq = j.value("s_tausq", prior.s_tausq);
    prior.nu_Sigma = j.value("nu_Sigma", prior.nu_Sigma);
    if (j.contains("s_Sigma")) prior.s_Sigma = vector_from_json(j["s_Sigma"], "s_Sigma");
    prior.nu_SigmaL1 = j.value("nu_SigmaL1", prior.nu_SigmaL1);
    prior.nu_SigmaL2 = j.value("nu_SigmaL2", prior.nu_SigmaL2);
    if (j.contains("s_SigmaL1")) prior.s_SigmaL1 = vector_from_json(j["s_SigmaL1"], "s_SigmaL1");
    if (j.contains("s_SigmaL2")) prior.s_SigmaL2 = vector_from_json(j["s_SigmaL2"], "s_SigmaL2");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid prior: ") + e.what());
  }
  prior.validate(ds);
  return prior;
}

json prior_to_json(const model::PriorSpec& p, data::Depth depth) {
  json j{{"family", model::prior_family_name(p.family)},
         {"nu_sigsq", p.nu_sigsq},
         {"s_sigsq", p.s_sigsq},
         {"s_tausq", p.s_tausq},
         {"mu_betaR", to_json(p.mu_betaR)},
         {"mu_betaA", to_json(p.mu_betaA)},
         {"Sigma_betaR", to_json(p.Sigma_betaR)},
         {"Sigma_betaA", to_json(p.Sigma_betaA)}};
  if (p.family == PriorFamily::Neg) j["neg_shape"] = p.neg_shape;
  if (p.family == PriorFamily::Gaussian) {
    j["mu_betaS"] = to_json(p.mu_betaS);
    j["Sigma_betaS"] = to_json(p.Sigma_betaS);
  }
  if (depth == data::Depth::Two) {
    j["nu_Sigma"] = p.nu_Sigma;
    j["s_Sigma"] = to_json(p.s_Sigma);
  } else {
    j["nu_SigmaL1"] = p.nu_SigmaL1;
    j["s_SigmaL1"] = to_json(p.s_SigmaL1);
    j["nu_SigmaL2"] = p.nu_SigmaL2;
    j["s_SigmaL2"] = to_json(p.s_SigmaL2);
  }
  return j;
}

model::FitOptions fit_options_from_parsed(const json& j) {
  model::FitOptions o;
  o.max_iters = j.value("max_iters", o.max_iters);
  o.rel_change_tol = j.value("tol", o.rel_change_tol);
  o.track_trace = j.value("track_trace", o.track_trace);
  const std::string mode = j.value("mode", "streamlined");
  if (mode == "streamlined")
    o.mode = model::Mode::Streamlined;
  else if (mode == "naive")
    o.mode = model::Mode::Naive;
  else
    throw Error(ErrorCode::ConfigError, "mode must be 'streamlined' or 'naive'");
  return o;
}

json fit_options_to_json(const model::FitOptions& o) {
  return json{{"max_iters", o.max_iters},
              {"tol", o.rel_change_tol},
              {"mode", o.mode == model::Mode::Streamlined ? "streamlined" : "naive"},
              {"track_trace", o.track_trace}};
}

sim::SimConfig sim_config_from_parsed(const json& j) {
  sim::SimConfig cfg;
  const std::string design = j.value("design", "");
  if (design == "sparse_benchmark") {
    cfg = sim::SimConfig::sparse_benchmark(
        j.value("m", Eigen::Index{20}),
        j.contains("n") && j["n"].is_number() ? j["n"].get<Eigen::Index>() : 5,
        j.contains("o") && j["o"].is_number() ? j["o"].get<Eigen::Index>() : 10,
        j.value("p_S", Eigen::Index{50}));
    if (j.contains("n")) cfg.n_rule = int_rule_from_json(j["n"], "n");
    if (j.contains("o")) cfg.o_rule = int_rule_from_json(j["o"], "o");
    return cfg;
  }
  if (!design.empty())
    throw Error(ErrorCode::ConfigError, "unknown design '" + design + "'");
  const std::string depth = j.value("depth", "three");
  if (depth == "two")
    cfg.depth = data::Depth::Two;
  else if (depth == "three")
    cfg.depth = data::Depth::Three;
  else
    throw Error(ErrorCode::ConfigError, "depth must be 'two' or 'three'");
  cfg.m = j.value("m", cfg.m);
  if (j.contains("n")) cfg.n_rule = int_rule_from_json(j["n"], "n");
  if (j.contains("o")) cfg.o_rule = int_rule_from_json(j["o"], "o");
  cfg.p_R = j.value("p_R", cfg.p_R);
  cfg.p_A = j.value("p_A", cfg.p_A);
  cfg.p_S = j.value("p_S", cfg.p_S);
  cfg.sigsq = j.value("sigsq", cfg.sigsq);
  cfg.wishart_covariates = j.value("wishart_covariates", true);
  cfg.beta_R = j.contains("beta_R") ? vector_from_json(j["beta_R"], "beta_R")
                                    : Vector::Zero(cfg.p_R);
  cfg.beta_A = j.contains("beta_A") ? vector_from_json(j["beta_A"], "beta_A")
                                    : Vector::Zero(cfg.p_A);
  cfg.beta_S = j.contains("beta_S") ? vector_from_json(j["beta_S"], "beta_S")
                                    : Vector::Zero(cfg.p_S);
  if (cfg.depth == data::Depth::Two) {
    cfg.Sigma = j.contains("Sigma") ? matrix_from_json(j["Sigma"], "Sigma")
                                    : Matrix(Matrix::Identity(cfg.p_R, cfg.p_R));
  } else {
    cfg.Sigma_L1 = j.contains("Sigma_L1") ? matrix_from_json(j["Sigma_L1"], "Sigma_L1")
                                          : Matrix(Matrix::Identity(cfg.p_R, cfg.p_R));
    cfg.Sigma_L2 = j.contains("Sigma_L2") ? matrix_from_json(j["Sigma_L2"], "Sigma_L2")
                                          : Matrix(Matrix::Identity(cfg.p_R, cfg.p_R));
  }
  return cfg;
}

json sim_config_to_json(const sim::SimConfig& cfg) {
  json j{{"depth", cfg.depth == data::Depth::Two ? "two" : "three"},
         {"m", cfg.m},
         {"n", int_rule_to_json(cfg.n_rule)},
         {"o", int_rule_to_json(cfg.o_rule)},
         {"p_R", cfg.p_R},
         {"p_A", cfg.p_A},
         {"p_S", cfg.p_S},
         {"sigsq", cfg.sigsq},
         {"wishart_covariates", cfg.wishart_covariates},
         {"beta_R", to_json(cfg.beta_R)},
         {"beta_A", to_json(cfg.beta_A)},
         {"beta_S", to_json(cfg.beta_S)}};
  if (cfg.depth == data::Depth::Two)
    j["Sigma"] = to_json(cfg.Sigma);
  else {
    j["Sigma_L1"] = to_json(cfg.Sigma_L1);
    j["Sigma_L2"] = to_json(cfg.Sigma_L2);
  }
  return j;
}

sim::EvalConfig eval_config_from_parsed(const json& j) {
  sim::EvalConfig cfg;
  if (!j.contains("sim")) throw Error(ErrorCode::ConfigError, "eval config requires 'sim'");
  cfg.sim = sim_config_from_parsed(j["sim"]);
  cfg.replicates = j.value("replicates", cfg.replicates);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.neg_shape = j.value("neg_shape", cfg.neg_shape);
  if (j.contains("priors")) {
    cfg.priors.clear();
    for (const auto& name : j["priors"])
      cfg.priors.push_back(model::prior_family_from_name(name.get<std::string>()));
  }
  if (j.contains("fit")) cfg.fit = fit_options_from_parsed(j["fit"]);
  cfg.standardize = j.value("standardize", cfg.standardize);
  cfg.savs_original_scale = j.value("savs_original_scale", cfg.savs_original_scale);
  cfg.with_mcmc = j.value("with_mcmc", cfg.with_mcmc);
  if (j.contains("mcmc")) {
    const auto& m = j["mcmc"];
    cfg.mcmc.iters = m.value("iters", cfg.mcmc.iters);
    cfg.mcmc.warmup = m.value("warmup", cfg.mcmc.warmup);
    cfg.mcmc.thin = m.value("thin", cfg.mcmc.thin);
    cfg.mcmc.seed = m.value("seed", cfg.mcmc.seed);
    cfg.mcmc.track_level1_groups = m.value("track_level1_groups", cfg.mcmc.track_level1_groups);
    cfg.mcmc.track_level2_subgroups =
        m.value("track_level2_subgroups", cfg.mcmc.track_level2_subgroups);
  }
  cfg.accuracy_grid = j.value("accuracy_grid", cfg.accuracy_grid);
  cfg.max_workers = j.value("max_workers", cfg.max_workers);
  return cfg;
}

json eval_config_to_json(const sim::EvalConfig& cfg) {
  json priors = json::array();
  for (auto f : cfg.priors) priors.push_back(model::prior_family_name(f));
  return json{{"sim", sim_config_to_json(cfg.sim)},
              {"replicates", cfg.replicates},
              {"seed", cfg.seed},
              {"priors", priors},
              {"neg_shape", cfg.neg_shape},
              {"fit", fit_options_to_json(cfg.fit)},
              {"standardize", cfg.standardize},
              {"savs_original_scale", cfg.savs_original_scale},
              {"with_mcmc", cfg.with_mcmc},
              {"mcmc",
               json{{"iters", cfg.mcmc.iters},
                    {"warmup", cfg.mcmc.warmup},
                    {"thin", cfg.mcmc.thin},
                    {"seed", cfg.mcmc.seed},
                    {"track_level1_groups", cfg.mcmc.track_level1_groups},
                    {"track_level2_subgroups", cfg.mcmc.track_level2_subgroups}}},
              {"accuracy_grid", cfg.accuracy_grid},
              {"max_workers", cfg.max_workers}};
}

json summaries_to_json(const std::vector<data::CoefficientSummary>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back(json{{"name", r.name},
                       {"mean", r.mean},
                       {"sd", r.sd},
                       {"lower", r.lower},
                       {"upper", r.upper}});
  return out;
}

json selection_to_json(const savs::SelectionResult& sel, const char* scale) {
  json gamma = json::array();
  for (int g : sel.gamma) gamma.push_back(g);
  return json{{"scale", scale},
              {"gamma", gamma},
              {"mu_star", to_json(sel.mu_star)},
              {"norm_sq", to_json(sel.norm_sq)}};
}

json score_to_json(const sim::SelectionScore& s) {
  return json{{"tp", s.tp},       {"fp", s.fp},           {"tn", s.tn},
              {"fn", s.fn},       {"precision", s.precision}, {"recall", s.recall},
              {"f1", s.f1}};
}

}  // namespace

model::PriorSpec prior_from_json(const std::string& text, const data::MultilevelDataset& ds) {
  return prior_from_parsed(parse(text, "prior config"), ds);
}

model::FitOptions fit_options_from_json(const std::string& text) {
  return fit_options_from_parsed(parse(text, "fit options"));
}

sim::SimConfig sim_config_from_json(const std::string& text) {
  return sim_config_from_parsed(parse(text, "sim config"));
}

sim::EvalConfig eval_config_from_json(const std::string& text) {
  return eval_config_from_parsed(parse(text, "eval config"));
}

std::string run_fit(const data::MultilevelDataset& ds, const std::string& config_json) {
  const json cfg = parse(config_json, "fit config");
  const bool standardize = cfg.value("standardize", true) && ds.p_S() > 0;
  const bool savs_original = cfg.contains("savs")
                                 ? cfg["savs"].value("original_scale", true)
                                 : true;
  const double level = cfg.value("credible_level", 0.90);

  const Vector norms_original = data::selection_column_norms_sq(ds);
  data::MultilevelDataset ds_fit;
  data::StandardizationRecord record;
  if (standardize) {
    std::tie(ds_fit, record) = data::standardize_selection_columns(ds);
  } else {
    ds_fit = ds;
  }
  const auto& active = standardize ? ds_fit : ds;

  const auto prior = prior_from_parsed(cfg.contains("prior") ? cfg["prior"] : json::object(),
                                       active);
  const auto opts =
      fit_options_from_parsed(cfg.contains("fit") ? cfg["fit"] : json::object());
  auto result = model::fit(active, prior, opts);
  auto summaries = model::posterior_summaries(result.state, level);

  // Selection-block summaries mapped back to the original covariate scale.
  const auto pS = active.p_S();
  std::vector<data::CoefficientSummary> beta_s(summaries.beta.end() - pS, summaries.beta.end());
  if (standardize) {
    auto original = data::destandardize_coefficients(beta_s, record);
    std::copy(original.begin(), original.end(), summaries.beta.end() - pS);
  }

  json doc{{"schema_version", kSchemaVersion},
           {"kind", "fit_result"},
           {"prior", prior_to_json(prior, active.depth)},
           {"options", fit_options_to_json(opts)},
           {"standardize", standardize},
           {"credible_level", level},
           {"iterations", result.iterations},
           {"converged", result.converged},
           {"wall_seconds", result.wall_seconds},
           {"storage_bytes", result.storage_bytes},
           {"trace", result.trace}};
  doc["posterior"] = json{{"beta", summaries_to_json(summaries.beta)},
                          {"u", summaries_to_json(summaries.u)}};

  const auto& st = result.state;
  json variance{{"sigsq", json{{"xi", st.xi_sigsq}, {"lambda", st.lambda_sigsq}}}};
  if (prior.family != PriorFamily::Gaussian && pS > 0)
    variance["tausq"] = json{{"xi", st.xi_tausq}, {"lambda", st.lambda_tausq}};
  if (active.depth == data::Depth::Two) {
    variance["Sigma"] = json{{"xi", st.xi_Sigma1},
                             {"Lambda", to_json(st.Lambda_Sigma1)},
                             {"mean", to_json(Matrix(st.Lambda_Sigma1 /
                                                     (st.xi_Sigma1 - 2.0 * st.q1)))}};
  } else {
    variance["SigmaL1"] = json{{"xi", st.xi_Sigma1},
                               {"Lambda", to_json(st.Lambda_Sigma1)},
                               {"mean", to_json(Matrix(st.Lambda_Sigma1 /
                                                       (st.xi_Sigma1 - 2.0 * st.q1)))}};
    variance["SigmaL2"] = json{{"xi", st.xi_Sigma2},
                               {"Lambda", to_json(st.Lambda_Sigma2)},
                               {"mean", to_json(Matrix(st.Lambda_Sigma2 /
                                                       (st.xi_Sigma2 - 2.0 * st.q2)))}};
  }
  doc["variance"] = variance;

  if (pS > 0) {
    Vector mu_s = st.mu_beta.tail(pS);
    savs::SelectionResult sel;
    const char* scale;
    if (standardize && savs_original) {
      sel = savs::select(Vector(mu_s.cwiseQuotient(record.sd)), norms_original);
      scale = "original";
    } else {
      sel = savs::select(mu_s, data::selection_column_norms_sq(active));
      scale = standardize ? "standardized" : "original";
    }
    doc["selection"] = selection_to_json(sel, scale);
  }
  if (standardize) {
    doc["standardization"] = json{{"names", record.names},
                                  {"mean", to_json(record.mean)},
                                  {"sd", to_json(record.sd)}};
  } else {
    doc["standardization"] = nullptr;
  }
  return doc.dump(2);
}

std::string truth_json(const sim::GroundTruth& truth, const data::CsvSchema& schema,
                       std::uint64_t seed) {
  json doc{{"schema_version", kSchemaVersion},
           {"kind", "ground_truth"},
           {"seed", seed},
           {"beta_R", to_json(truth.beta_R)},
           {"beta_A", to_json(truth.beta_A)},
           {"beta_S", to_json(truth.beta_S)},
           {"sigsq", truth.sigsq},
           {"nonzero_s", truth.nonzero_s},
           {"schema", json::parse(schema.to_json_text())}};
  if (truth.Sigma.size() > 0) doc["Sigma"] = to_json(truth.Sigma);
  if (truth.Sigma_L1.size() > 0) doc["Sigma_L1"] = to_json(truth.Sigma_L1);
  if (truth.Sigma_L2.size() > 0) doc["Sigma_L2"] = to_json(truth.Sigma_L2);
  return doc.dump(2);
}

std::string run_evaluate(const std::string& config_json) {
  const auto cfg = eval_config_from_json(config_json);
  const auto report = sim::evaluate(cfg);
  json reps = json::array();
  for (const auto& rep : report.replicates) {
    json selection = json::object();
    for (const auto& [name, score] : rep.selection) selection[name] = score_to_json(score);
    json acc = json::object();
    for (const auto& [name, value] : rep.accuracy) acc[name] = value;
    reps.push_back(json{{"seed", rep.seed},
                        {"selection", selection},
                        {"fit_seconds", rep.fit_seconds},
                        {"fit_iterations", rep.fit_iterations},
                        {"accuracy", acc},
                        {"memory",
                         json{{"streamlined_mb", rep.streamlined_input_bytes / 1048576.0},
                              {"naive_mb", rep.naive_input_bytes / 1048576.0},
                              {"ratio", static_cast<double>(rep.naive_input_bytes) /
                                            static_cast<double>(rep.streamlined_input_bytes)}}}});
  }
  json doc{{"schema_version", kSchemaVersion},
           {"kind", "eval_report"},
           {"config", eval_config_to_json(cfg)},
           {"replicates", reps},
           {"median_f1", report.median_f1}};
  return doc.dump(2);
}

std::string run_bench(const std::string& config_json) {
  const json cfg = parse(config_json, "bench config");
  std::vector<Eigen::Index> m_values;
  for (const auto& v : cfg.value("m", json::array({10})))
    m_values.push_back(v.get<Eigen::Index>());
  std::vector<Eigen::Index> ps_values;
  for (const auto& v : cfg.value("p_S", json::array({25})))
    ps_values.push_back(v.get<Eigen::Index>());
  if (m_values.empty() || ps_values.empty())
    throw Error(ErrorCode::ConfigError, "bench grid is empty");

  sim::BenchOptions bopt;
  bopt.sweeps = cfg.value("sweeps", 10);
  bopt.force_naive = cfg.value("force", false);
  bopt.naive_guard = cfg.value("naive_guard", Eigen::Index{5000});
  const auto seed = cfg.value("seed", std::uint64_t{1});
  const auto family = model::prior_family_from_name(cfg.value("prior", "horseshoe"));

  json rows = json::array();
  for (const auto m : m_values) {
    for (const auto ps : ps_values) {
      sim::SimConfig sc = sim::SimConfig::sparse_benchmark(m, 1, 1, ps);
      sc.n_rule = cfg.contains("n") ? int_rule_from_json(cfg["n"], "n")
                                    : sim::IntRule::uniform(10, 20);
      sc.o_rule = cfg.contains("o") ? int_rule_from_json(cfg["o"], "o")
                                    : sim::IntRule::uniform(20, 30);
      auto [ds, truth] = sim::simulate(sc, seed + static_cast<std::uint64_t>(m * 1000 + ps));
      auto prior = model::PriorSpec::diffuse(ds, family);
      const auto res = sim::bench(ds, prior, bopt);
      rows.push_back(json{{"m", m},
                          {"p_S", ps},
                          {"sweeps", res.sweeps},
                          {"streamlined_seconds", res.streamlined_seconds},
                          {"naive_seconds", res.naive_seconds},
                          {"naive_skipped", res.naive_skipped},
                          {"time_ratio", res.time_ratio},
                          {"streamlined_mb", res.streamlined_input_bytes / 1048576.0},
                          {"naive_mb", res.naive_input_bytes / 1048576.0},
                          {"memory_ratio", res.input_ratio}});
    }
  }
  json doc{{"schema_version", kSchemaVersion}, {"kind", "bench_report"}, {"rows", rows}};
  return doc.dump(2);
}

std::string bench_report_csv(const std::string& report_json) {
  const json doc = parse(report_json, "bench report");
  std::ostringstream out;
  out << "m,p_S,sweeps,streamlined_seconds,naive_seconds,naive_skipped,time_ratio,"
         "streamlined_mb,naive_mb,memory_ratio\n";
  out.precision(17);
  for (const auto& row : doc.at("rows")) {
    out << row.at("m").get<long>() << ',' << row.at("p_S").get<long>() << ','
        << row.at("sweeps").get<int>() << ',' << row.at("streamlined_seconds").get<double>()
        << ',' << row.at("naive_seconds").get<double>() << ','
        << (row.at("naive_skipped").get<bool>() ? 1 : 0) << ','
        << row.at("time_ratio").get<double>() << ','
        << row.at("streamlined_mb").get<double>() << ',' << row.at("naive_mb").get<double>()
        << ',' << row.at("memory_ratio").get<double>() << '\n';
  }
  return out.str();
}

}  // namespace vblmm::report
