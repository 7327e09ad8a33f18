// Batch front end over the C API: fit, simulate, evaluate, bench.
//
// Each subcommand takes a JSON config file (--config); a handful of flags
// override config fields so one file can drive several runs.  Exit codes:
// 0 success, 2 configuration/input error, 3 numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vblmm.h"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int exit_code_of(vblmm_status status) {
  switch (status) {
    case VBLMM_OK:
      return 0;
    case VBLMM_ERR_NUMERIC:
      return kExitNumeric;
    default:
      return kExitConfig;
  }
}

int fail(vblmm_status status) {
  std::cerr << "vblmm: error (" << vblmm_status_name(status) << "): " << vblmm_last_error()
            << '\n';
  return exit_code_of(status);
}

std::optional<json> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "vblmm: error: cannot open config '" << path << "'\n";
    return std::nullopt;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    std::cerr << "vblmm: error: invalid config JSON: " << e.what() << '\n';
    return std::nullopt;
  }
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) {
    std::cerr << "vblmm: error: cannot write '" << path << "'\n";
    return false;
  }
  return true;
}

struct Overrides {
  std::optional<std::string> mode, prior;
  std::optional<double> neg_lambda, tol;
  std::optional<int> iters;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool force = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "Update mode: streamlined or naive");
    cmd->add_option("--prior", prior, "Prior family: gaussian, laplace, horseshoe, neg");
    cmd->add_option("--neg-lambda", neg_lambda, "Shape of the neg prior hierarchy");
    cmd->add_option("--iters", iters, "Maximum number of sweeps");
    cmd->add_option("--tol", tol, "Relative-change stopping tolerance");
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--out", out, "Output path (overrides config)");
    cmd->add_flag("--force", force, "Allow the naive mode above the size guard");
  }

  void apply_fit_block(json& cfg) const {
    if (mode) cfg["fit"]["mode"] = *mode;
    if (iters) cfg["fit"]["max_iters"] = *iters;
    if (tol) cfg["fit"]["tol"] = *tol;
  }
  void apply_prior_block(json& cfg) const {
    if (prior) cfg["prior"]["family"] = *prior;
    if (neg_lambda) cfg["prior"]["neg_shape"] = *neg_lambda;
  }
  std::string out_path(const json& cfg, const char* fallback) const {
    if (out) return *out;
    return cfg.value("out", std::string(fallback));
  }
};

int cmd_fit(const std::string& config_path, const Overrides& ov) {
  auto cfg = load_config(config_path);
  if (!cfg) return kExitConfig;
  if (!cfg->contains("data") || !(*cfg)["data"].contains("csv") ||
      !(*cfg)["data"].contains("schema")) {
    std::cerr << "vblmm: error: fit config requires data.csv and data.schema\n";
    return kExitConfig;
  }
  ov.apply_fit_block(*cfg);
  ov.apply_prior_block(*cfg);
  if ((ov.mode && *ov.mode == "naive") ||
      (cfg->contains("fit") && (*cfg)["fit"].value("mode", "") == "naive"))
    std::cerr << "vblmm: warning: naive mode stores the stacked design and inverts the full"
                 " joint covariance every sweep; expect long runtimes on large data\n";

  const std::string csv = (*cfg)["data"]["csv"].get<std::string>();
  const std::string schema = (*cfg)["data"]["schema"].dump();
  vblmm_dataset* ds = nullptr;
  if (auto s = vblmm_dataset_load_csv(csv.c_str(), schema.c_str(), &ds); s != VBLMM_OK)
    return fail(s);

  vblmm_report* report = nullptr;
  const std::string fit_cfg = cfg->dump();
  const auto status = vblmm_fit(ds, fit_cfg.c_str(), &report);
  vblmm_dataset_free(ds);
  if (status != VBLMM_OK) return fail(status);

  const std::string out_path = ov.out_path(*cfg, "fit_result.json");
  const bool ok = write_file(out_path, vblmm_report_json(report));
  vblmm_report_free(report);
  if (!ok) return kExitConfig;
  std::cout << "wrote " << out_path << '\n';
  return 0;
}

int cmd_simulate(const std::string& config_path, const Overrides& ov) {
  auto cfg = load_config(config_path);
  if (!cfg) return kExitConfig;
  if (!cfg->contains("sim")) {
    std::cerr << "vblmm: error: simulate config requires a 'sim' block\n";
    return kExitConfig;
  }
  const std::uint64_t seed = ov.seed ? *ov.seed : cfg->value("seed", std::uint64_t{1});
  const std::string sim_cfg = (*cfg)["sim"].dump();
  vblmm_dataset* ds = nullptr;
  if (auto s = vblmm_dataset_simulate(sim_cfg.c_str(), seed, &ds); s != VBLMM_OK)
    return fail(s);

  const std::string out_path = ov.out_path(*cfg, "simulated.csv");
  if (auto s = vblmm_dataset_write_csv(ds, out_path.c_str()); s != VBLMM_OK) {
    vblmm_dataset_free(ds);
    return fail(s);
  }
  int rc = 0;
  const size_t groups = vblmm_dataset_group_count(ds);
  if (cfg->contains("truth_out")) {
    const char* truth = nullptr;
    if (auto s = vblmm_dataset_truth_json(ds, &truth); s == VBLMM_OK) {
      if (!write_file((*cfg)["truth_out"].get<std::string>(), truth)) rc = kExitConfig;
    } else {
      rc = fail(s);
    }
  }
  vblmm_dataset_free(ds);
  if (rc == 0) std::cout << "wrote " << out_path << " (" << groups << " groups)\n";
  return rc;
}

int cmd_evaluate(const std::string& config_path, const Overrides& ov) {
  auto cfg = load_config(config_path);
  if (!cfg) return kExitConfig;
  if (cfg->value("replicates", 0) < 1) {
    std::cerr << "vblmm: error: evaluate config requires replicates >= 1\n";
    return kExitConfig;
  }
  ov.apply_fit_block(*cfg);
  if (ov.seed) (*cfg)["seed"] = *ov.seed;
  if (ov.prior) (*cfg)["priors"] = json::array({*ov.prior});
  if (ov.neg_lambda) (*cfg)["neg_shape"] = *ov.neg_lambda;

  vblmm_report* report = nullptr;
  const std::string eval_cfg = cfg->dump();
  if (auto s = vblmm_evaluate(eval_cfg.c_str(), &report); s != VBLMM_OK) return fail(s);
  const std::string out_path = ov.out_path(*cfg, "eval_report.json");
  const bool ok = write_file(out_path, vblmm_report_json(report));
  vblmm_report_free(report);
  if (!ok) return kExitConfig;
  std::cout << "wrote " << out_path << '\n';
  return 0;
}

int cmd_bench(const std::string& config_path, const Overrides& ov) {
  auto cfg = load_config(config_path);
  if (!cfg) return kExitConfig;
  if (ov.seed) (*cfg)["seed"] = *ov.seed;
  if (ov.prior) (*cfg)["prior"] = *ov.prior;
  if (ov.iters) (*cfg)["sweeps"] = *ov.iters;
  if (ov.force) (*cfg)["force"] = true;

  vblmm_report* report = nullptr;
  const std::string bench_cfg = cfg->dump();
  if (auto s = vblmm_bench(bench_cfg.c_str(), &report); s != VBLMM_OK) return fail(s);
  const std::string out_path = ov.out_path(*cfg, "bench.csv");
  const char* csv = vblmm_report_csv(report);
  const bool ok = write_file(out_path, csv ? csv : "");
  bool ok2 = true;
  if (cfg->contains("json_out"))
    ok2 = write_file((*cfg)["json_out"].get<std::string>(), vblmm_report_json(report));
  vblmm_report_free(report);
  if (!ok || !ok2) return kExitConfig;
  std::cout << "wrote " << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel mixed-model fitting with variational Bayes and fixed-effects "
               "selection"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  auto* fit = app.add_subcommand("fit", "Fit a model to a CSV dataset");
  fit->add_option("--config", config_path, "JSON config file")->required();
  ov.attach(fit);

  auto* simulate = app.add_subcommand("simulate", "Draw a synthetic dataset");
  simulate->add_option("--config", config_path, "JSON config file")->required();
  ov.attach(simulate);

  auto* evaluate = app.add_subcommand("evaluate", "Replicated simulate/fit/select study");
  evaluate->add_option("--config", config_path, "JSON config file")->required();
  ov.attach(evaluate);

  auto* bench = app.add_subcommand("bench", "Streamlined-versus-naive timing grid");
  bench->add_option("--config", config_path, "JSON config file")->required();
  ov.attach(bench);

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(fit)) return cmd_fit(config_path, ov);
  if (app.got_subcommand(simulate)) return cmd_simulate(config_path, ov);
  if (app.got_subcommand(evaluate)) return cmd_evaluate(config_path, ov);
  if (app.got_subcommand(bench)) return cmd_bench(config_path, ov);
  return kExitConfig;
}
