// End-to-end checks of the command-line front end (runs the built binary).
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef VBLMM_CLI_PATH
#error "VBLMM_CLI_PATH must point at the CLI binary"
#endif

namespace {

using nlohmann::json;

int run(const std::string& args) {
  const std::string cmd = std::string(VBLMM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Cleanup {
  std::vector<std::string> paths;
  ~Cleanup() {
    for (const auto& p : paths) std::remove(p.c_str());
  }
};

}  // namespace

TEST_CASE("simulate then fit round trip with exit code zero") {
  Cleanup files;
  const std::string sim_cfg = "/tmp/vblmm_cli_sim.json";
  const std::string data_csv = "/tmp/vblmm_cli_data.csv";
  const std::string truth_json = "/tmp/vblmm_cli_truth.json";
  const std::string fit_cfg = "/tmp/vblmm_cli_fit.json";
  const std::string fit_out = "/tmp/vblmm_cli_fit_out.json";
  files.paths = {sim_cfg, data_csv, truth_json, fit_cfg, fit_out};

  write_text(sim_cfg, json{{"sim", json{{"design", "sparse_benchmark"},
                                        {"m", 4},
                                        {"n", 2},
                                        {"o", 6},
                                        {"p_S", 5}}},
                           {"seed", 3},
                           {"out", data_csv},
                           {"truth_out", truth_json}}
                          .dump());
  REQUIRE(run("simulate --config " + sim_cfg) == 0);
  const json truth = json::parse(slurp(truth_json));

  write_text(fit_cfg, json{{"data", json{{"csv", data_csv}, {"schema", truth.at("schema")}}},
                           {"prior", json{{"family", "laplace"}}},
                           {"fit", json{{"max_iters", 30}}},
                           {"out", fit_out}}
                          .dump());
  REQUIRE(run("fit --config " + fit_cfg) == 0);
  const json result = json::parse(slurp(fit_out));
  CHECK(result.at("kind") == "fit_result");
  CHECK(result.at("prior").at("family") == "laplace");
  CHECK(result.at("selection").at("gamma").size() == 5);

  SUBCASE("flag overrides replace config fields") {
    REQUIRE(run("fit --config " + fit_cfg + " --prior horseshoe --iters 10 --out " + fit_out) ==
            0);
    const json r2 = json::parse(slurp(fit_out));
    CHECK(r2.at("prior").at("family") == "horseshoe");
    CHECK(r2.at("options").at("max_iters") == 10);
    CHECK(r2.at("iterations").get<int>() <= 10);
  }
  SUBCASE("naive mode emits a runtime warning even when forced") {
    const std::string errfile = "/tmp/vblmm_cli_fit_err.txt";
    files.paths.push_back(errfile);
    const std::string cmd = std::string(VBLMM_CLI_PATH) + " fit --config " + fit_cfg +
                            " --mode naive --force --iters 3 --out " + fit_out +
                            " >/dev/null 2>" + errfile;
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(slurp(errfile).find("naive mode") != std::string::npos);
  }
  SUBCASE("reruns produce identical output apart from timing") {
    const std::string out2 = "/tmp/vblmm_cli_fit_out2.json";
    files.paths.push_back(out2);
    REQUIRE(run("fit --config " + fit_cfg + " --out " + out2) == 0);
    json a = json::parse(slurp(fit_out));
    json b = json::parse(slurp(out2));
    a.erase("wall_seconds");
    b.erase("wall_seconds");
    CHECK(a == b);
  }
}

TEST_CASE("missing input file exits with the configuration code") {
  Cleanup files;
  const std::string cfg = "/tmp/vblmm_cli_missing.json";
  files.paths = {cfg};
  write_text(cfg, json{{"data", json{{"csv", "/nonexistent/data.csv"},
                                     {"schema", json{{"response", "y"},
                                                     {"group_id", "g"},
                                                     {"R", json::array({"x"})}}}}}}
                      .dump());
  CHECK(run("fit --config " + cfg) == 2);
  CHECK(run("fit --config /nonexistent/cfg.json") == 2);
  CHECK(run("evaluate --config " + cfg) == 2);  // replicates missing
}

TEST_CASE("evaluate writes a replicate report") {
  Cleanup files;
  const std::string cfg = "/tmp/vblmm_cli_eval.json";
  const std::string out = "/tmp/vblmm_cli_eval_out.json";
  files.paths = {cfg, out};
  write_text(cfg, json{{"sim", json{{"design", "sparse_benchmark"},
                                    {"m", 4},
                                    {"n", 2},
                                    {"o", 6},
                                    {"p_S", 5}}},
                       {"replicates", 2},
                       {"seed", 8},
                       {"priors", json::array({"horseshoe"})},
                       {"fit", json{{"max_iters", 25}}},
                       {"out", out}}
                      .dump());
  REQUIRE(run("evaluate --config " + cfg) == 0);
  const json doc = json::parse(slurp(out));
  CHECK(doc.at("kind") == "eval_report");
  CHECK(doc.at("replicates").size() == 2);
}

TEST_CASE("bench writes the documented CSV header") {
  Cleanup files;
  const std::string cfg = "/tmp/vblmm_cli_bench.json";
  const std::string out = "/tmp/vblmm_cli_bench.csv";
  files.paths = {cfg, out};
  write_text(cfg, json{{"m", json::array({2})},
                       {"p_S", json::array({3})},
                       {"sweeps", 2},
                       {"n", 2},
                       {"o", 5},
                       {"out", out}}
                      .dump());
  REQUIRE(run("bench --config " + cfg) == 0);
  const std::string csv = slurp(out);
  CHECK(csv.find("m,p_S,sweeps,streamlined_seconds,naive_seconds,naive_skipped,time_ratio,"
                 "streamlined_mb,naive_mb,memory_ratio") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + one row
}
