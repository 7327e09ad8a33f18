// Criterion 3: selection replication at desk scale.  Ten replicates of the
// sparse benchmark design (m=20, n_i=5, o_ij=10, p_S=50, documented true
// values); horseshoe and neg priors must reach median F1 = 100% with zero
// false positives in every replicate, and the gaussian prior's median F1 must
// be strictly lower.  Runtime under 10 minutes.
#include "acceptance_common.hpp"

using namespace acceptance;
using vblmm::model::PriorFamily;

int main() {
  Criterion criterion(3, "automated selection replication at desk scale");
  Stopwatch watch;

  vblmm::sim::EvalConfig cfg;
  cfg.sim = desk_scale_design();
  cfg.replicates = 10;
  cfg.seed = 52000;
  cfg.priors = {PriorFamily::Horseshoe, PriorFamily::Neg, PriorFamily::Gaussian};
  cfg.neg_shape = 0.25;
  cfg.fit.max_iters = 200;
  cfg.fit.rel_change_tol = 1e-3;
  cfg.standardize = true;
  cfg.savs_original_scale = true;

  const auto report = vblmm::sim::evaluate(cfg);

  for (const char* name : {"horseshoe", "neg"}) {
    int max_fp = 0;
    std::vector<double> f1s;
    for (const auto& rep : report.replicates) {
      max_fp = std::max(max_fp, rep.selection.at(name).fp);
      f1s.push_back(rep.selection.at(name).f1);
    }
    const double med = vblmm::sim::median(f1s);
    criterion.check(std::string(name) + " median F1 equals 100", med == 100.0,
                    "median " + format_double(med, 2));
    criterion.check(std::string(name) + " false positives are zero in every replicate",
                    max_fp == 0, "max FP " + std::to_string(max_fp));
  }

  const double gaussian_med = report.median_f1.at("gaussian");
  criterion.check("gaussian median F1 strictly lower than 100", gaussian_med < 100.0,
                  "median " + format_double(gaussian_med, 2));
  criterion.check("runtime under 10 min", watch.seconds() < 600.0,
                  format_double(watch.seconds(), 1) + " s");
  return criterion.finish();
}
