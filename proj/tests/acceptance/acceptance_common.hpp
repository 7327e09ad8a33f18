#pragma once

#include <chrono>
#include <random>
#include <string>
#include <vector>

#include "vblmm/linalg.hpp"
#include "vblmm/sim.hpp"

namespace acceptance {

// Collects named pass/fail checks for one criterion and prints one line per
// check plus a summary line; process exit code reflects the verdict.
class Criterion {
 public:
  Criterion(int number, std::string title);
  void check(const std::string& name, bool ok, const std::string& detail = "");
  void note(const std::string& name, const std::string& detail);  // reported, not gated
  int finish();

 private:
  int number_;
  std::string title_;
  bool all_ok_ = true;
  std::chrono::steady_clock::time_point start_;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Random SPD block-arrow systems with exact sparsity patterns.
vblmm::linalg::TwoLevelSparseSystem random_two_level(Eigen::Index p, Eigen::Index q,
                                                     Eigen::Index m, std::mt19937_64& gen);
vblmm::linalg::ThreeLevelSparseSystem random_three_level(
    Eigen::Index p, Eigen::Index q1, Eigen::Index q2, const std::vector<Eigen::Index>& n_i,
    std::mt19937_64& gen);

// The selection study design at desk scale.
vblmm::sim::SimConfig desk_scale_design();

std::string format_double(double v, int digits = 3);

}  // namespace acceptance
