#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "vblmm/error.hpp"

namespace vblmm::data {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Depth { Two, Three };

/// One group of a two-level design: response block plus the fixed-effects
/// partition (R = paired with the random effects, A = additional, S = subject
/// to selection) and the random-effects design Z.
struct TwoLevelGroup {
  std::string id;
  Vector y;
  Matrix XR, XA, XS;
  Matrix Z;
};

struct ThreeLevelSubgroup {
  std::string id;
  Vector y;
  Matrix XR, XA, XS;
  Matrix ZL1, ZL2;
};

struct ThreeLevelGroup {
  std::string id;
  std::vector<ThreeLevelSubgroup> subgroups;
};

struct MultilevelDataset {
  Depth depth = Depth::Two;
  std::vector<TwoLevelGroup> groups;         // depth == Two
  std::vector<ThreeLevelGroup> groups3;      // depth == Three
  std::vector<std::string> selection_names;  // XS column names

  Eigen::Index m() const;
  Eigen::Index p_R() const;
  Eigen::Index p_A() const;
  Eigen::Index p_S() const;
  Eigen::Index p() const { return p_R() + p_A() + p_S(); }
  Eigen::Index q() const;   // two-level random effects dimension
  Eigen::Index q1() const;  // three-level group dimension
  Eigen::Index q2() const;  // three-level subgroup dimension
  Eigen::Index total_obs() const;
  std::vector<Eigen::Index> subgroup_counts() const;  // n_i, depth Three

  void validate() const;
};

/// Column roles for the long-format CSV loader.  Z columns default to the R
/// block (Z_i = XR_i) when not given explicitly.
struct CsvSchema {
  std::string response;
  std::string group_id;
  std::optional<std::string> subgroup_id;  // present => three-level
  std::vector<std::string> r_cols, a_cols, s_cols;
  std::optional<std::vector<std::string>> z_cols;    // two-level override
  std::optional<std::vector<std::string>> zl1_cols;  // three-level overrides
  std::optional<std::vector<std::string>> zl2_cols;

  static CsvSchema from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// Reads a long-format CSV (UTF-8, header row, comma separated, '.' decimal).
/// Groups/subgroups are ordered deterministically by id (numeric when all ids
/// parse as numbers, lexicographic otherwise).
MultilevelDataset load_csv(const std::string& path, const CsvSchema& schema);

/// Writes a dataset back to the same long format; numeric fields round-trip
/// exactly.  Returns the schema describing the written columns.
CsvSchema write_csv(const MultilevelDataset& ds, const std::string& path);

/// Per-column centering/scaling applied to XS before fitting.
struct StandardizationRecord {
  std::vector<std::string> names;
  Vector mean;
  Vector sd;  // population convention (divide by N)
};

/// Centers and scales every XS column to pooled mean 0, variance 1.
/// Throws Error{ConstantColumn} when a column has zero variance.
std::pair<MultilevelDataset, StandardizationRecord> standardize_selection_columns(
    const MultilevelDataset& ds);

struct CoefficientSummary {
  std::string name;
  double mean = 0, sd = 0, lower = 0, upper = 0;
};

/// Maps selection-coefficient summaries fitted on the standardized scale back
/// to the original covariate scale (divides by the stored column sd; the
/// centering shift is absorbed by the intercept, which is reported as-is).
std::vector<CoefficientSummary> destandardize_coefficients(
    const std::vector<CoefficientSummary>& beta_s, const StandardizationRecord& record);

/// Pooled squared column norms of XS across all groups, in column order.
Vector selection_column_norms_sq(const MultilevelDataset& ds);

/// Lossless conversion of a degenerate three-level dataset (n_i = 1 for all
/// i, q1 == q2) into a two-level dataset with Z_i = [ZL1 | ZL2].
MultilevelDataset to_two_level(const MultilevelDataset& ds);

}  // namespace vblmm::data
