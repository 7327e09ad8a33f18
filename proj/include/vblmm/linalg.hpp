#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "vblmm/error.hpp"

namespace vblmm::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Block-arrow linear system: a dense p-block coupled to m mutually
/// independent q-blocks.  Only the non-zero blocks of A are stored.
///
///   [ A11     A12_1  ...  A12_m ] [x1 ]   [a1 ]
///   [ A12_1^T A22_1         O   ] [x2a]   [a2a]
///   [  ...           ...        ] [...] = [...]
///   [ A12_m^T  O         A22_m  ] [x2m]   [a2m]
struct TwoLevelGroupBlocks {
  Vector a2;   // q
  Matrix A22;  // q x q, symmetric positive definite
  Matrix A12;  // p x q
};

struct TwoLevelSparseSystem {
  Vector a1;   // p
  Matrix A11;  // p x p, symmetric
  std::vector<TwoLevelGroupBlocks> groups;

  Eigen::Index p() const { return a1.size(); }
  Eigen::Index q() const { return groups.empty() ? 0 : groups.front().a2.size(); }
};

struct TwoLevelGroupSolution {
  Vector x2;      // q
  Matrix Ainv22;  // q x q block of A^{-1}
  Matrix Ainv12;  // p x q block of A^{-1}
};

struct TwoLevelSolution {
  Vector x1;
  Matrix Ainv11;
  std::vector<TwoLevelGroupSolution> groups;
};

/// Nested variant: each q1-block additionally couples to n_i independent
/// q2-blocks.  Off-diagonal blocks between distinct (i,j) pairs are zero.
struct ThreeLevelSubgroupBlocks {
  Vector a2;         // q2
  Matrix A22;        // q2 x q2
  Matrix A12;        // p x q2        (coupling with the top block)
  Matrix A12_inner;  // q1 x q2       (coupling with the parent group block)
};

struct ThreeLevelGroupBlocks {
  Vector a2;   // q1
  Matrix A22;  // q1 x q1
  Matrix A12;  // p x q1
  std::vector<ThreeLevelSubgroupBlocks> subgroups;
};

struct ThreeLevelSparseSystem {
  Vector a1;
  Matrix A11;
  std::vector<ThreeLevelGroupBlocks> groups;

  Eigen::Index p() const { return a1.size(); }
  Eigen::Index q1() const { return groups.empty() ? 0 : groups.front().a2.size(); }
  Eigen::Index q2() const;
};

struct ThreeLevelSubgroupSolution {
  Vector x2;            // q2
  Matrix Ainv22;        // q2 x q2
  Matrix Ainv12;        // p x q2
  Matrix Ainv12_inner;  // q1 x q2
};

struct ThreeLevelGroupSolution {
  Vector x2;      // q1
  Matrix Ainv22;  // q1 x q1
  Matrix Ainv12;  // p x q1
  std::vector<ThreeLevelSubgroupSolution> subgroups;
};

struct ThreeLevelSolution {
  Vector x1;
  Matrix Ainv11;
  std::vector<ThreeLevelGroupSolution> groups;
};

/// Solves A x = a and returns x together with the sub-blocks of A^{-1}
/// corresponding to the stored (non-zero) blocks of A.  Work is linear in the
/// number of groups; the full matrix is never formed.
///
/// Throws Error{SingularBlock} if a diagonal group block cannot be factored
/// and Error{SingularSchur} if the reduced p x p problem is singular.
TwoLevelSolution solve_two_level(const TwoLevelSparseSystem& sys);

/// Three-level analogue; additionally throws Error{SingularGroupSchur} when a
/// group-level reduced block is singular.
ThreeLevelSolution solve_three_level(const ThreeLevelSparseSystem& sys);

/// Assembles the full dense matrix / right-hand side (test oracle support).
Matrix assemble_dense(const TwoLevelSparseSystem& sys);
Vector assemble_rhs(const TwoLevelSparseSystem& sys);
Matrix assemble_dense(const ThreeLevelSparseSystem& sys);
Vector assemble_rhs(const ThreeLevelSparseSystem& sys);

/// Draws from N(A^{-1} a, A^{-1}) using the same per-block Cholesky
/// factorizations as the solvers; cost is linear in the number of groups.
/// All diagonal blocks must be symmetric positive definite.
Vector sample_gaussian(const TwoLevelSparseSystem& sys, std::mt19937_64& gen);
Vector sample_gaussian(const ThreeLevelSparseSystem& sys, std::mt19937_64& gen);

/// (M + M^T)/2, applied to returned covariance-like blocks to suppress
/// round-off asymmetry.
inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace vblmm::linalg
