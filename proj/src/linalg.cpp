#include "vblmm/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <iostream>
#include <optional>
#include <sstream>

namespace vblmm::linalg {

namespace {

// SPD factorization of a diagonal block, with a pivoted-LU fallback for
// blocks that are invertible but fail the Cholesky (the solver contract only
// assumes invertibility).
class BlockFactor {
 public:
  BlockFactor(const Matrix& block, ErrorCode on_singular, const char* label, int i, int j = -1) {
    llt_.compute(block);
    if (llt_.info() == Eigen::Success) {
      // Reject zero pivots: LLT accepts some exactly singular inputs.
      const Vector pivots = Matrix(llt_.matrixLLT()).diagonal();
      if (pivots.allFinite() && (pivots.array().abs() > 0.0).all()) return;
    }
    lu_.emplace(block);
    if (!lu_->isInvertible()) {
      std::ostringstream msg;
      msg << "singular " << label << " block at group " << i;
      if (j >= 0) msg << "," << j;
      throw Error(on_singular, msg.str());
    }
    std::cerr << "vblmm: warning: " << label << " block at group " << i;
    if (j >= 0) std::cerr << "," << j;
    std::cerr << " is not positive definite; using pivoted LU\n";
  }

  Matrix solve(const Matrix& rhs) const {
    if (lu_) return lu_->solve(rhs);
    return llt_.solve(rhs);
  }
  Vector solve(const Vector& rhs) const {
    if (lu_) return lu_->solve(rhs);
    return llt_.solve(rhs);
  }

 private:
  Eigen::LLT<Matrix> llt_;
  std::optional<Eigen::FullPivLU<Matrix>> lu_;
};

void check_two_level(const TwoLevelSparseSystem& sys) {
  const auto p = sys.p();
  if (sys.A11.rows() != p || sys.A11.cols() != p)
    throw Error(ErrorCode::DimensionMismatch, "A11 does not match a1");
  const auto q = sys.q();
  for (const auto& g : sys.groups) {
    if (g.a2.size() != q || g.A22.rows() != q || g.A22.cols() != q ||
        g.A12.rows() != p || g.A12.cols() != q)
      throw Error(ErrorCode::DimensionMismatch, "inconsistent group block dimensions");
  }
}

void check_three_level(const ThreeLevelSparseSystem& sys) {
  const auto p = sys.p();
  if (sys.A11.rows() != p || sys.A11.cols() != p)
    throw Error(ErrorCode::DimensionMismatch, "A11 does not match a1");
  const auto q1 = sys.q1();
  const auto q2 = sys.q2();
  for (const auto& g : sys.groups) {
    if (g.a2.size() != q1 || g.A22.rows() != q1 || g.A22.cols() != q1 ||
        g.A12.rows() != p || g.A12.cols() != q1)
      throw Error(ErrorCode::DimensionMismatch, "inconsistent group block dimensions");
    for (const auto& s : g.subgroups) {
      if (s.a2.size() != q2 || s.A22.rows() != q2 || s.A22.cols() != q2 ||
          s.A12.rows() != p || s.A12.cols() != q2 ||
          s.A12_inner.rows() != q1 || s.A12_inner.cols() != q2)
        throw Error(ErrorCode::DimensionMismatch, "inconsistent subgroup block dimensions");
    }
  }
}

Matrix chol_spd(const Matrix& m, ErrorCode code, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw Error(code, what);
  return llt.matrixL();
}

}  // namespace

Eigen::Index ThreeLevelSparseSystem::q2() const {
  for (const auto& g : groups)
    if (!g.subgroups.empty()) return g.subgroups.front().a2.size();
  return 0;
}

TwoLevelSolution solve_two_level(const TwoLevelSparseSystem& sys) {
  check_two_level(sys);
  const auto m = sys.groups.size();

  Vector omega = sys.a1;
  Matrix Omega = sys.A11;
  std::vector<BlockFactor> factors;
  factors.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    factors.emplace_back(g.A22, ErrorCode::SingularBlock, "A22", static_cast<int>(i));
    omega -= g.A12 * factors[i].solve(g.a2);
    Omega -= g.A12 * factors[i].solve(Matrix(g.A12.transpose()));
  }

  Eigen::FullPivLU<Matrix> schur(Omega);
  if (!schur.isInvertible())
    throw Error(ErrorCode::SingularSchur, "reduced top-level system is singular");

  TwoLevelSolution sol;
  sol.Ainv11 = symmetrize(schur.inverse());
  sol.x1 = sol.Ainv11 * omega;
  sol.groups.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    auto& out = sol.groups[i];
    out.x2 = factors[i].solve(Vector(g.a2 - g.A12.transpose() * sol.x1));
    out.Ainv12 = -(factors[i].solve(Matrix(g.A12.transpose() * sol.Ainv11))).transpose();
    out.Ainv22 = symmetrize(
        factors[i].solve(Matrix(Matrix::Identity(g.A22.rows(), g.A22.cols()) -
                                g.A12.transpose() * out.Ainv12)));
  }
  return sol;
}

ThreeLevelSolution solve_three_level(const ThreeLevelSparseSystem& sys) {
  check_three_level(sys);
  const auto m = sys.groups.size();

  Vector omega = sys.a1;
  Matrix Omega = sys.A11;

  struct GroupWork {
    Vector h2;
    Matrix H12, H22;
    std::vector<BlockFactor> sub_factors;
    std::optional<BlockFactor> factor;  // of H22
  };
  std::vector<GroupWork> work(m);

  for (std::size_t i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    auto& w = work[i];
    w.h2 = g.a2;
    w.H12 = g.A12;
    w.H22 = g.A22;
    w.sub_factors.reserve(g.subgroups.size());
    for (std::size_t j = 0; j < g.subgroups.size(); ++j) {
      const auto& s = g.subgroups[j];
      w.sub_factors.emplace_back(s.A22, ErrorCode::SingularBlock, "A22",
                                 static_cast<int>(i), static_cast<int>(j));
      const auto& f = w.sub_factors[j];
      w.h2 -= s.A12_inner * f.solve(s.a2);
      w.H12 -= s.A12 * f.solve(Matrix(s.A12_inner.transpose()));
      w.H22 -= s.A12_inner * f.solve(Matrix(s.A12_inner.transpose()));
      omega -= s.A12 * f.solve(s.a2);
      Omega -= s.A12 * f.solve(Matrix(s.A12.transpose()));
    }
    w.factor.emplace(w.H22, ErrorCode::SingularGroupSchur, "group-reduced", static_cast<int>(i));
    omega -= w.H12 * w.factor->solve(w.h2);
    Omega -= w.H12 * w.factor->solve(Matrix(w.H12.transpose()));
  }

  Eigen::FullPivLU<Matrix> schur(Omega);
  if (!schur.isInvertible())
    throw Error(ErrorCode::SingularSchur, "reduced top-level system is singular");

  ThreeLevelSolution sol;
  sol.Ainv11 = symmetrize(schur.inverse());
  sol.x1 = sol.Ainv11 * omega;
  sol.groups.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    const auto& w = work[i];
    auto& out = sol.groups[i];
    out.x2 = w.factor->solve(Vector(w.h2 - w.H12.transpose() * sol.x1));
    out.Ainv12 = -(w.factor->solve(Matrix(w.H12.transpose() * sol.Ainv11))).transpose();
    out.Ainv22 = symmetrize(
        w.factor->solve(Matrix(Matrix::Identity(w.H22.rows(), w.H22.cols()) -
                               w.H12.transpose() * out.Ainv12)));
    out.subgroups.resize(g.subgroups.size());
    for (std::size_t j = 0; j < g.subgroups.size(); ++j) {
      const auto& s = g.subgroups[j];
      const auto& f = w.sub_factors[j];
      auto& sub = out.subgroups[j];
      sub.x2 = f.solve(Vector(s.a2 - s.A12.transpose() * sol.x1 -
                              s.A12_inner.transpose() * out.x2));
      sub.Ainv12 = -(f.solve(Matrix(s.A12.transpose() * sol.Ainv11 +
                                    s.A12_inner.transpose() * out.Ainv12.transpose())))
                        .transpose();
      sub.Ainv12_inner = -(f.solve(Matrix(s.A12.transpose() * out.Ainv12 +
                                          s.A12_inner.transpose() * out.Ainv22)))
                              .transpose();
      sub.Ainv22 = symmetrize(
          f.solve(Matrix(Matrix::Identity(s.A22.rows(), s.A22.cols()) -
                         s.A12.transpose() * sub.Ainv12 -
                         s.A12_inner.transpose() * sub.Ainv12_inner)));
    }
  }
  return sol;
}

Matrix assemble_dense(const TwoLevelSparseSystem& sys) {
  check_two_level(sys);
  const auto p = sys.p();
  const auto q = sys.q();
  const auto m = static_cast<Eigen::Index>(sys.groups.size());
  const auto dim = p + m * q;
  Matrix full = Matrix::Zero(dim, dim);
  full.topLeftCorner(p, p) = sys.A11;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    const auto off = p + i * q;
    full.block(0, off, p, q) = g.A12;
    full.block(off, 0, q, p) = g.A12.transpose();
    full.block(off, off, q, q) = g.A22;
  }
  return full;
}

Vector assemble_rhs(const TwoLevelSparseSystem& sys) {
  const auto p = sys.p();
  const auto q = sys.q();
  const auto m = static_cast<Eigen::Index>(sys.groups.size());
  Vector rhs(p + m * q);
  rhs.head(p) = sys.a1;
  for (Eigen::Index i = 0; i < m; ++i) rhs.segment(p + i * q, q) = sys.groups[i].a2;
  return rhs;
}

Matrix assemble_dense(const ThreeLevelSparseSystem& sys) {
  check_three_level(sys);
  const auto p = sys.p();
  const auto q1 = sys.q1();
  const auto q2 = sys.q2();
  Eigen::Index dim = p;
  for (const auto& g : sys.groups)
    dim += q1 + q2 * static_cast<Eigen::Index>(g.subgroups.size());
  Matrix full = Matrix::Zero(dim, dim);
  full.topLeftCorner(p, p) = sys.A11;
  Eigen::Index off = p;
  for (const auto& g : sys.groups) {
    const auto goff = off;
    full.block(0, goff, p, q1) = g.A12;
    full.block(goff, 0, q1, p) = g.A12.transpose();
    full.block(goff, goff, q1, q1) = g.A22;
    off += q1;
    for (const auto& s : g.subgroups) {
      full.block(0, off, p, q2) = s.A12;
      full.block(off, 0, q2, p) = s.A12.transpose();
      full.block(goff, off, q1, q2) = s.A12_inner;
      full.block(off, goff, q2, q1) = s.A12_inner.transpose();
      full.block(off, off, q2, q2) = s.A22;
      off += q2;
    }
  }
  return full;
}

Vector assemble_rhs(const ThreeLevelSparseSystem& sys) {
  const auto p = sys.p();
  const auto q1 = sys.q1();
  const auto q2 = sys.q2();
  Eigen::Index dim = p;
  for (const auto& g : sys.groups)
    dim += q1 + q2 * static_cast<Eigen::Index>(g.subgroups.size());
  Vector rhs(dim);
  rhs.head(p) = sys.a1;
  Eigen::Index off = p;
  for (const auto& g : sys.groups) {
    rhs.segment(off, q1) = g.a2;
    off += q1;
    for (const auto& s : g.subgroups) {
      rhs.segment(off, q2) = s.a2;
      off += q2;
    }
  }
  return rhs;
}

namespace {

Vector std_normal_vec(Eigen::Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(gen);
  return v;
}

}  // namespace

Vector sample_gaussian(const TwoLevelSparseSystem& sys, std::mt19937_64& gen) {
  check_two_level(sys);
  const auto p = sys.p();
  const auto q = sys.q();
  const auto m = static_cast<Eigen::Index>(sys.groups.size());

  std::vector<Eigen::LLT<Matrix>> llts(m);
  Vector omega = sys.a1;
  Matrix Omega = sys.A11;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    llts[i].compute(g.A22);
    if (llts[i].info() != Eigen::Success)
      throw Error(ErrorCode::NonSpd, "diagonal block is not positive definite");
    omega -= g.A12 * llts[i].solve(g.a2);
    Omega -= g.A12 * llts[i].solve(Matrix(g.A12.transpose()));
  }

  // Top block: marginal precision is the Schur complement.
  Matrix Lo = chol_spd(Omega, ErrorCode::NonSpd, "reduced system is not positive definite");
  Vector x(p + m * q);
  Vector mean1 = Lo.transpose().triangularView<Eigen::Upper>().solve(
      Vector(Lo.triangularView<Eigen::Lower>().solve(omega)));
  x.head(p) = mean1 + Lo.transpose().triangularView<Eigen::Upper>().solve(std_normal_vec(p, gen));

  // Group blocks given the top block are independent gaussians.
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    Vector mean2 = llts[i].solve(Vector(g.a2 - g.A12.transpose() * x.head(p)));
    Matrix L2 = llts[i].matrixL();
    x.segment(p + i * q, q) =
        mean2 + L2.transpose().triangularView<Eigen::Upper>().solve(std_normal_vec(q, gen));
  }
  return x;
}

Vector sample_gaussian(const ThreeLevelSparseSystem& sys, std::mt19937_64& gen) {
  check_three_level(sys);
  const auto p = sys.p();
  const auto q1 = sys.q1();
  const auto q2 = sys.q2();
  const auto m = static_cast<Eigen::Index>(sys.groups.size());

  struct GroupWork {
    Vector h2;
    Matrix H12;
    Eigen::LLT<Matrix> Hllt;
    std::vector<Eigen::LLT<Matrix>> sub;
  };
  std::vector<GroupWork> work(m);
  Vector omega = sys.a1;
  Matrix Omega = sys.A11;
  Eigen::Index dim = p;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    auto& w = work[i];
    w.h2 = g.a2;
    w.H12 = g.A12;
    Matrix H22 = g.A22;
    w.sub.resize(g.subgroups.size());
    for (std::size_t j = 0; j < g.subgroups.size(); ++j) {
      const auto& s = g.subgroups[j];
      w.sub[j].compute(s.A22);
      if (w.sub[j].info() != Eigen::Success)
        throw Error(ErrorCode::NonSpd, "diagonal block is not positive definite");
      w.h2 -= s.A12_inner * w.sub[j].solve(s.a2);
      w.H12 -= s.A12 * w.sub[j].solve(Matrix(s.A12_inner.transpose()));
      H22 -= s.A12_inner * w.sub[j].solve(Matrix(s.A12_inner.transpose()));
      omega -= s.A12 * w.sub[j].solve(s.a2);
      Omega -= s.A12 * w.sub[j].solve(Matrix(s.A12.transpose()));
    }
    w.Hllt.compute(H22);
    if (w.Hllt.info() != Eigen::Success)
      throw Error(ErrorCode::NonSpd, "group-reduced block is not positive definite");
    omega -= w.H12 * w.Hllt.solve(w.h2);
    Omega -= w.H12 * w.Hllt.solve(Matrix(w.H12.transpose()));
    dim += q1 + q2 * static_cast<Eigen::Index>(g.subgroups.size());
  }

  Matrix Lo = chol_spd(Omega, ErrorCode::NonSpd, "reduced system is not positive definite");
  Vector x(dim);
  Vector mean1 = Lo.transpose().triangularView<Eigen::Upper>().solve(
      Vector(Lo.triangularView<Eigen::Lower>().solve(omega)));
  x.head(p) = mean1 + Lo.transpose().triangularView<Eigen::Upper>().solve(std_normal_vec(p, gen));

  Eigen::Index off = p;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& g = sys.groups[i];
    const auto& w = work[i];
    Vector mean2 = w.Hllt.solve(Vector(w.h2 - w.H12.transpose() * x.head(p)));
    Matrix L2 = w.Hllt.matrixL();
    x.segment(off, q1) =
        mean2 + L2.transpose().triangularView<Eigen::Upper>().solve(std_normal_vec(q1, gen));
    const auto goff = off;
    off += q1;
    for (std::size_t j = 0; j < g.subgroups.size(); ++j) {
      const auto& s = g.subgroups[j];
      Vector mean3 = w.sub[j].solve(Vector(s.a2 - s.A12.transpose() * x.head(p) -
                                           s.A12_inner.transpose() * x.segment(goff, q1)));
      Matrix L3 = w.sub[j].matrixL();
      x.segment(off, q2) =
          mean3 + L3.transpose().triangularView<Eigen::Upper>().solve(std_normal_vec(q2, gen));
      off += q2;
    }
  }
  return x;
}

}  // namespace vblmm::linalg
