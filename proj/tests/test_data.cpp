#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "vblmm/data.hpp"
#include "vblmm/sim.hpp"

using namespace vblmm;
using data::Matrix;
using data::Vector;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/vblmm_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

data::CsvSchema two_level_schema() {
  data::CsvSchema s;
  s.response = "y";
  s.group_id = "group";
  s.r_cols = {"xr1"};
  s.a_cols = {"xa1"};
  s.s_cols = {"xs1", "xs2"};
  return s;
}

}  // namespace

TEST_CASE("single-group file loads with the right shape") {
  TempFile f("tiny.csv");
  write_text(f.path,
             "group,y,xr1,xa1,xs1,xs2\n"
             "g1,1.5,1,0.2,0.3,0.4\n"
             "g1,2.5,1,0.1,-0.3,0.9\n");
  const auto ds = data::load_csv(f.path, two_level_schema());
  CHECK(ds.depth == data::Depth::Two);
  CHECK(ds.m() == 1);
  CHECK(ds.groups[0].y.size() == 2);
  CHECK(ds.p_R() == 1);
  CHECK(ds.p_S() == 2);
  CHECK(ds.groups[0].Z == ds.groups[0].XR);  // Z defaults to the R block
  CHECK(ds.groups[0].y(1) == 2.5);
}

TEST_CASE("groups are ordered numerically when ids are numeric") {
  TempFile f("order.csv");
  write_text(f.path,
             "group,y,xr1,xa1,xs1,xs2\n"
             "10,1,1,0,0,0\n"
             "9,2,1,0,0,0\n"
             "10,3,1,0,0,0\n");
  const auto ds = data::load_csv(f.path, two_level_schema());
  REQUIRE(ds.m() == 2);
  CHECK(ds.groups[0].id == "9");
  CHECK(ds.groups[1].id == "10");
  CHECK(ds.groups[1].y.size() == 2);
}

TEST_CASE("loader error paths") {
  TempFile f("bad.csv");

  SUBCASE("missing column") {
    write_text(f.path, "group,y,xr1\n1,2,3\n");
    CHECK_THROWS_AS(data::load_csv(f.path, two_level_schema()), Error);
    try {
      data::load_csv(f.path, two_level_schema());
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingColumn);
    }
  }
  SUBCASE("non-numeric cell") {
    write_text(f.path, "group,y,xr1,xa1,xs1,xs2\n1,abc,1,0,0,0\n");
    try {
      data::load_csv(f.path, two_level_schema());
      FAIL("expected NonNumeric");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonNumeric);
    }
  }
  SUBCASE("missing subgroup id under a three-level schema") {
    auto schema = two_level_schema();
    schema.subgroup_id = "sub";
    write_text(f.path, "group,sub,y,xr1,xa1,xs1,xs2\n1,,2,1,0,0,0\n");
    try {
      data::load_csv(f.path, schema);
      FAIL("expected RaggedGroup");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::RaggedGroup);
    }
  }
  SUBCASE("ragged row") {
    write_text(f.path, "group,y,xr1,xa1,xs1,xs2\n1,2,1,0,0\n");
    try {
      data::load_csv(f.path, two_level_schema());
      FAIL("expected RaggedGroup");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::RaggedGroup);
    }
  }
  SUBCASE("missing file") {
    try {
      data::load_csv("/nonexistent/no.csv", two_level_schema());
      FAIL("expected IoError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IoError);
    }
  }
}

TEST_CASE("simulated data round-trips through the CSV format exactly") {
  auto cfg = sim::SimConfig::sparse_benchmark(3, 2, 4, 6);
  auto [ds, truth] = sim::simulate(cfg, 99);
  TempFile f("roundtrip.csv");
  const auto schema = data::write_csv(ds, f.path);
  const auto back = data::load_csv(f.path, schema);
  REQUIRE(back.depth == data::Depth::Three);
  REQUIRE(back.m() == ds.m());
  for (Eigen::Index i = 0; i < ds.m(); ++i) {
    const auto& a = ds.groups3[static_cast<std::size_t>(i)];
    const auto& b = back.groups3[static_cast<std::size_t>(i)];
    REQUIRE(a.subgroups.size() == b.subgroups.size());
    for (std::size_t j = 0; j < a.subgroups.size(); ++j) {
      CHECK(a.subgroups[j].y == b.subgroups[j].y);
      CHECK(a.subgroups[j].XR == b.subgroups[j].XR);
      CHECK(a.subgroups[j].XA == b.subgroups[j].XA);
      CHECK(a.subgroups[j].XS == b.subgroups[j].XS);
      CHECK(a.subgroups[j].ZL1 == b.subgroups[j].ZL1);
      CHECK(a.subgroups[j].ZL2 == b.subgroups[j].ZL2);
    }
  }
}

TEST_CASE("standardization centers and scales pooled selection columns") {
  data::MultilevelDataset ds;
  ds.depth = data::Depth::Two;
  ds.selection_names = {"c"};
  data::TwoLevelGroup g;
  g.id = "1";
  g.y = Vector::Zero(3);
  g.XR = Matrix::Ones(3, 1);
  g.XA = Matrix::Zero(3, 0);
  g.XS = Matrix(3, 1);
  g.XS << 1, 2, 3;
  g.Z = g.XR;
  ds.groups.push_back(g);

  auto [std_ds, rec] = data::standardize_selection_columns(ds);
  // population convention: sd of (1,2,3) is sqrt(2/3)
  CHECK(rec.mean(0) == doctest::Approx(2.0));
  CHECK(rec.sd(0) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(std_ds.groups[0].XS(0, 0) == doctest::Approx(-1.2247448713915890));
  CHECK(std_ds.groups[0].XS(1, 0) == doctest::Approx(0.0));
  CHECK(std_ds.groups[0].XS(2, 0) == doctest::Approx(1.2247448713915890));

  // already standardized data is unchanged
  auto [std2, rec2] = data::standardize_selection_columns(std_ds);
  CHECK((std2.groups[0].XS - std_ds.groups[0].XS).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(rec2.sd(0) == doctest::Approx(1.0));

  SUBCASE("constant column is rejected") {
    ds.groups[0].XS.setConstant(5.0);
    try {
      data::standardize_selection_columns(ds);
      FAIL("expected ConstantColumn");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConstantColumn);
      CHECK(std::string(e.what()).find("'c'") != std::string::npos);
    }
  }
}

TEST_CASE("destandardization divides summaries by the stored scale") {
  data::StandardizationRecord rec;
  rec.names = {"a", "b"};
  rec.mean = Vector::Zero(2);
  rec.sd = Vector(2);
  rec.sd << 1.0, 2.0;
  std::vector<data::CoefficientSummary> rows{{"a", 0.5, 0.1, 0.3, 0.7},
                                             {"b", 0.5, 0.1, 0.3, 0.7}};
  const auto out = data::destandardize_coefficients(rows, rec);
  CHECK(out[0].mean == doctest::Approx(0.5));  // unit scale: identity
  CHECK(out[1].mean == doctest::Approx(0.25));
  CHECK(out[1].sd == doctest::Approx(0.05));
  CHECK(out[1].lower == doctest::Approx(0.15));
  CHECK(out[1].upper == doctest::Approx(0.35));
  CHECK_THROWS_AS(
      data::destandardize_coefficients(std::vector<data::CoefficientSummary>(1), rec), Error);
}

TEST_CASE("standardize-fit-destandardize agrees with fitting the raw scale") {
  // With an effectively flat prior the selection coefficients transform
  // exactly under column scaling, so the destandardized fit must match a
  // direct fit of the unscaled data.
  auto cfg = sim::SimConfig::sparse_benchmark(8, 2, 8, 3);
  cfg.beta_S = Vector(3);
  cfg.beta_S << 1.0, -0.5, 0.0;
  auto [ds, truth] = sim::simulate(cfg, 55);

  model::FitOptions opts;
  opts.max_iters = 150;
  opts.rel_change_tol = 1e-9;
  const auto prior_raw = model::PriorSpec::diffuse(ds, model::PriorFamily::Gaussian);
  const auto raw_fit = model::fit(ds, prior_raw, opts);
  const auto raw_sum = model::posterior_summaries(raw_fit.state, 0.9);

  auto [scaled, rec] = data::standardize_selection_columns(ds);
  const auto prior_sc = model::PriorSpec::diffuse(scaled, model::PriorFamily::Gaussian);
  const auto sc_fit = model::fit(scaled, prior_sc, opts);
  auto sc_sum = model::posterior_summaries(sc_fit.state, 0.9);
  std::vector<data::CoefficientSummary> beta_s(sc_sum.beta.end() - 3, sc_sum.beta.end());
  const auto destd = data::destandardize_coefficients(beta_s, rec);
  for (int h = 0; h < 3; ++h) {
    const auto& direct = raw_sum.beta[raw_sum.beta.size() - 3 + static_cast<std::size_t>(h)];
    CHECK(destd[static_cast<std::size_t>(h)].mean ==
          doctest::Approx(direct.mean).epsilon(1e-4));
    CHECK(destd[static_cast<std::size_t>(h)].sd ==
          doctest::Approx(direct.sd).epsilon(1e-3));
  }
}

TEST_CASE("degenerate three-level dataset converts losslessly to two-level") {
  auto cfg = sim::SimConfig::sparse_benchmark(4, 1, 5, 3);
  auto [ds, truth] = sim::simulate(cfg, 7);
  const auto two = data::to_two_level(ds);
  CHECK(two.depth == data::Depth::Two);
  CHECK(two.m() == ds.m());
  CHECK(two.q() == ds.q1() + ds.q2());
  for (Eigen::Index i = 0; i < ds.m(); ++i) {
    const auto& s = ds.groups3[static_cast<std::size_t>(i)].subgroups[0];
    const auto& t = two.groups[static_cast<std::size_t>(i)];
    CHECK(t.y == s.y);
    CHECK(t.XR == s.XR);
    CHECK(t.Z.leftCols(ds.q1()) == s.ZL1);
    CHECK(t.Z.rightCols(ds.q2()) == s.ZL2);
  }

  // conversion requires n_i = 1
  auto cfg2 = sim::SimConfig::sparse_benchmark(2, 2, 5, 3);
  auto [ds2, truth2] = sim::simulate(cfg2, 7);
  CHECK_THROWS_AS(data::to_two_level(ds2), Error);
}

TEST_CASE("selection column norms pool across all groups") {
  auto cfg = sim::SimConfig::sparse_benchmark(3, 2, 4, 2);
  auto [ds, truth] = sim::simulate(cfg, 21);
  const Vector norms = data::selection_column_norms_sq(ds);
  Vector expected = Vector::Zero(2);
  for (const auto& g : ds.groups3)
    for (const auto& s : g.subgroups)
      expected += s.XS.array().square().colwise().sum().matrix().transpose();
  CHECK((norms - expected).cwiseAbs().maxCoeff() < 1e-12);
}
