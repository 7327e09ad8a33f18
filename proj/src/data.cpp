#include "vblmm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace vblmm::data {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& col, std::size_t row) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end == '\r') ++end;
  if (end == begin || (end && *end != '\0') || !std::isfinite(v)) {
    throw Error(ErrorCode::NonNumeric, "non-numeric value '" + s + "' in column '" + col +
                                           "' at data row " + std::to_string(row + 1));
  }
  return v;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

// Sorts ids numerically when every id parses as a number, lexicographically
// otherwise, so group order never depends on file order.
bool all_numeric(const std::vector<std::string>& ids) {
  for (const auto& id : ids) {
    char* end = nullptr;
    std::strtod(id.c_str(), &end);
    if (end == id.c_str() || *end != '\0') return false;
  }
  return true;
}

template <typename T, typename GetId>
void sort_by_id(std::vector<T>& items, GetId get_id) {
  std::vector<std::string> ids;
  ids.reserve(items.size());
  for (const auto& it : items) ids.push_back(get_id(it));
  if (all_numeric(ids)) {
    std::stable_sort(items.begin(), items.end(), [&](const T& a, const T& b) {
      return std::strtod(get_id(a).c_str(), nullptr) < std::strtod(get_id(b).c_str(), nullptr);
    });
  } else {
    std::stable_sort(items.begin(), items.end(),
                     [&](const T& a, const T& b) { return get_id(a) < get_id(b); });
  }
}

Matrix take_columns(const std::vector<std::vector<double>>& rows,
                    const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(idx.size()));
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      out(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(idx[c])];
  return out;
}

void write_number(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

Eigen::Index MultilevelDataset::m() const {
  return depth == Depth::Two ? static_cast<Eigen::Index>(groups.size())
                             : static_cast<Eigen::Index>(groups3.size());
}

Eigen::Index MultilevelDataset::p_R() const {
  if (depth == Depth::Two) return groups.empty() ? 0 : groups.front().XR.cols();
  if (groups3.empty() || groups3.front().subgroups.empty()) return 0;
  return groups3.front().subgroups.front().XR.cols();
}

Eigen::Index MultilevelDataset::p_A() const {
  if (depth == Depth::Two) return groups.empty() ? 0 : groups.front().XA.cols();
  if (groups3.empty() || groups3.front().subgroups.empty()) return 0;
  return groups3.front().subgroups.front().XA.cols();
}

Eigen::Index MultilevelDataset::p_S() const {
  if (depth == Depth::Two) return groups.empty() ? 0 : groups.front().XS.cols();
  if (groups3.empty() || groups3.front().subgroups.empty()) return 0;
  return groups3.front().subgroups.front().XS.cols();
}

Eigen::Index MultilevelDataset::q() const {
  return (depth == Depth::Two && !groups.empty()) ? groups.front().Z.cols() : 0;
}

Eigen::Index MultilevelDataset::q1() const {
  if (depth != Depth::Three || groups3.empty() || groups3.front().subgroups.empty()) return 0;
  return groups3.front().subgroups.front().ZL1.cols();
}

Eigen::Index MultilevelDataset::q2() const {
  if (depth != Depth::Three || groups3.empty() || groups3.front().subgroups.empty()) return 0;
  return groups3.front().subgroups.front().ZL2.cols();
}

Eigen::Index MultilevelDataset::total_obs() const {
  Eigen::Index n = 0;
  if (depth == Depth::Two) {
    for (const auto& g : groups) n += g.y.size();
  } else {
    for (const auto& g : groups3)
      for (const auto& s : g.subgroups) n += s.y.size();
  }
  return n;
}

std::vector<Eigen::Index> MultilevelDataset::subgroup_counts() const {
  std::vector<Eigen::Index> out;
  for (const auto& g : groups3) out.push_back(static_cast<Eigen::Index>(g.subgroups.size()));
  return out;
}

void MultilevelDataset::validate() const {
  if (m() == 0) throw Error(ErrorCode::InvalidArgument, "dataset has no groups");
  const auto pr = p_R(), pa = p_A(), ps = p_S();
  auto check_block = [&](const Vector& y, const Matrix& XR, const Matrix& XA, const Matrix& XS,
                         const std::string& id) {
    if (y.size() < 1) throw Error(ErrorCode::InvalidArgument, "empty group " + id);
    if (XR.cols() != pr || XA.cols() != pa || XS.cols() != ps || XR.rows() != y.size() ||
        XA.rows() != y.size() || XS.rows() != y.size())
      throw Error(ErrorCode::DimensionMismatch, "inconsistent design blocks in group " + id);
  };
  if (depth == Depth::Two) {
    const auto qq = q();
    for (const auto& g : groups) {
      check_block(g.y, g.XR, g.XA, g.XS, g.id);
      if (g.Z.cols() != qq || g.Z.rows() != g.y.size())
        throw Error(ErrorCode::DimensionMismatch, "inconsistent Z block in group " + g.id);
    }
  } else {
    const auto qq1 = q1(), qq2 = q2();
    for (const auto& g : groups3) {
      if (g.subgroups.empty())
        throw Error(ErrorCode::InvalidArgument, "group " + g.id + " has no subgroups");
      for (const auto& s : g.subgroups) {
        check_block(s.y, s.XR, s.XA, s.XS, g.id + "/" + s.id);
        if (s.ZL1.cols() != qq1 || s.ZL2.cols() != qq2 || s.ZL1.rows() != s.y.size() ||
            s.ZL2.rows() != s.y.size())
          throw Error(ErrorCode::DimensionMismatch,
                      "inconsistent Z blocks in group " + g.id + "/" + s.id);
      }
    }
  }
  if (static_cast<Eigen::Index>(selection_names.size()) != ps)
    throw Error(ErrorCode::DimensionMismatch, "selection column names do not match p_S");
}

CsvSchema CsvSchema::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid schema JSON: ") + e.what());
  }
  CsvSchema s;
  try {
    s.response = j.at("response").get<std::string>();
    s.group_id = j.at("group_id").get<std::string>();
    if (j.contains("subgroup_id")) s.subgroup_id = j["subgroup_id"].get<std::string>();
    s.r_cols = j.value("R", std::vector<std::string>{});
    s.a_cols = j.value("A", std::vector<std::string>{});
    s.s_cols = j.value("S", std::vector<std::string>{});
    if (j.contains("Z")) s.z_cols = j["Z"].get<std::vector<std::string>>();
    if (j.contains("ZL1")) s.zl1_cols = j["ZL1"].get<std::vector<std::string>>();
    if (j.contains("ZL2")) s.zl2_cols = j["ZL2"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid schema: ") + e.what());
  }
  if (s.r_cols.empty())
    throw Error(ErrorCode::ConfigError, "schema requires at least one R column");
  return s;
}

std::string CsvSchema::to_json_text() const {
  json j{{"response", response}, {"group_id", group_id}, {"R", r_cols}, {"A", a_cols},
         {"S", s_cols}};
  if (subgroup_id) j["subgroup_id"] = *subgroup_id;
  if (z_cols) j["Z"] = *z_cols;
  if (zl1_cols) j["ZL1"] = *zl1_cols;
  if (zl2_cols) j["ZL2"] = *zl2_cols;
  return j.dump();
}

MultilevelDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "empty file '" + path + "'");
  auto header = split_csv_line(line);
  for (auto& h : header) h = strip_cr(h);

  auto column_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  const bool three = schema.subgroup_id.has_value();
  const std::size_t yc = column_index(schema.response);
  const std::size_t gc = column_index(schema.group_id);
  const std::size_t sc = three ? column_index(*schema.subgroup_id) : 0;
  auto indices = [&](const std::vector<std::string>& names) {
    std::vector<Eigen::Index> out;
    for (const auto& n : names) out.push_back(static_cast<Eigen::Index>(column_index(n)));
    return out;
  };
  const auto ri = indices(schema.r_cols);
  const auto ai = indices(schema.a_cols);
  const auto si = indices(schema.s_cols);
  std::vector<Eigen::Index> zi, z1i, z2i;
  if (schema.z_cols) zi = indices(*schema.z_cols);
  if (schema.zl1_cols) z1i = indices(*schema.zl1_cols);
  if (schema.zl2_cols) z2i = indices(*schema.zl2_cols);

  struct RawBlock {
    std::vector<double> y;
    std::vector<std::vector<double>> rows;
  };
  // group id -> (subgroup id -> rows); two-level uses a single "" subgroup.
  std::map<std::string, std::map<std::string, RawBlock>> raw;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (strip_cr(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::RaggedGroup,
                  "row " + std::to_string(row + 1) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    const std::string gid = strip_cr(fields[gc]);
    if (gid.empty())
      throw Error(ErrorCode::RaggedGroup, "empty group id at data row " + std::to_string(row + 1));
    std::string sid;
    if (three) {
      sid = strip_cr(fields[sc]);
      if (sid.empty())
        throw Error(ErrorCode::RaggedGroup,
                    "missing subgroup id at data row " + std::to_string(row + 1));
    }
    auto& block = raw[gid][sid];
    block.y.push_back(parse_number(fields[yc], schema.response, row));
    std::vector<double> vals(header.size(), 0.0);
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == gc || (three && c == sc)) continue;
      vals[c] = parse_number(fields[c], header[c], row);
    }
    block.rows.push_back(std::move(vals));
    ++row;
  }
  if (raw.empty()) throw Error(ErrorCode::IoError, "no data rows in '" + path + "'");

  MultilevelDataset ds;
  ds.depth = three ? Depth::Three : Depth::Two;
  ds.selection_names = schema.s_cols;
  auto to_vector = [](const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  if (!three) {
    for (auto& [gid, subs] : raw) {
      auto& block = subs.begin()->second;
      TwoLevelGroup g;
      g.id = gid;
      g.y = to_vector(block.y);
      g.XR = take_columns(block.rows, ri);
      g.XA = take_columns(block.rows, ai);
      g.XS = take_columns(block.rows, si);
      g.Z = zi.empty() ? g.XR : take_columns(block.rows, zi);
      ds.groups.push_back(std::move(g));
    }
    sort_by_id(ds.groups, [](const TwoLevelGroup& g) { return g.id; });
  } else {
    for (auto& [gid, subs] : raw) {
      ThreeLevelGroup g;
      g.id = gid;
      for (auto& [sid, block] : subs) {
        ThreeLevelSubgroup s;
        s.id = sid;
        s.y = to_vector(block.y);
        s.XR = take_columns(block.rows, ri);
        s.XA = take_columns(block.rows, ai);
        s.XS = take_columns(block.rows, si);
        s.ZL1 = z1i.empty() ? s.XR : take_columns(block.rows, z1i);
        s.ZL2 = z2i.empty() ? s.XR : take_columns(block.rows, z2i);
        g.subgroups.push_back(std::move(s));
      }
      sort_by_id(g.subgroups, [](const ThreeLevelSubgroup& s) { return s.id; });
      ds.groups3.push_back(std::move(g));
    }
    sort_by_id(ds.groups3, [](const ThreeLevelGroup& g) { return g.id; });
  }
  ds.validate();
  return ds;
}

CsvSchema write_csv(const MultilevelDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");

  CsvSchema schema;
  schema.response = "y";
  schema.group_id = "group";
  const bool three = ds.depth == Depth::Three;
  if (three) schema.subgroup_id = "subgroup";
  auto names = [](const char* prefix, Eigen::Index k) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < k; ++i) out.push_back(std::string(prefix) + std::to_string(i + 1));
    return out;
  };
  schema.r_cols = names("xr", ds.p_R());
  schema.a_cols = names("xa", ds.p_A());
  schema.s_cols = ds.selection_names.empty()
                      ? names("xs", ds.p_S())
                      : ds.selection_names;

  out << schema.group_id;
  if (three) out << ',' << *schema.subgroup_id;
  out << ',' << schema.response;
  for (const auto& n : schema.r_cols) out << ',' << n;
  for (const auto& n : schema.a_cols) out << ',' << n;
  for (const auto& n : schema.s_cols) out << ',' << n;

  // Z blocks are written only when they differ from XR.
  bool z_differs = false;
  if (!three) {
    for (const auto& g : ds.groups) z_differs = z_differs || g.Z != g.XR;
    if (z_differs) {
      schema.z_cols = names("z", ds.q());
      for (const auto& n : *schema.z_cols) out << ',' << n;
    }
  } else {
    for (const auto& g : ds.groups3)
      for (const auto& s : g.subgroups) z_differs = z_differs || s.ZL1 != s.XR || s.ZL2 != s.XR;
    if (z_differs) {
      schema.zl1_cols = names("z1_", ds.q1());
      schema.zl2_cols = names("z2_", ds.q2());
      for (const auto& n : *schema.zl1_cols) out << ',' << n;
      for (const auto& n : *schema.zl2_cols) out << ',' << n;
    }
  }
  out << '\n';

  auto write_row = [&](const std::string& gid, const std::string& sid, double yv,
                       const Matrix& XR, const Matrix& XA, const Matrix& XS, Eigen::Index r,
                       const Matrix* Z1, const Matrix* Z2) {
    out << gid;
    if (three) out << ',' << sid;
    out << ',';
    write_number(out, yv);
    for (Eigen::Index c = 0; c < XR.cols(); ++c) { out << ','; write_number(out, XR(r, c)); }
    for (Eigen::Index c = 0; c < XA.cols(); ++c) { out << ','; write_number(out, XA(r, c)); }
    for (Eigen::Index c = 0; c < XS.cols(); ++c) { out << ','; write_number(out, XS(r, c)); }
    if (Z1)
      for (Eigen::Index c = 0; c < Z1->cols(); ++c) { out << ','; write_number(out, (*Z1)(r, c)); }
    if (Z2)
      for (Eigen::Index c = 0; c < Z2->cols(); ++c) { out << ','; write_number(out, (*Z2)(r, c)); }
    out << '\n';
  };

  if (!three) {
    for (const auto& g : ds.groups)
      for (Eigen::Index r = 0; r < g.y.size(); ++r)
        write_row(g.id, "", g.y(r), g.XR, g.XA, g.XS, r, z_differs ? &g.Z : nullptr, nullptr);
  } else {
    for (const auto& g : ds.groups3)
      for (const auto& s : g.subgroups)
        for (Eigen::Index r = 0; r < s.y.size(); ++r)
          write_row(g.id, s.id, s.y(r), s.XR, s.XA, s.XS, r, z_differs ? &s.ZL1 : nullptr,
                    z_differs ? &s.ZL2 : nullptr);
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
  return schema;
}

std::pair<MultilevelDataset, StandardizationRecord> standardize_selection_columns(
    const MultilevelDataset& ds) {
  ds.validate();
  const auto ps = ds.p_S();
  const double n = static_cast<double>(ds.total_obs());
  Vector sum = Vector::Zero(ps), sumsq = Vector::Zero(ps);
  auto accumulate = [&](const Matrix& XS) {
    sum += XS.colwise().sum().transpose();
    sumsq += XS.array().square().colwise().sum().matrix().transpose();
  };
  if (ds.depth == Depth::Two) {
    for (const auto& g : ds.groups) accumulate(g.XS);
  } else {
    for (const auto& g : ds.groups3)
      for (const auto& s : g.subgroups) accumulate(s.XS);
  }
  StandardizationRecord rec;
  rec.names = ds.selection_names;
  rec.mean = sum / n;
  rec.sd = Vector(ps);
  for (Eigen::Index h = 0; h < ps; ++h) {
    const double var = sumsq(h) / n - rec.mean(h) * rec.mean(h);
    if (var <= 0.0) {
      const std::string name = static_cast<std::size_t>(h) < rec.names.size()
                                   ? rec.names[static_cast<std::size_t>(h)]
                                   : ("xs" + std::to_string(h + 1));
      throw Error(ErrorCode::ConstantColumn, "selection column '" + name + "' is constant");
    }
    rec.sd(h) = std::sqrt(var);
  }
  MultilevelDataset out = ds;
  auto apply = [&](Matrix& XS) {
    XS.rowwise() -= rec.mean.transpose();
    XS.array().rowwise() /= rec.sd.transpose().array();
  };
  if (out.depth == Depth::Two) {
    for (auto& g : out.groups) apply(g.XS);
  } else {
    for (auto& g : out.groups3)
      for (auto& s : g.subgroups) apply(s.XS);
  }
  return {std::move(out), std::move(rec)};
}

std::vector<CoefficientSummary> destandardize_coefficients(
    const std::vector<CoefficientSummary>& beta_s, const StandardizationRecord& record) {
  if (static_cast<Eigen::Index>(beta_s.size()) != record.sd.size())
    throw Error(ErrorCode::DimensionMismatch,
                "summary count does not match standardization record");
  std::vector<CoefficientSummary> out = beta_s;
  for (std::size_t h = 0; h < out.size(); ++h) {
    const double s = record.sd(static_cast<Eigen::Index>(h));
    out[h].mean /= s;
    out[h].sd /= s;
    out[h].lower /= s;
    out[h].upper /= s;
  }
  return out;
}

Vector selection_column_norms_sq(const MultilevelDataset& ds) {
  Vector out = Vector::Zero(ds.p_S());
  auto accumulate = [&](const Matrix& XS) {
    out += XS.array().square().colwise().sum().matrix().transpose();
  };
  if (ds.depth == Depth::Two) {
    for (const auto& g : ds.groups) accumulate(g.XS);
  } else {
    for (const auto& g : ds.groups3)
      for (const auto& s : g.subgroups) accumulate(s.XS);
  }
  return out;
}

MultilevelDataset to_two_level(const MultilevelDataset& ds) {
  if (ds.depth != Depth::Three)
    throw Error(ErrorCode::InvalidArgument, "conversion requires a three-level dataset");
  ds.validate();
  if (ds.q1() != ds.q2())
    throw Error(ErrorCode::InvalidArgument, "conversion requires q1 == q2");
  MultilevelDataset out;
  out.depth = Depth::Two;
  out.selection_names = ds.selection_names;
  for (const auto& g : ds.groups3) {
    if (g.subgroups.size() != 1)
      throw Error(ErrorCode::InvalidArgument,
                  "conversion requires a single subgroup per group (n_i = 1)");
    const auto& s = g.subgroups.front();
    TwoLevelGroup t;
    t.id = g.id;
    t.y = s.y;
    t.XR = s.XR;
    t.XA = s.XA;
    t.XS = s.XS;
    t.Z.resize(s.y.size(), s.ZL1.cols() + s.ZL2.cols());
    t.Z << s.ZL1, s.ZL2;
    out.groups.push_back(std::move(t));
  }
  return out;
}

}  // namespace vblmm::data
