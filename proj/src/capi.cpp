#include "vblmm.h"

#include <memory>
#include <optional>
#include <string>

#include "vblmm/data.hpp"
#include "vblmm/error.hpp"
#include "vblmm/report.hpp"
#include "vblmm/sim.hpp"

namespace {

thread_local std::string g_last_error;

vblmm_status status_of(const vblmm::Error& e) {
  using vblmm::ErrorCode;
  switch (e.code()) {
    case ErrorCode::ConfigError:
      return VBLMM_ERR_CONFIG;
    case ErrorCode::IoError:
      return VBLMM_ERR_IO;
    case ErrorCode::MissingColumn:
    case ErrorCode::RaggedGroup:
    case ErrorCode::NonNumeric:
    case ErrorCode::ConstantColumn:
    case ErrorCode::DimensionMismatch:
      return VBLMM_ERR_DATA;
    case ErrorCode::InvalidArgument:
      return VBLMM_ERR_INVALID_ARGUMENT;
    default:
      return VBLMM_ERR_NUMERIC;
  }
}

template <typename F>
vblmm_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return VBLMM_OK;
  } catch (const vblmm::Error& e) {
    g_last_error = std::string(vblmm::error_code_name(e.code())) + ": " + e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VBLMM_ERR_NUMERIC;
  }
}

vblmm_status require_args(bool ok) {
  if (!ok) {
    g_last_error = "InvalidArgument: null argument";
    return VBLMM_ERR_INVALID_ARGUMENT;
  }
  return VBLMM_OK;
}

}  // namespace

struct vblmm_dataset {
  vblmm::data::MultilevelDataset data;
  std::optional<std::string> truth;  // ground-truth JSON for simulated data
};

struct vblmm_report {
  std::string json;
  std::string csv;  // bench reports only
};

extern "C" {

uint32_t vblmm_api_version(void) { return VBLMM_API_VERSION; }

const char* vblmm_status_name(vblmm_status status) {
  switch (status) {
    case VBLMM_OK: return "ok";
    case VBLMM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case VBLMM_ERR_CONFIG: return "config_error";
    case VBLMM_ERR_IO: return "io_error";
    case VBLMM_ERR_DATA: return "data_error";
    case VBLMM_ERR_NUMERIC: return "numeric_error";
  }
  return "unknown";
}

const char* vblmm_last_error(void) { return g_last_error.c_str(); }

vblmm_status vblmm_dataset_load_csv(const char* csv_path, const char* schema_json,
                                    vblmm_dataset** out) {
  if (auto s = require_args(csv_path && schema_json && out); s != VBLMM_OK) return s;
  return guarded([&] {
    auto schema = vblmm::data::CsvSchema::from_json_text(schema_json);
    auto handle = std::make_unique<vblmm_dataset>();
    handle->data = vblmm::data::load_csv(csv_path, schema);
    *out = handle.release();
  });
}

vblmm_status vblmm_dataset_simulate(const char* sim_config_json, uint64_t seed,
                                    vblmm_dataset** out) {
  if (auto s = require_args(sim_config_json && out); s != VBLMM_OK) return s;
  return guarded([&] {
    const auto cfg = vblmm::report::sim_config_from_json(sim_config_json);
    auto [ds, truth] = vblmm::sim::simulate(cfg, seed);
    auto handle = std::make_unique<vblmm_dataset>();
    handle->data = std::move(ds);
    // The written column layout describes the dataset, so reuse it for the
    // truth document's embedded schema.
    vblmm::data::CsvSchema schema;
    schema.response = "y";
    schema.group_id = "group";
    if (handle->data.depth == vblmm::data::Depth::Three) schema.subgroup_id = "subgroup";
    for (Eigen::Index i = 0; i < handle->data.p_R(); ++i)
      schema.r_cols.push_back("xr" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < handle->data.p_A(); ++i)
      schema.a_cols.push_back("xa" + std::to_string(i + 1));
    schema.s_cols = handle->data.selection_names;
    handle->truth = vblmm::report::truth_json(truth, schema, seed);
    *out = handle.release();
  });
}

vblmm_status vblmm_dataset_write_csv(const vblmm_dataset* ds, const char* csv_path) {
  if (auto s = require_args(ds && csv_path); s != VBLMM_OK) return s;
  return guarded([&] { vblmm::data::write_csv(ds->data, csv_path); });
}

vblmm_status vblmm_dataset_truth_json(const vblmm_dataset* ds, const char** out_json) {
  if (auto s = require_args(ds && out_json); s != VBLMM_OK) return s;
  return guarded([&] {
    if (!ds->truth)
      throw vblmm::Error(vblmm::ErrorCode::InvalidArgument,
                         "dataset was not produced by the generator");
    *out_json = ds->truth->c_str();
  });
}

size_t vblmm_dataset_group_count(const vblmm_dataset* ds) {
  return ds ? static_cast<size_t>(ds->data.m()) : 0;
}

size_t vblmm_dataset_observation_count(const vblmm_dataset* ds) {
  return ds ? static_cast<size_t>(ds->data.total_obs()) : 0;
}

void vblmm_dataset_free(vblmm_dataset* ds) { delete ds; }

vblmm_status vblmm_fit(const vblmm_dataset* ds, const char* config_json, vblmm_report** out) {
  if (auto s = require_args(ds && config_json && out); s != VBLMM_OK) return s;
  return guarded([&] {
    auto handle = std::make_unique<vblmm_report>();
    handle->json = vblmm::report::run_fit(ds->data, config_json);
    *out = handle.release();
  });
}

vblmm_status vblmm_evaluate(const char* config_json, vblmm_report** out) {
  if (auto s = require_args(config_json && out); s != VBLMM_OK) return s;
  return guarded([&] {
    auto handle = std::make_unique<vblmm_report>();
    handle->json = vblmm::report::run_evaluate(config_json);
    *out = handle.release();
  });
}

vblmm_status vblmm_bench(const char* config_json, vblmm_report** out) {
  if (auto s = require_args(config_json && out); s != VBLMM_OK) return s;
  return guarded([&] {
    auto handle = std::make_unique<vblmm_report>();
    handle->json = vblmm::report::run_bench(config_json);
    handle->csv = vblmm::report::bench_report_csv(handle->json);
    *out = handle.release();
  });
}

const char* vblmm_report_json(const vblmm_report* report) {
  return report ? report->json.c_str() : nullptr;
}

const char* vblmm_report_csv(const vblmm_report* report) {
  return (report && !report->csv.empty()) ? report->csv.c_str() : nullptr;
}

void vblmm_report_free(vblmm_report* report) { delete report; }

}  // extern "C"
