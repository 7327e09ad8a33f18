#pragma once

#include <cstdint>
#include <string>

#include "vblmm/data.hpp"
#include "vblmm/mfvb.hpp"
#include "vblmm/sim.hpp"

namespace vblmm::report {

inline constexpr int kSchemaVersion = 1;

// Config parsing (JSON text -> typed configs).  Prior and fit options start
// from diffuse/default values; any field present overrides it.
model::PriorSpec prior_from_json(const std::string& text, const data::MultilevelDataset& ds);
model::FitOptions fit_options_from_json(const std::string& text);
sim::SimConfig sim_config_from_json(const std::string& text);
sim::EvalConfig eval_config_from_json(const std::string& text);

/// Complete fit pipeline: optional standardization, MFVB fit, selection,
/// destandardization.  Returns the fit-result document as JSON text.
std::string run_fit(const data::MultilevelDataset& ds, const std::string& config_json);

/// Ground-truth document for a simulated dataset.
std::string truth_json(const sim::GroundTruth& truth, const data::CsvSchema& schema,
                       std::uint64_t seed);

/// Replicated evaluation pipeline; returns the evaluation report as JSON.
std::string run_evaluate(const std::string& config_json);

/// Timing/memory grid; returns the bench report as JSON with a row per
/// (m, p_S) cell.
std::string run_bench(const std::string& config_json);

/// CSV rendering of a bench report document.
std::string bench_report_csv(const std::string& report_json);

}  // namespace vblmm::report
