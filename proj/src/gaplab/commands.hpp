#pragma once

#include <string>

#include "gaplab/config.hpp"

namespace gaplab {

constexpr const char* kVersion = "0.1.0";

// Summary of a solved field: max |Du|, energy, iterations, residuals.
nlohmann::json solve_summary(const DiscreteField& field);

struct SweepOutcome {
  RateTable table;
  // Present when the table has enough converged rows.
  std::optional<RateFit> fit;
  std::optional<ResolutionCheck> resolution;
  std::string fit_error;
};

// Runs the configured sweep and, when possible, the rate fit and resolution check.
SweepOutcome run_sweep(const RunConfig& cfg);

// Rate fit, theorem targets and (optional) resolution report for a table.
nlohmann::json fit_report(const RateTable& table, const RateFit& fit, const RunConfig& cfg);
FitWindow fit_window(const RunConfig& cfg);
PlotOptions plot_options(const RunConfig& cfg);

// Sign certificate (supersolution/subsolution) or Bernstein report (F variants).
nlohmann::json run_certify(const RunConfig& cfg);

// Lemma-style bound report over the configured radii, with log-log trends.
nlohmann::json run_check_transform(const RunConfig& cfg);

nlohmann::json make_manifest(const RunConfig& cfg, const std::string& command);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
// Creates the directory (and parents) when missing.
void ensure_directory(const std::string& path);

}  // namespace gaplab
