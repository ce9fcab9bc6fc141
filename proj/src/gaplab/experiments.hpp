#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gaplab/geometry.hpp"
#include "gaplab/solver.hpp"

namespace gaplab {

struct TheoremTargets {
  int n = 2;
  double p = 2.0;
  double delta = 0.0;
  // Exponents alpha in max|Du| ~ eps^(-alpha); absent when no bound is available.
  std::optional<double> upper_exponent;
  std::optional<double> lower_exponent;
  std::vector<std::string> notes;
  nlohmann::json to_json() const;
};

TheoremTargets theorem_targets(int n, double p, double delta);

struct SweepConfig {
  std::vector<double> epsilons;
  // Neck window |x'| <= window_factor * sqrt(eps / window_delta).
  double window_delta = 0.25;
  double window_factor = 8.0;
  // Scale grid_ns so the cell at x' = 0 is no wider than cell_fraction * sqrt(eps).
  bool resolution_rule = true;
  double cell_fraction = 0.25;
  int min_ns = 64;
  // Oscillation radii osc_top * 2^-k above sqrt(eps).
  double osc_top = 0.4;
  bool exclude_largest = true;
  // delta used for the theorem target band of plots and fit reports.
  double target_delta = 0.1;
  // Re-run the sweep with grid_nt doubled and compare fitted slopes.
  bool check_resolution = false;
  // 0 selects GAPLAB_WORKERS, else the hardware thread count.
  int workers = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

// Solver configuration used for one separation under the sweep's resolution rule.
SolverConfig resolved_config(const SolverConfig& base, const SweepConfig& sweep, double epsilon);
// Dyadic radii osc_top * 2^-k in (sqrt(eps), 1/2).
std::vector<double> dyadic_radii(double epsilon, double top = 0.4);
int default_workers();

struct RateRow {
  double epsilon = 0.0;
  double max_grad_neck = 0.0;
  double max_grad_global = 0.0;
  Vec argmax_xp;
  std::vector<std::pair<double, double>> osc;  // (radius, osc)
  double energy = 0.0;
  bool converged = false;
  int iterations = 0;
  int grid_ns = 0;
  int grid_nt = 0;
};

struct RateTable {
  int dim = 2;
  std::vector<RateRow> rows;
  nlohmann::json geometry;
  nlohmann::json solver;
  nlohmann::json sweep;

  // Union of all oscillation radii, largest first.
  std::vector<double> osc_radii() const;
  std::string to_csv() const;
  static RateTable from_csv(const std::string& text);
};

RateTable sweep_epsilon(const GapGeometry& family, const SolverConfig& cfg, const SweepConfig& sweep);

// One row of the sweep; exposed for tests and single-separation runs.
RateRow measure_row(const DiscreteField& field, const SweepConfig& sweep);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

// Ordinary least squares y = intercept + slope x.
LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y);

struct FitWindow {
  bool exclude_largest = true;
  double eps_min = 0.0;
  double eps_max = 1.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double r2 = 0.0;
  std::vector<double> window;  // epsilons used
  std::size_t excluded_unconverged = 0;
  nlohmann::json to_json() const;
};

// Fits log(max_grad_neck) against log(1/eps) over converged rows in the window.
RateFit fit_rate(const RateTable& table, const FitWindow& window = {});

struct OscillationFit {
  bool degenerate = false;
  double beta = 0.0;
  double stderr_beta = 0.0;
  double r2 = 0.0;
  std::vector<double> radii;
  std::vector<double> osc;
  nlohmann::json to_json() const;
};

// Slope of log osc against log r. Abstains (degenerate) when any oscillation vanishes.
OscillationFit fit_oscillation(const std::vector<double>& radii, const std::vector<double>& osc);
// Oscillation of the field over necks of the given dyadic radii in (sqrt(eps), 1/2).
OscillationFit oscillation_decay_fit(const DiscreteField& field, const std::vector<double>& radii);

struct ResolutionCheck {
  double slope_base = 0.0;
  double slope_refined = 0.0;
  double stderr_base = 0.0;
  bool under_resolved = false;
  nlohmann::json to_json() const;
};

ResolutionCheck compare_resolution(const RateFit& base, const RateFit& refined);

struct PlotOptions {
  std::string title;
  std::optional<TheoremTargets> targets;
};

// Log-log plot of max|Du| against 1/eps with the fitted line and the target band.
std::string rate_plot_svg(const RateTable& table, const RateFit& fit, const PlotOptions& opts);
// The plotted data: epsilon, log(1/eps), log(max_grad), fitted value, in_fit.
std::string rate_plot_csv(const RateTable& table, const RateFit& fit);

}  // namespace gaplab
