#pragma once

#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

#include "gaplab/expression.hpp"
#include "gaplab/geometry.hpp"
#include "gaplab/transforms.hpp"

namespace gaplab {

struct ContinuationStep {
  double p;
  double eta;
};

struct SolverConfig {
  double p = 2.0;
  double eta = 1e-10;
  // Tangential cells across [-r, r] on each tangential axis (even), and transverse cells.
  int grid_ns = 64;
  int grid_nt = 16;
  // Ratio of successive tangential cell widths moving away from x' = 0.
  double grading = 1.05;
  double outer_radius = 0.5;
  // Closed-form trace imposed on the lateral boundary.
  std::string dirichlet = "x1";
  double newton_tol = 1e-10;
  // Newton iterations allowed per continuation stage.
  int max_newton = 60;
  // Explicit (p, eta) schedule; empty means geometric steps from (2, 1e-2).
  std::vector<ContinuationStep> continuation;
  int continuation_steps = 8;
  // Number of midpoint refinements applied to the base grid.
  int refine = 0;

  void validate() const;
  std::vector<ContinuationStep> schedule() const;
  nlohmann::json to_json() const;
  static SolverConfig from_json(const nlohmann::json& j);
};

// Tensor grid in chart coordinates: the same tangential node set on every
// tangential axis, transverse nodes t in [0, 1]. Transverse index runs fastest.
struct TensorGrid {
  int dim = 2;
  std::vector<double> s;
  std::vector<double> t;

  int ns() const { return static_cast<int>(s.size()); }
  int nt() const { return static_cast<int>(t.size()); }
  std::size_t node_count() const;
  std::size_t cell_count() const;
  // Tangential multi-index (size dim-1) and transverse index.
  std::size_t node(const int* tang, int k) const;
};

TensorGrid make_grid(int dim, double radius, int ns_cells, int nt_cells, double grading, int refine = 0);

// Corner simplices of every cell: at each of the 2^n cell corners, the simplex
// spanned by that corner and its n neighbours along the grid axes. Averaging over
// all corners keeps the discrete energy invariant under axis reflections.
struct SimplexMesh {
  int dim = 2;
  std::size_t count = 0;
  std::vector<int> nodes;      // (dim+1) per simplex; nodes[0] is the corner
  std::vector<double> grad;    // dim x (dim+1) row-major per simplex: g = G u_local
  std::vector<double> weight;  // quadrature weight per simplex
  std::vector<int> cell;       // owning cell per simplex
  int corners_per_cell() const { return 1 << dim; }
};

struct TraceEntry {
  int stage = 0;
  double p = 2.0;
  double eta = 0.0;
  int iteration = 0;
  double energy = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
  double decrease = 0.0;
  std::string kind;
};

struct SolveDiagnostics {
  bool converged = false;
  int iterations = 0;
  std::string message;
  std::vector<TraceEntry> trace;
  // max |Du| over the grid after each continuation stage.
  std::vector<double> stage_max_grad;
  double final_energy = 0.0;
  double final_grad_norm = 0.0;
};

class DiscreteField {
 public:
  DiscreteField(const GapGeometry& geom, const SolverConfig& cfg);

  const GapGeometry& geometry() const { return chart_.geometry(); }
  const NeckChart& chart() const { return chart_; }
  const TensorGrid& grid() const { return grid_; }
  const SimplexMesh& mesh() const { return *mesh_; }
  const SolverConfig& config() const { return cfg_; }
  std::size_t size() const { return grid_.node_count(); }

  // Physical position of node i (column i).
  const Mat& points() const { return *points_; }
  Vec point(std::size_t i) const { return points_->col(static_cast<Eigen::Index>(i)); }
  const std::vector<char>& dirichlet_mask() const { return *dirichlet_; }
  const std::vector<int>& free_index() const { return *free_index_; }
  int free_count() const { return free_count_; }

  // Sets every node from a function of its physical position.
  template <class F>
  void fill(F&& f) {
    for (std::size_t i = 0; i < size(); ++i) values[static_cast<Eigen::Index>(i)] = f(point(i));
  }
  // Resets the lateral boundary nodes to the configured trace.
  void impose_dirichlet();
  double dirichlet_value(const Vec& x) const { return (*trace_)(x); }

  Eigen::VectorXd values;
  SolveDiagnostics diagnostics;

  nlohmann::json to_json() const;
  static DiscreteField from_json(const nlohmann::json& j);

 private:
  NeckChart chart_;
  SolverConfig cfg_;
  TensorGrid grid_;
  std::shared_ptr<const Expression> trace_;
  std::shared_ptr<const SimplexMesh> mesh_;
  std::shared_ptr<const Mat> points_;
  std::shared_ptr<const std::vector<char>> dirichlet_;
  std::shared_ptr<const std::vector<int>> free_index_;
  int free_count_ = 0;
};

struct EnergyAssembly {
  double energy = 0.0;
  // Full-length gradient, zero at Dirichlet nodes.
  Eigen::VectorXd gradient;
  // Hessian restricted to free nodes (ordering of DiscreteField::free_index).
  Eigen::SparseMatrix<double> hessian;
};

// Discrete energy sum_T w_T (eta + |Du_T|^2)^(p/2) / p of the nodal values u.
double discrete_energy(const DiscreteField& field, const Eigen::VectorXd& u, double p, double eta);
// J(u + du) - J(u) evaluated term by term without cancellation.
double energy_difference(const DiscreteField& field, const Eigen::VectorXd& u, const Eigen::VectorXd& du,
                         double p, double eta);
// lagged = true assembles the lagged-coefficient (Picard) matrix instead of the Hessian.
EnergyAssembly assemble_energy(const DiscreteField& field, const Eigen::VectorXd& u, double p, double eta,
                               bool with_hessian = true, bool lagged = false);
inline EnergyAssembly assemble_energy(const DiscreteField& field, const SolverConfig& cfg) {
  return assemble_energy(field, field.values, cfg.p, cfg.eta);
}

// Minimizes the discrete energy with damped Newton steps along the (p, eta)
// continuation schedule. Returns the best iterate; diagnostics say whether the
// final tolerance was met.
DiscreteField solve(const GapGeometry& geom, const SolverConfig& cfg);

struct CellGradient {
  Vec center;
  double magnitude = 0.0;
};

struct GradientField {
  std::vector<CellGradient> cells;
  std::size_t argmax = 0;
  double max() const { return cells.empty() ? 0.0 : cells[argmax].magnitude; }
  // Largest |Du| among cells whose centre lies in the region, with the same tie rule.
  std::size_t argmax_in(const Region& region) const;
};

GradientField gradient_field(const DiscreteField& field);
// Cell-average gradient vectors (physical coordinates), one column per cell.
Mat cell_gradients(const DiscreteField& field, const Eigen::VectorXd& u);

double oscillation(const DiscreteField& field, const Region& region);

struct NeumannResidual {
  double flux_L2_upper = 0.0;
  double flux_L2_lower = 0.0;
};

NeumannResidual neumann_residual(const DiscreteField& field);

}  // namespace gaplab
