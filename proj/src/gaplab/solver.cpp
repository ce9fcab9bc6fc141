#include "gaplab/solver.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gaplab/error.hpp"

namespace gaplab {

// ---------------------------------------------------------------------------
// Configuration

void SolverConfig::validate() const {
  if (!(p > 1.0) || !std::isfinite(p)) throw InvalidArgument("solver.p must exceed 1");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidArgument("solver.eta must be non-negative");
  if (grid_ns < 8 || grid_ns % 2 != 0) throw InvalidArgument("solver.grid_ns must be an even integer >= 8");
  if (grid_nt < 8) throw InvalidArgument("solver.grid_nt must be >= 8");
  if (!(grading >= 1.0 && grading < 2.0)) throw InvalidArgument("solver.grading must lie in [1, 2)");
  if (!(outer_radius > 0.0 && outer_radius <= 0.5)) throw InvalidArgument("solver.outer_radius must lie in (0, 1/2]");
  if (!(newton_tol > 0.0)) throw InvalidArgument("solver.newton_tol must be positive");
  if (max_newton < 1) throw InvalidArgument("solver.max_newton must be positive");
  if (continuation_steps < 1) throw InvalidArgument("solver.continuation_steps must be positive");
  if (refine < 0 || refine > 6) throw InvalidArgument("solver.refine must lie in [0, 6]");
  if (!continuation.empty()) {
    for (const auto& st : continuation)
      if (!(st.p > 1.0) || !(st.eta >= 0.0)) throw InvalidArgument("solver.continuation has an invalid (p, eta) pair");
    const auto& last = continuation.back();
    if (last.p != p || last.eta != eta)
      throw InvalidArgument("solver.continuation must end at the target (p, eta)");
  }
  Expression check(dirichlet);
  (void)check;
}

std::vector<ContinuationStep> SolverConfig::schedule() const {
  if (!continuation.empty()) return continuation;
  std::vector<ContinuationStep> out;
  const double p0 = 2.0;
  const double eta0 = 1e-2;
  const int k = continuation_steps;
  for (int i = 0; i <= k; ++i) {
    double f = static_cast<double>(i) / k;
    double pi = p0 * std::pow(p / p0, f);
    double ei = eta > 0.0 ? eta0 * std::pow(eta / eta0, f) : (i == k ? 0.0 : eta0 * std::pow(1e-12 / eta0, f));
    out.push_back({pi, ei});
  }
  out.back() = {p, eta};
  return out;
}

nlohmann::json SolverConfig::to_json() const {
  nlohmann::json sched = nlohmann::json::array();
  for (const auto& st : continuation) sched.push_back({st.p, st.eta});
  return {{"p", p},
          {"eta", eta},
          {"grid_ns", grid_ns},
          {"grid_nt", grid_nt},
          {"grading", grading},
          {"outer_radius", outer_radius},
          {"dirichlet", dirichlet},
          {"newton_tol", newton_tol},
          {"max_newton", max_newton},
          {"continuation", sched},
          {"continuation_steps", continuation_steps},
          {"refine", refine}};
}

SolverConfig SolverConfig::from_json(const nlohmann::json& j) {
  SolverConfig c;
  c.p = j.at("p").get<double>();
  c.eta = j.at("eta").get<double>();
  c.grid_ns = j.at("grid_ns").get<int>();
  c.grid_nt = j.at("grid_nt").get<int>();
  c.grading = j.at("grading").get<double>();
  c.outer_radius = j.at("outer_radius").get<double>();
  c.dirichlet = j.at("dirichlet").get<std::string>();
  c.newton_tol = j.at("newton_tol").get<double>();
  c.max_newton = j.at("max_newton").get<int>();
  for (const auto& st : j.at("continuation")) c.continuation.push_back({st.at(0).get<double>(), st.at(1).get<double>()});
  c.continuation_steps = j.at("continuation_steps").get<int>();
  c.refine = j.at("refine").get<int>();
  return c;
}

// ---------------------------------------------------------------------------
// Grid and mesh

std::size_t TensorGrid::node_count() const {
  std::size_t n = static_cast<std::size_t>(nt());
  for (int d = 0; d < dim - 1; ++d) n *= static_cast<std::size_t>(ns());
  return n;
}

std::size_t TensorGrid::cell_count() const {
  std::size_t n = static_cast<std::size_t>(nt() - 1);
  for (int d = 0; d < dim - 1; ++d) n *= static_cast<std::size_t>(ns() - 1);
  return n;
}

std::size_t TensorGrid::node(const int* tang, int k) const {
  std::size_t idx = 0;
  for (int d = 0; d < dim - 1; ++d) idx = idx * static_cast<std::size_t>(ns()) + static_cast<std::size_t>(tang[d]);
  return idx * static_cast<std::size_t>(nt()) + static_cast<std::size_t>(k);
}

namespace {

std::vector<double> insert_midpoints(const std::vector<double>& v) {
  std::vector<double> out;
  out.reserve(2 * v.size() - 1);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    out.push_back(v[i]);
    out.push_back(0.5 * (v[i] + v[i + 1]));
  }
  out.push_back(v.back());
  return out;
}

}  // namespace

TensorGrid make_grid(int dim, double radius, int ns_cells, int nt_cells, double grading, int refine) {
  if (dim < 2 || dim > 3) throw InvalidArgument("the solver supports n = 2 and n = 3");
  if (ns_cells < 2 || ns_cells % 2 != 0) throw InvalidArgument("tangential cell count must be even");
  if (nt_cells < 1) throw InvalidArgument("transverse cell count must be positive");
  TensorGrid g;
  g.dim = dim;
  const int m = ns_cells / 2;
  double d0 = grading == 1.0 ? radius / m : radius * (grading - 1.0) / (std::pow(grading, m) - 1.0);
  std::vector<double> half{0.0};
  double w = d0;
  for (int k = 0; k < m; ++k) {
    half.push_back(half.back() + w);
    w *= grading;
  }
  half.back() = radius;
  for (int k = m; k >= 1; --k) g.s.push_back(-half[k]);
  for (int k = 0; k <= m; ++k) g.s.push_back(half[k]);
  for (int k = 0; k <= nt_cells; ++k) g.t.push_back(static_cast<double>(k) / nt_cells);
  for (int r = 0; r < refine; ++r) {
    g.s = insert_midpoints(g.s);
    g.t = insert_midpoints(g.t);
  }
  return g;
}

namespace {

template <int N>
std::shared_ptr<SimplexMesh> build_mesh(const TensorGrid& grid, const Mat& pts) {
  using MatN = Eigen::Matrix<double, N, N>;
  auto mesh = std::make_shared<SimplexMesh>();
  mesh->dim = N;
  const int corners = 1 << N;
  const std::size_t cells = grid.cell_count();
  mesh->count = cells * corners;
  mesh->nodes.resize(mesh->count * (N + 1));
  mesh->grad.resize(mesh->count * N * (N + 1));
  mesh->weight.resize(mesh->count);
  mesh->cell.resize(mesh->count);
  const int ns = grid.ns();
  const int nt = grid.nt();

  std::size_t cell = 0;
  std::size_t simplex = 0;
  int tang[2] = {0, 0};
  int ncells_t = N == 3 ? (ns - 1) * (ns - 1) : (ns - 1);
  for (int ct = 0; ct < ncells_t; ++ct) {
    int base[2];
    if (N == 3) {
      base[0] = ct / (ns - 1);
      base[1] = ct % (ns - 1);
    } else {
      base[0] = ct;
      base[1] = 0;
    }
    for (int k = 0; k < nt - 1; ++k, ++cell) {
      for (int c = 0; c < corners; ++c) {
        auto node_of = [&](int mask) {
          for (int d = 0; d < N - 1; ++d) tang[d] = base[d] + ((mask >> d) & 1);
          int kk = k + ((mask >> (N - 1)) & 1);
          return static_cast<int>(grid.node(tang, kk));
        };
        int corner = node_of(c);
        MatN e;
        int* nd = &mesh->nodes[simplex * (N + 1)];
        nd[0] = corner;
        for (int d = 0; d < N; ++d) {
          int nb = node_of(c ^ (1 << d));
          nd[d + 1] = nb;
          e.row(d) = (pts.col(nb) - pts.col(corner)).transpose();
        }
        double det = e.determinant();
        if (!(std::abs(det) > 0.0)) throw NumericalError("degenerate simplex in cell " + std::to_string(cell));
        MatN gi = e.inverse();
        double* gm = &mesh->grad[simplex * N * (N + 1)];
        for (int r = 0; r < N; ++r) {
          double sum = 0.0;
          for (int d = 0; d < N; ++d) {
            gm[r * (N + 1) + d + 1] = gi(r, d);
            sum += gi(r, d);
          }
          gm[r * (N + 1)] = -sum;
        }
        mesh->weight[simplex] = std::abs(det) / corners;
        mesh->cell[simplex] = static_cast<int>(cell);
        ++simplex;
      }
    }
  }
  return mesh;
}

}  // namespace

DiscreteField::DiscreteField(const GapGeometry& geom, const SolverConfig& cfg)
    : chart_(geom, Vec::Zero(geom.dim - 1), cfg.outer_radius), cfg_(cfg) {
  cfg_.validate();
  const int n = geom.dim;
  if (n < 2 || n > 3) throw InvalidArgument("the solver supports n = 2 and n = 3");
  if (cfg.outer_radius * (n == 3 ? std::sqrt(2.0) : 1.0) >= geom.profile_radius())
    throw InvalidArgument("grid extends past the profile domain");
  grid_ = make_grid(n, cfg.outer_radius, cfg.grid_ns, cfg.grid_nt, cfg.grading, cfg.refine);
  trace_ = std::make_shared<Expression>(cfg.dirichlet);
  if (trace_->max_variable() > n) throw ConfigError("solver.dirichlet refers to a coordinate beyond x" + std::to_string(n));

  const std::size_t count = grid_.node_count();
  auto pts = std::make_shared<Mat>(n, static_cast<Eigen::Index>(count));
  auto mask = std::make_shared<std::vector<char>>(count, 0);
  const int ns = grid_.ns();
  const int nt = grid_.nt();
  int tang[2] = {0, 0};
  const int ntang = n == 3 ? ns * ns : ns;
  for (int it = 0; it < ntang; ++it) {
    if (n == 3) {
      tang[0] = it / ns;
      tang[1] = it % ns;
    } else {
      tang[0] = it;
    }
    Vec xp(n - 1);
    bool lateral = false;
    for (int d = 0; d < n - 1; ++d) {
      xp[d] = grid_.s[tang[d]];
      if (tang[d] == 0 || tang[d] == ns - 1) lateral = true;
    }
    for (int k = 0; k < nt; ++k) {
      std::size_t idx = grid_.node(tang, k);
      pts->col(static_cast<Eigen::Index>(idx)) = chart_.point_at(xp, grid_.t[k]);
      (*mask)[idx] = lateral ? 1 : 0;
    }
  }
  points_ = pts;
  dirichlet_ = mask;
  auto fidx = std::make_shared<std::vector<int>>(count, -1);
  int nfree = 0;
  for (std::size_t i = 0; i < count; ++i)
    if (!(*mask)[i]) (*fidx)[i] = nfree++;
  free_index_ = fidx;
  free_count_ = nfree;
  mesh_ = n == 2 ? std::shared_ptr<const SimplexMesh>(build_mesh<2>(grid_, *pts))
                 : std::shared_ptr<const SimplexMesh>(build_mesh<3>(grid_, *pts));
  values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
}

void DiscreteField::impose_dirichlet() {
  for (std::size_t i = 0; i < size(); ++i)
    if ((*dirichlet_)[i]) values[static_cast<Eigen::Index>(i)] = (*trace_)(point(i));
}

// ---------------------------------------------------------------------------
// Energy

namespace {

struct Coefficient {
  double value;  // (eta + |g|^2)^(p/2) / p
  double a;      // (eta + |g|^2)^((p-2)/2)
  double b;      // (p-2) (eta + |g|^2)^((p-4)/2)
};

Coefficient coefficient(double s, double p) {
  Coefficient c;
  if (s > 0.0) {
    double sp = std::pow(s, 0.5 * p - 2.0);
    c.b = (p - 2.0) * sp;
    c.a = sp * s;
    c.value = c.a * s / p;
  } else {
    c.value = 0.0;
    c.a = p == 2.0 ? 1.0 : (p > 2.0 ? 0.0 : std::numeric_limits<double>::infinity());
    c.b = (p == 2.0 || p >= 4.0) ? (p == 4.0 ? 2.0 : 0.0) : (p > 2.0 ? std::numeric_limits<double>::infinity()
                                                                       : -std::numeric_limits<double>::infinity());
  }
  return c;
}

template <int N>
void assemble_impl(const DiscreteField& f, const Eigen::VectorXd& u, double p, double eta, bool with_hessian,
                   bool lagged, EnergyAssembly& out) {
  using VecN = Eigen::Matrix<double, N, 1>;
  using Loc = Eigen::Matrix<double, N + 1, 1>;
  using G = Eigen::Matrix<double, N, N + 1, Eigen::RowMajor>;
  using H = Eigen::Matrix<double, N + 1, N + 1>;
  const SimplexMesh& m = f.mesh();
  const auto& fidx = f.free_index();
  out.energy = 0.0;
  out.gradient = Eigen::VectorXd::Zero(u.size());
  std::vector<Eigen::Triplet<double>> trip;
  if (with_hessian) trip.reserve(m.count * (N + 1) * (N + 1));
  for (std::size_t t = 0; t < m.count; ++t) {
    const int* nd = &m.nodes[t * (N + 1)];
    Eigen::Map<const G> gm(&m.grad[t * N * (N + 1)]);
    Loc ul;
    for (int i = 0; i <= N; ++i) ul[i] = u[nd[i]];
    VecN g = gm * ul;
    double s = eta + g.squaredNorm();
    Coefficient c = coefficient(s, p);
    double w = m.weight[t];
    if (!std::isfinite(c.value) || !std::isfinite(c.a))
      throw NumericalError("non-finite energy density in cell " + std::to_string(m.cell[t]));
    out.energy += w * c.value;
    Loc gl = w * c.a * (gm.transpose() * g);
    for (int i = 0; i <= N; ++i)
      if (fidx[nd[i]] >= 0) out.gradient[nd[i]] += gl[i];
    if (with_hessian) {
      H h;
      if (lagged || p == 2.0) {
        h = w * c.a * (gm.transpose() * gm);
      } else {
        if (!std::isfinite(c.b)) throw NumericalError("singular Hessian in cell " + std::to_string(m.cell[t]));
        Eigen::Matrix<double, N, N> k = c.a * Eigen::Matrix<double, N, N>::Identity() + c.b * g * g.transpose();
        h = w * (gm.transpose() * k * gm);
      }
      for (int i = 0; i <= N; ++i) {
        int fi = fidx[nd[i]];
        if (fi < 0) continue;
        for (int j = 0; j <= N; ++j) {
          int fj = fidx[nd[j]];
          if (fj < 0) continue;
          trip.emplace_back(fi, fj, h(i, j));
        }
      }
    }
  }
  if (!std::isfinite(out.energy)) throw NumericalError("non-finite discrete energy");
  if (with_hessian) {
    out.hessian.resize(f.free_count(), f.free_count());
    out.hessian.setFromTriplets(trip.begin(), trip.end());
  }
}

template <int N>
double energy_impl(const DiscreteField& f, const Eigen::VectorXd& u, const Eigen::VectorXd* du, double p,
                   double eta) {
  using VecN = Eigen::Matrix<double, N, 1>;
  using Loc = Eigen::Matrix<double, N + 1, 1>;
  using G = Eigen::Matrix<double, N, N + 1, Eigen::RowMajor>;
  const SimplexMesh& m = f.mesh();
  double total = 0.0;
  const double half = 0.5 * p;
  for (std::size_t t = 0; t < m.count; ++t) {
    const int* nd = &m.nodes[t * (N + 1)];
    Eigen::Map<const G> gm(&m.grad[t * N * (N + 1)]);
    Loc ul;
    for (int i = 0; i <= N; ++i) ul[i] = u[nd[i]];
    VecN g = gm * ul;
    double s0 = eta + g.squaredNorm();
    double term;
    if (!du) {
      term = std::pow(s0, half);
    } else {
      Loc dl;
      for (int i = 0; i <= N; ++i) dl[i] = (*du)[nd[i]];
      VecN dg = gm * dl;
      double ds = dg.dot(2.0 * g + dg);
      double x = s0 > 0.0 ? ds / s0 : std::numeric_limits<double>::infinity();
      if (x > -0.5 && std::isfinite(x))
        term = std::pow(s0, half) * std::expm1(half * std::log1p(x));
      else
        term = std::pow(std::max(s0 + ds, 0.0), half) - std::pow(s0, half);
    }
    total += m.weight[t] * term;
  }
  total /= p;
  if (!std::isfinite(total)) throw NumericalError("non-finite discrete energy");
  return total;
}

}  // namespace

double discrete_energy(const DiscreteField& field, const Eigen::VectorXd& u, double p, double eta) {
  return field.mesh().dim == 2 ? energy_impl<2>(field, u, nullptr, p, eta) : energy_impl<3>(field, u, nullptr, p, eta);
}

double energy_difference(const DiscreteField& field, const Eigen::VectorXd& u, const Eigen::VectorXd& du,
                         double p, double eta) {
  return field.mesh().dim == 2 ? energy_impl<2>(field, u, &du, p, eta) : energy_impl<3>(field, u, &du, p, eta);
}

EnergyAssembly assemble_energy(const DiscreteField& field, const Eigen::VectorXd& u, double p, double eta,
                               bool with_hessian, bool lagged) {
  if (u.size() != static_cast<Eigen::Index>(field.size())) throw InvalidArgument("nodal vector has the wrong size");
  EnergyAssembly out;
  if (field.mesh().dim == 2)
    assemble_impl<2>(field, u, p, eta, with_hessian, lagged, out);
  else
    assemble_impl<3>(field, u, p, eta, with_hessian, lagged, out);
  return out;
}

// ---------------------------------------------------------------------------
// Newton driver

namespace {

Eigen::VectorXd gather_free(const DiscreteField& f, const Eigen::VectorXd& full) {
  Eigen::VectorXd out(f.free_count());
  const auto& fidx = f.free_index();
  for (std::size_t i = 0; i < fidx.size(); ++i)
    if (fidx[i] >= 0) out[fidx[i]] = full[static_cast<Eigen::Index>(i)];
  return out;
}

Eigen::VectorXd scatter_free(const DiscreteField& f, const Eigen::VectorXd& freev) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.size()));
  const auto& fidx = f.free_index();
  for (std::size_t i = 0; i < fidx.size(); ++i)
    if (fidx[i] >= 0) out[static_cast<Eigen::Index>(i)] = freev[fidx[i]];
  return out;
}

}  // namespace

DiscreteField solve(const GapGeometry& geom, const SolverConfig& cfg) {
  DiscreteField field(geom, cfg);
  field.fill([&](const Vec& x) { return field.dirichlet_value(x); });
  auto schedule = cfg.schedule();
  SolveDiagnostics& diag = field.diagnostics;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analyzed = false;
  bool failed = false;

  for (std::size_t stage = 0; stage < schedule.size() && !failed; ++stage) {
    const double p = schedule[stage].p;
    const double eta = schedule[stage].eta;
    const bool last = stage + 1 == schedule.size();
    const double tol = last ? cfg.newton_tol : std::max(cfg.newton_tol, 1e-6);
    bool stage_done = false;
    for (int it = 0; it < cfg.max_newton; ++it) {
      EnergyAssembly as = assemble_energy(field, field.values, p, eta, true, false);
      Eigen::VectorXd g = gather_free(field, as.gradient);
      double gn = g.norm();
      diag.final_energy = as.energy;
      diag.final_grad_norm = gn;
      if (gn <= tol * (1.0 + std::abs(as.energy))) {
        stage_done = true;
        break;
      }
      if (!analyzed) {
        ldlt.analyzePattern(as.hessian);
        analyzed = true;
      }
      std::string kind = "newton";
      Eigen::VectorXd d;
      ldlt.factorize(as.hessian);
      bool ok = ldlt.info() == Eigen::Success;
      if (ok) {
        d = ldlt.solve(-g);
        ok = d.allFinite() && g.dot(d) < 0.0;
      }
      if (!ok) {
        kind = "picard";
        EnergyAssembly lag = assemble_energy(field, field.values, p, eta, true, true);
        ldlt.factorize(lag.hessian);
        if (ldlt.info() != Eigen::Success) {
          diag.message = "factorization failed at stage " + std::to_string(stage);
          failed = true;
          break;
        }
        d = ldlt.solve(-g);
        if (!(g.dot(d) < 0.0)) {
          diag.message = "no descent direction at stage " + std::to_string(stage);
          failed = true;
          break;
        }
      }
      Eigen::VectorXd dfull = scatter_free(field, d);
      double slope = g.dot(d);
      double alpha = 1.0;
      double dec = 0.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        dec = energy_difference(field, field.values, alpha * dfull, p, eta);
        if (dec <= 1e-4 * alpha * slope) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        std::ostringstream os;
        os << "line search failed at stage " << stage << " (gradient norm " << gn << ")";
        diag.message = os.str();
        failed = true;
        break;
      }
      field.values += alpha * dfull;
      ++diag.iterations;
      diag.trace.push_back({static_cast<int>(stage), p, eta, it, as.energy, gn, alpha, dec, kind});
    }
    if (!failed && !stage_done) {
      diag.message = "Newton iteration limit reached at stage " + std::to_string(stage);
      failed = true;
    }
    diag.stage_max_grad.push_back(gradient_field(field).max());
  }
  diag.converged = !failed;
  if (diag.converged) {
    diag.final_energy = discrete_energy(field, field.values, cfg.p, cfg.eta);
    diag.message = "converged";
  }
  return field;
}

// ---------------------------------------------------------------------------
// Derived quantities

namespace {

template <int N>
Mat cell_gradients_impl(const DiscreteField& f, const Eigen::VectorXd& u) {
  using Loc = Eigen::Matrix<double, N + 1, 1>;
  using G = Eigen::Matrix<double, N, N + 1, Eigen::RowMajor>;
  const SimplexMesh& m = f.mesh();
  const int corners = 1 << N;
  Mat out = Mat::Zero(N, static_cast<Eigen::Index>(f.grid().cell_count()));
  for (std::size_t t = 0; t < m.count; ++t) {
    const int* nd = &m.nodes[t * (N + 1)];
    Eigen::Map<const G> gm(&m.grad[t * N * (N + 1)]);
    Loc ul;
    for (int i = 0; i <= N; ++i) ul[i] = u[nd[i]];
    out.col(m.cell[t]) += gm * ul / corners;
  }
  return out;
}

// Tie rule for maxima: larger value, then smaller |x'|, then lexicographic.
bool better(const CellGradient& a, const CellGradient& b) {
  if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
  const int t = static_cast<int>(a.center.size()) - 1;
  double ra = a.center.head(t).norm();
  double rb = b.center.head(t).norm();
  if (ra != rb) return ra < rb;
  for (int i = 0; i < a.center.size(); ++i)
    if (a.center[i] != b.center[i]) return a.center[i] < b.center[i];
  return false;
}

}  // namespace

Mat cell_gradients(const DiscreteField& field, const Eigen::VectorXd& u) {
  return field.mesh().dim == 2 ? cell_gradients_impl<2>(field, u) : cell_gradients_impl<3>(field, u);
}

GradientField gradient_field(const DiscreteField& field) {
  const int n = field.geometry().dim;
  const TensorGrid& grid = field.grid();
  Mat grads = cell_gradients(field, field.values);
  GradientField out;
  out.cells.resize(grid.cell_count());
  const int ns = grid.ns();
  const int nt = grid.nt();
  std::size_t cell = 0;
  const int ncells_t = n == 3 ? (ns - 1) * (ns - 1) : (ns - 1);
  for (int ct = 0; ct < ncells_t; ++ct) {
    Vec xp(n - 1);
    if (n == 3) {
      int i = ct / (ns - 1), j = ct % (ns - 1);
      xp[0] = 0.5 * (grid.s[i] + grid.s[i + 1]);
      xp[1] = 0.5 * (grid.s[j] + grid.s[j + 1]);
    } else {
      xp[0] = 0.5 * (grid.s[ct] + grid.s[ct + 1]);
    }
    for (int k = 0; k < nt - 1; ++k, ++cell) {
      CellGradient& cg = out.cells[cell];
      cg.center = field.chart().point_at(xp, 0.5 * (grid.t[k] + grid.t[k + 1]));
      cg.magnitude = grads.col(static_cast<Eigen::Index>(cell)).norm();
      if (cell == 0 || better(cg, out.cells[out.argmax])) out.argmax = cell;
    }
  }
  return out;
}

std::size_t GradientField::argmax_in(const Region& region) const {
  std::size_t best = cells.size();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Vec& c = cells[i].center;
    if (!region.contains(c.head(c.size() - 1))) continue;
    if (best == cells.size() || better(cells[i], cells[best])) best = i;
  }
  if (best == cells.size()) throw InvalidArgument("region contains no cell centre");
  return best;
}

double oscillation(const DiscreteField& field, const Region& region) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  const int t = field.geometry().dim - 1;
  for (std::size_t i = 0; i < field.size(); ++i) {
    Vec x = field.point(i);
    if (!region.contains(x.head(t))) continue;
    double v = field.values[static_cast<Eigen::Index>(i)];
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi >= lo)) throw InvalidArgument("region does not intersect the grid");
  return hi - lo;
}

namespace {

template <int N>
NeumannResidual neumann_impl(const DiscreteField& f) {
  using VecN = Eigen::Matrix<double, N, 1>;
  using Loc = Eigen::Matrix<double, N + 1, 1>;
  using G = Eigen::Matrix<double, N, N + 1, Eigen::RowMajor>;
  const SimplexMesh& m = f.mesh();
  const TensorGrid& grid = f.grid();
  const GapGeometry& geom = f.geometry();
  const int nt = grid.nt();
  const int corners = 1 << N;
  const int tbit = 1 << (N - 1);
  const double p = f.config().p;
  const double eta = f.config().eta;
  double sum_up = 0.0, sum_lo = 0.0;
  const std::size_t cells = grid.cell_count();
  for (std::size_t cell = 0; cell < cells; ++cell) {
    int k = static_cast<int>(cell % static_cast<std::size_t>(nt - 1));
    if (k != 0 && k != nt - 2) continue;
    for (int side = 0; side < 2; ++side) {
      bool upper = side == 0;
      if (upper && k != nt - 2) continue;
      if (!upper && k != 0) continue;
      // Average the corner gradients anchored on this boundary face.
      VecN g = VecN::Zero();
      std::vector<int> face_nodes;
      for (int c = 0; c < corners; ++c) {
        bool on_top = (c & tbit) != 0;
        if (on_top != upper) continue;
        std::size_t t = cell * corners + static_cast<std::size_t>(c);
        const int* nd = &m.nodes[t * (N + 1)];
        Eigen::Map<const G> gm(&m.grad[t * N * (N + 1)]);
        Loc ul;
        for (int i = 0; i <= N; ++i) ul[i] = f.values[nd[i]];
        g += gm * ul;
        face_nodes.push_back(nd[0]);
      }
      g /= static_cast<double>(face_nodes.size());
      // Face centre, normal and measure.
      Vec centre = Vec::Zero(N);
      for (int nd : face_nodes) centre += f.point(static_cast<std::size_t>(nd));
      centre /= static_cast<double>(face_nodes.size());
      Vec xp = centre.head(N - 1);
      Vec nu = inner_normal(geom, upper ? Side::Upper : Side::Lower, xp);
      double area;
      if (N == 2) {
        area = (f.point(static_cast<std::size_t>(face_nodes[0])) - f.point(static_cast<std::size_t>(face_nodes[1]))).norm();
      } else {
        // Corner masks 0..3 within the face are ordered by the tangential bits.
        Eigen::Vector3d p00 = f.point(static_cast<std::size_t>(face_nodes[0]));
        Eigen::Vector3d p10 = f.point(static_cast<std::size_t>(face_nodes[1]));
        Eigen::Vector3d p01 = f.point(static_cast<std::size_t>(face_nodes[2]));
        Eigen::Vector3d p11 = f.point(static_cast<std::size_t>(face_nodes[3]));
        area = 0.5 * (p11 - p00).cross(p10 - p01).norm();
      }
      double s = eta + g.squaredNorm();
      double a = s > 0.0 ? std::pow(s, 0.5 * p - 1.0) : (p == 2.0 ? 1.0 : 0.0);
      double flux = 0.0;
      for (int i = 0; i < N; ++i) flux += a * g[i] * nu[i];
      (upper ? sum_up : sum_lo) += flux * flux * area;
    }
  }
  return {std::sqrt(sum_up), std::sqrt(sum_lo)};
}

}  // namespace

NeumannResidual neumann_residual(const DiscreteField& field) {
  return field.mesh().dim == 2 ? neumann_impl<2>(field) : neumann_impl<3>(field);
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json DiscreteField::to_json() const {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : diagnostics.trace)
    trace.push_back({{"stage", e.stage},
                     {"p", e.p},
                     {"eta", e.eta},
                     {"iteration", e.iteration},
                     {"energy", e.energy},
                     {"grad_norm", e.grad_norm},
                     {"step", e.step},
                     {"decrease", e.decrease},
                     {"kind", e.kind}});
  return {{"format", "gaplab.field"},
          {"version", 1},
          {"geometry", geometry().describe()},
          {"config", cfg_.to_json()},
          {"grid", {{"dim", grid_.dim}, {"tangential", grid_.s}, {"transverse", grid_.t}}},
          {"values", std::vector<double>(values.data(), values.data() + values.size())},
          {"diagnostics",
           {{"converged", diagnostics.converged},
            {"iterations", diagnostics.iterations},
            {"message", diagnostics.message},
            {"final_energy", diagnostics.final_energy},
            {"final_grad_norm", diagnostics.final_grad_norm},
            {"stage_max_grad", diagnostics.stage_max_grad},
            {"trace", trace}}}};
}

DiscreteField DiscreteField::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "gaplab.field") throw IoError("not a gaplab field container");
  GapGeometry geom = geometry_from_json(j.at("geometry"));
  SolverConfig cfg = SolverConfig::from_json(j.at("config"));
  DiscreteField f(geom, cfg);
  auto s = j.at("grid").at("tangential").get<std::vector<double>>();
  auto t = j.at("grid").at("transverse").get<std::vector<double>>();
  if (s != f.grid_.s || t != f.grid_.t) throw IoError("stored grid does not match the stored configuration");
  auto v = j.at("values").get<std::vector<double>>();
  if (v.size() != f.size()) throw IoError("stored values do not match the grid size");
  f.values = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  const auto& d = j.at("diagnostics");
  f.diagnostics.converged = d.at("converged").get<bool>();
  f.diagnostics.iterations = d.at("iterations").get<int>();
  f.diagnostics.message = d.at("message").get<std::string>();
  f.diagnostics.final_energy = d.at("final_energy").get<double>();
  f.diagnostics.final_grad_norm = d.at("final_grad_norm").get<double>();
  f.diagnostics.stage_max_grad = d.at("stage_max_grad").get<std::vector<double>>();
  for (const auto& e : d.at("trace"))
    f.diagnostics.trace.push_back({e.at("stage").get<int>(), e.at("p").get<double>(), e.at("eta").get<double>(),
                                   e.at("iteration").get<int>(), e.at("energy").get<double>(),
                                   e.at("grad_norm").get<double>(), e.at("step").get<double>(),
                                   e.at("decrease").get<double>(), e.at("kind").get<std::string>()});
  return f;
}

}  // namespace gaplab
