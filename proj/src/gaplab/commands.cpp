#include "gaplab/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gaplab/error.hpp"
#include "gaplab/transforms.hpp"

namespace gaplab {

namespace {

nlohmann::json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

nlohmann::json solve_summary(const DiscreteField& field) {
  GradientField gf = gradient_field(field);
  NeumannResidual nr = neumann_residual(field);
  const auto& d = field.diagnostics;
  nlohmann::json j{{"max_grad", gf.max()},
                   {"argmax_point", vec_to_json(gf.cells[gf.argmax].center)},
                   {"energy", d.final_energy},
                   {"iterations", d.iterations},
                   {"converged", d.converged},
                   {"message", d.message},
                   {"final_grad_norm", d.final_grad_norm},
                   {"grid", {{"ns", field.grid().ns() - 1}, {"nt", field.grid().nt() - 1}, {"nodes", field.size()}}},
                   {"neumann_residual", {{"upper", nr.flux_L2_upper}, {"lower", nr.flux_L2_lower}}}};
  std::vector<double> radii;
  for (double r : dyadic_radii(field.geometry().epsilon))
    if (r <= field.config().outer_radius) radii.push_back(r);
  if (radii.size() >= 4)
    j["oscillation"] = oscillation_decay_fit(field, radii).to_json();
  else
    j["oscillation"] = nullptr;
  return j;
}

FitWindow fit_window(const RunConfig& cfg) {
  FitWindow w;
  w.exclude_largest = cfg.sweep.exclude_largest;
  return w;
}

PlotOptions plot_options(const RunConfig& cfg) {
  PlotOptions o;
  o.title = cfg.output.title;
  if (o.title.empty()) {
    std::ostringstream t;
    t << cfg.geometry.kind << ", n = " << cfg.geometry.dim << ", p = " << cfg.solver.p;
    o.title = t.str();
  }
  o.targets = theorem_targets(cfg.geometry.dim, cfg.solver.p, cfg.sweep.target_delta);
  return o;
}

SweepOutcome run_sweep(const RunConfig& cfg) {
  SweepOutcome out;
  GapGeometry family = cfg.geometry.build();
  out.table = sweep_epsilon(family, cfg.solver, cfg.sweep);
  try {
    out.fit = fit_rate(out.table, fit_window(cfg));
  } catch (const InvalidArgument& e) {
    out.fit_error = e.what();
    return out;
  }
  if (cfg.sweep.check_resolution) {
    SolverConfig fine = cfg.solver;
    fine.grid_nt *= 2;
    RateTable refined = sweep_epsilon(family, fine, cfg.sweep);
    out.resolution = compare_resolution(*out.fit, fit_rate(refined, fit_window(cfg)));
  }
  return out;
}

nlohmann::json fit_report(const RateTable& table, const RateFit& fit, const RunConfig& cfg) {
  nlohmann::json j{{"fit", fit.to_json()},
                   {"rows", table.rows.size()},
                   {"targets", theorem_targets(cfg.geometry.dim, cfg.solver.p, cfg.sweep.target_delta).to_json()}};
  return j;
}

nlohmann::json run_certify(const RunConfig& cfg) {
  GapGeometry geom = cfg.geometry.build();
  BarrierSpec spec = cfg.barrier_spec(geom);
  if (spec.variant == BarrierVariant::Supersolution || spec.variant == BarrierVariant::Subsolution) {
    Certificate c = certify_sign(spec, geom, cfg.barrier.certify);
    nlohmann::json j = c.to_json();
    j["kind"] = "sign_certificate";
    j["geometry"] = geom.describe();
    return j;
  }
  spec.validate();
  DiscreteField field = solve(geom, cfg.solver);
  BernsteinReport rep = bernstein_eval(spec, field, cfg.barrier.bernstein);
  nlohmann::json j = rep.to_json(false);
  j["kind"] = "bernstein_report";
  j["spec"] = spec.to_json();
  j["geometry"] = geom.describe();
  j["solve"] = solve_summary(field);
  return j;
}

nlohmann::json run_check_transform(const RunConfig& cfg) {
  GapGeometry geom = cfg.geometry.build();
  const auto& t = cfg.transform;
  nlohmann::json reports = nlohmann::json::array();
  std::vector<double> x, cj, cb;
  double parallel = 0.0;
  for (double r : t.radii) {
    PhiChart chart(geom, r, t.quadrature_order, t.cutoff);
    PhiBoundsReport rep = verify_phi_bounds(chart, t.samples, t.seed, t.coefficient_p);
    reports.push_back(rep.to_json());
    x.push_back(std::log(1.0 / r));
    cj.push_back(std::log(rep.C_jacobian));
    cb.push_back(std::log(rep.C_btilde));
    parallel = std::max(parallel, rep.parallelism_residual_max);
  }
  nlohmann::json j{{"geometry", geom.describe()}, {"radii", t.radii}, {"reports", reports},
                   {"parallelism_residual_max", parallel}};
  if (x.size() >= 2) {
    j["trend"] = {{"C_jacobian_slope", least_squares(x, cj).slope}, {"C_btilde_slope", least_squares(x, cb).slope}};
  } else {
    j["trend"] = nullptr;
  }
  return j;
}

nlohmann::json make_manifest(const RunConfig& cfg, const std::string& command) {
  return {{"format", "gaplab.manifest"},
          {"version", 1},
          {"command", command},
          {"config_hash", cfg.hash()},
          {"config", cfg.canonical()},
          {"geometry", cfg.geometry.build().describe()},
          {"created_utc", utc_now()},
          {"software", {{"name", "gaplab"}, {"version", kVersion}, {"compiler", __VERSION__}}}};
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory '" + path + "': " + ec.message());
}

}  // namespace gaplab
