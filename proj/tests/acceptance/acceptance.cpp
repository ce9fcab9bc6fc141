#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gaplab/barriers.hpp"
#include "gaplab/experiments.hpp"
#include "gaplab/transforms.hpp"
#include "support/oracles.hpp"

using namespace gaplab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  nlohmann::json data = nlohmann::json::object();
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

fs::path out_dir;

void write_text(const std::string& name, const std::string& text) {
  std::ofstream(out_dir / name, std::ios::binary) << text;
}

const std::vector<double> kSweepEpsilons = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4};

RateTable disk_sweep(double p, int workers = 0) {
  SolverConfig base;
  base.p = p;
  SweepConfig sw;
  sw.epsilons = kSweepEpsilons;
  sw.workers = workers;
  return sweep_epsilon(make_disk_geometry(kSweepEpsilons.front()), base, sw);
}

Outcome rate_criterion(double p, double lo, double hi, const std::string& tag) {
  auto t0 = std::chrono::steady_clock::now();
  RateTable table = disk_sweep(p);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RateFit fit = fit_rate(table);
  write_text("rates_" + tag + ".csv", table.to_csv());
  bool converged = true;
  for (const RateRow& r : table.rows) converged = converged && r.converged;
  Outcome o;
  o.pass = converged && fit.slope >= lo && fit.slope <= hi && secs < 600.0;
  o.detail = "slope " + fmt(fit.slope) + " (stderr " + fmt(fit.stderr_slope) + ") in [" + fmt(lo) + ", " +
             fmt(hi) + "], " + fmt(secs) + " s" + (converged ? "" : ", unconverged rows");
  o.data = {{"fit", fit.to_json()}, {"seconds", secs}, {"converged", converged}};
  return o;
}

Outcome oscillation_criterion() {
  const double eps = 1e-3;
  std::vector<double> radii;
  for (double r : dyadic_radii(eps))
    if (r > std::sqrt(eps) && r < 0.5) radii.push_back(r);
  Outcome o;
  o.pass = true;
  for (double p : {2.0, 3.0}) {
    SolverConfig c;
    c.p = p;
    c.grid_ns = 32;
    c.grid_nt = 8;
    DiscreteField f = solve(make_disk_geometry(eps, 3), c);
    OscillationFit fit = oscillation_decay_fit(f, radii);
    bool ok = f.diagnostics.converged && !fit.degenerate && fit.beta > 0.05 && fit.stderr_beta < fit.beta / 2.0;
    o.pass = o.pass && ok;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("p=") + fmt(p) + " beta " + fmt(fit.beta) +
                " stderr " + fmt(fit.stderr_beta) + " over " + std::to_string(fit.radii.size()) + " radii";
    o.data["p" + fmt(p)] = fit.to_json();
  }
  return o;
}

BarrierSpec make_spec(BarrierVariant v, double p, double delta, double gamma, double eps) {
  BarrierSpec s;
  s.variant = v;
  s.n = 2;
  s.p = p;
  s.delta = delta;
  s.gamma = gamma;
  s.epsilon = eps;
  return s;
}

Outcome certificate_criterion() {
  Mat unit = Mat::Identity(1, 1);
  GapGeometry quad = make_quadratic_geometry(1e-4, unit, -unit);
  GapGeometry disks = make_disk_geometry(1e-3);
  struct Case {
    BarrierSpec spec;
    const GapGeometry* geom;
    bool admissible;
  };
  const std::vector<Case> cases = {
      {make_spec(BarrierVariant::Supersolution, 5.0, 0.5, 0.3, 1e-4), &quad, true},
      {make_spec(BarrierVariant::Supersolution, 6.0, 1.0, 0.3, 1e-4), &quad, true},
      {make_spec(BarrierVariant::Supersolution, 8.0, 2.0, 0.4, 1e-4), &quad, true},
      {make_spec(BarrierVariant::Supersolution, 5.0, 0.5, 0.5, 1e-4), &quad, false},
      {make_spec(BarrierVariant::Subsolution, 2.0, 0.2, 0.2, 1e-3), &disks, true},
      {make_spec(BarrierVariant::Subsolution, 5.0, 0.2, 0.6, 1e-3), &disks, true},
      {make_spec(BarrierVariant::Subsolution, 3.0, 0.3, 0.3, 1e-3), &disks, true},
      {make_spec(BarrierVariant::Subsolution, 5.0, 0.2, 0.4, 1e-3), &disks, false},
  };
  Outcome o;
  o.pass = true;
  o.data = nlohmann::json::array();
  int good = 0, caught = 0;
  for (const Case& c : cases) {
    CertifyOptions opts;
    opts.samples = 100000;
    opts.allow_inadmissible = !c.admissible;
    Certificate cert = certify_sign(c.spec, *c.geom, opts);
    const std::size_t sampled = cert.interior_samples + cert.boundary_samples;
    bool ok = c.admissible ? (cert.admissible && cert.violation_count == 0 && sampled >= 100000)
                           : (!cert.admissible && cert.violation_count > 0);
    if (ok) ++(c.admissible ? good : caught);
    o.pass = o.pass && ok;
    o.data.push_back({{"variant", variant_name(c.spec.variant)},
                      {"p", c.spec.p},
                      {"delta", c.spec.delta},
                      {"gamma", c.spec.gamma},
                      {"samples", sampled},
                      {"violations", cert.violation_count}});
  }
  o.detail = std::to_string(good) + "/6 admissible triples clean on 1e5 samples, " + std::to_string(caught) +
             "/2 inadmissible triples flagged";
  return o;
}

Outcome oracle_criterion() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  const std::vector<BarrierSpec> specs = {
      make_spec(BarrierVariant::Supersolution, 5.0, 0.5, 0.3, 1e-4),
      make_spec(BarrierVariant::Supersolution, 8.0, 2.0, 0.4, 1e-4),
      make_spec(BarrierVariant::Subsolution, 5.0, 0.2, 0.6, 1e-3),
      make_spec(BarrierVariant::Subsolution, 3.0, 0.3, 0.3, 1e-3),
  };
  int div_points = 0, div_bad = 0;
  double div_worst = 0.0;
  while (div_points < 1000) {
    const BarrierSpec& s = specs[static_cast<std::size_t>(div_points) % specs.size()];
    Vec x(2);
    x << u(rng), 0.3 * u(rng);
    double R = std::sqrt(x[0] * x[0] + s.transverse_weight() * x[1] * x[1]);
    if (R < 0.05 || R < 1.5 * s.truncation_radius()) continue;
    auto flux = [&](const Vec& y) {
      Vec g = eval_barrier(s, y).gradient;
      return Vec(std::pow(g.norm(), s.p - 2.0) * g);
    };
    double exact = eval_barrier(s, x).divergence;
    double rel = std::abs(oracle::fd_divergence(flux, x, 1e-5) - exact) / std::abs(exact);
    div_worst = std::max(div_worst, rel);
    if (!(rel <= 1e-5)) ++div_bad;
    ++div_points;
  }

  int grad_points = 0, grad_bad = 0;
  double grad_worst = 0.0;
  const std::vector<double> ps = {1.5, 2.0, 2.5, 3.5, 5.0};
  std::uniform_int_distribution<int> pick_p(0, static_cast<int>(ps.size()) - 1);
  while (grad_points < 1000) {
    SolverConfig c;
    c.p = ps[static_cast<std::size_t>(pick_p(rng))];
    c.eta = 1e-6;
    c.grid_ns = 8;
    c.grid_nt = 8;
    DiscreteField f(make_disk_geometry(1e-2), c);
    f.values = oracle::random_vector(rng, static_cast<Eigen::Index>(f.size()), -0.5, 0.5);
    f.impose_dirichlet();
    EnergyAssembly a = assemble_energy(f, f.values, c.p, c.eta, false);
    const auto& free = f.free_index();
    for (std::size_t i = 0; i < f.size() && grad_points < 1000; i += 3) {
      if (free[i] < 0) continue;
      const auto k = static_cast<Eigen::Index>(i);
      // Energy increments are summed cell by cell, so small steps do not cancel.
      auto increment = [&](double t) {
        Eigen::VectorXd d = Eigen::VectorXd::Zero(f.values.size());
        d[k] = t;
        return energy_difference(f, f.values, d, c.p, c.eta);
      };
      const double h = 1e-6;
      double fd = (8.0 * (increment(h) - increment(-h)) - (increment(2 * h) - increment(-2 * h))) / (12.0 * h);
      double rel = std::abs(a.gradient[k] - fd) / std::max(std::abs(fd), 1e-12);
      grad_worst = std::max(grad_worst, rel);
      if (!(rel <= 1e-6)) ++grad_bad;
      ++grad_points;
    }
  }
  Outcome o;
  o.pass = div_bad == 0 && grad_bad == 0;
  o.detail = "divergence worst rel " + fmt(div_worst) + " on " + std::to_string(div_points) +
             " points, energy gradient worst rel " + fmt(grad_worst) + " on " + std::to_string(grad_points) +
             " coordinates";
  o.data = {{"divergence_worst", div_worst}, {"gradient_worst", grad_worst}};
  return o;
}

double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return least_squares(lx, ly).slope;
}

Outcome transform_criterion() {
  const double eps = 1e-6;
  GapGeometry g = make_disk_geometry(eps);
  std::vector<double> inv_r, cj, cb;
  double residual = 0.0;
  bool finite = true;
  Outcome o;
  o.data["reports"] = nlohmann::json::array();
  for (double r : {0.05, 0.1, 0.2}) {
    PhiBoundsReport rep = verify_phi_bounds(PhiChart(g, r), 1000, 0);
    finite = finite && std::isfinite(rep.C_jacobian) && std::isfinite(rep.C_btilde);
    residual = std::max(residual, rep.parallelism_residual_max);
    inv_r.push_back(1.0 / r);
    cj.push_back(rep.C_jacobian);
    cb.push_back(rep.C_btilde);
    o.data["reports"].push_back(rep.to_json());
  }
  const double jac_slope = log_slope(inv_r, cj);
  const double b_slope = log_slope(inv_r, cb);
  bool jac_ok = finite && std::abs(jac_slope) <= 0.1;
  bool res_ok = residual < 1e-8;
  bool b_ok = std::abs(b_slope - 1.0) <= 0.1;
  o.pass = jac_ok && res_ok && b_ok;
  o.detail = "C_jacobian " + fmt(cj[0]) + "/" + fmt(cj[1]) + "/" + fmt(cj[2]) + " trend " + fmt(jac_slope) +
             (jac_ok ? " ok" : " FAIL") + ", parallelism " + fmt(residual) + (res_ok ? " ok" : " FAIL") +
             ", C_btilde slope " + fmt(b_slope) + " vs 1 +- 0.1" + (b_ok ? " ok" : " FAIL");
  o.data["jacobian_trend"] = jac_slope;
  o.data["btilde_slope"] = b_slope;
  return o;
}

Outcome property_criterion() {
  std::vector<std::string> failed;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };

  double range_excess = 0.0;
  bool monotone = true;
  int newton_steps = 0;
  for (double p : {1.5, 2.0, 2.5, 3.0, 5.0}) {
    SolverConfig c;
    c.p = p;
    c.grid_ns = 32;
    c.grid_nt = 8;
    DiscreteField f = solve(make_disk_geometry(1e-2), c);
    require(f.diagnostics.converged, "converged p=" + fmt(p));
    range_excess = std::max({range_excess, f.values.maxCoeff() - 0.5, -0.5 - f.values.minCoeff()});
    const auto& tr = f.diagnostics.trace;
    for (std::size_t k = 0; k < tr.size(); ++k) {
      if (tr[k].kind == "newton") ++newton_steps;
      monotone = monotone && tr[k].decrease <= 0.0;
      if (k + 1 < tr.size() && tr[k + 1].stage == tr[k].stage) monotone = monotone && tr[k + 1].energy <= tr[k].energy;
    }
  }
  require(range_excess <= 1e-10, "range");
  require(monotone, "energy monotonicity");

  double odd = 0.0;
  for (double p : {2.0, 5.0}) {
    SolverConfig base;
    base.p = p;
    SweepConfig sw;
    DiscreteField f = solve(make_disk_geometry(1e-3), resolved_config(base, sw, 1e-3));
    require(f.diagnostics.converged, "converged symmetric p=" + fmt(p));
    int on_axis = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f.point(i)[0] != 0.0) continue;
      odd = std::max(odd, std::abs(f.values[static_cast<Eigen::Index>(i)]));
      ++on_axis;
    }
    require(on_axis > 0, "axis nodes");
  }
  require(odd <= 1e-8, "odd symmetry");

  SolverConfig lin;
  lin.grid_ns = 64;
  lin.grid_nt = 16;
  DiscreteField lf = solve(make_disk_geometry(1e-3), lin);
  double lin_err = (oracle::linear_solution(lf) - lf.values).lpNorm<Eigen::Infinity>();
  require(lin_err <= 1e-10, "linear oracle");

  std::vector<double> ratios;
  for (double p : {2.0, 3.0}) {
    SolverConfig c;
    c.p = p;
    c.grid_ns = 32;
    c.grid_nt = 8;
    double prev = 0.0;
    for (int refine = 0; refine <= 2; ++refine) {
      c.refine = refine;
      DiscreteField f = solve(make_disk_geometry(1e-2), c);
      NeumannResidual r = neumann_residual(f);
      double total = std::hypot(r.flux_L2_upper, r.flux_L2_lower);
      if (refine > 0) ratios.push_back(prev / total);
      prev = total;
    }
  }
  bool ratio_ok = true;
  std::string ratio_text;
  for (double r : ratios) {
    ratio_ok = ratio_ok && r >= 1.5 && r <= 3.0;
    ratio_text += (ratio_text.empty() ? "" : "/") + fmt(r);
  }
  require(ratio_ok, "Neumann ratios");

  Outcome o;
  o.pass = failed.empty();
  o.detail = "range excess " + fmt(range_excess) + ", |u(0,.)| " + fmt(odd) + ", linear oracle " + fmt(lin_err) +
             ", " + std::to_string(newton_steps) + " Newton steps " + (monotone ? "monotone" : "NOT monotone") +
             ", Neumann ratios " + ratio_text;
  for (const auto& f : failed) o.detail += "; failed: " + f;
  o.data = {{"range_excess", range_excess}, {"odd", odd}, {"linear_error", lin_err}, {"neumann_ratios", ratios}};
  return o;
}

Outcome bernstein_criterion() {
  const double eps = 1e-3;
  SolverConfig base;
  base.p = 3.0;
  SweepConfig sw;
  sw.cell_fraction = 0.0625;
  DiscreteField f = solve(make_disk_geometry(eps), resolved_config(base, sw, eps));
  BarrierSpec s;
  s.variant = BarrierVariant::Bernstein;
  s.p = 3.0;
  s.epsilon = eps;
  BernsteinOptions slack;
  slack.tolerance = 0.01;
  BernsteinReport rep = bernstein_eval(s, f, slack);
  BernsteinReport raw = bernstein_eval(s, f);
  double lowest = INFINITY;
  for (const auto& q : raw.samples) lowest = std::min(lowest, q.ratio);
  Outcome o;
  o.pass = f.diagnostics.converged && rep.count_sp > 0 && rep.fraction_sp >= 0.99;
  o.detail = "s=p fraction " + fmt(rep.fraction_sp) + " of " + std::to_string(rep.count_sp) +
             " samples at relative slack 0.01 (unslackened " + fmt(raw.fraction_sp) + ", lowest ratio " +
             fmt(lowest) + "), kappa1 " + fmt(rep.kappa1_measured) + " kappa2 " + fmt(rep.kappa2_measured);
  o.data = {{"report", rep.to_json()}, {"unslackened_fraction", raw.fraction_sp}, {"lowest_ratio", lowest}};
  return o;
}

Outcome determinism_criterion() {
  std::vector<std::string> mismatched;
  const fs::path first = out_dir / "rates_p2.csv";
  std::string again = disk_sweep(2.0, 1).to_csv();
  std::string twice = disk_sweep(2.0, 1).to_csv();
  if (again != twice) mismatched.push_back("p=2 sweep rerun");
  if (fs::exists(first)) {
    std::ifstream in(first, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str() != again) mismatched.push_back("p=2 sweep vs first run");
  }
  write_text("rates_p2_rerun.csv", again);

  CertifyOptions opts;
  opts.samples = 20000;
  opts.seed = 11;
  GapGeometry disks = make_disk_geometry(1e-3);
  BarrierSpec s = make_spec(BarrierVariant::Subsolution, 5.0, 0.2, 0.6, 1e-3);
  if (certify_sign(s, disks, opts).to_json().dump() != certify_sign(s, disks, opts).to_json().dump())
    mismatched.push_back("certificate");
  PhiChart chart(make_disk_geometry(1e-4), 0.1);
  if (verify_phi_bounds(chart, 1000, 5).to_json().dump() != verify_phi_bounds(chart, 1000, 5).to_json().dump())
    mismatched.push_back("transform report");

  Outcome o;
  o.pass = mismatched.empty();
  o.detail = o.pass ? "sweep CSV, certificate and transform report reproduce bit-identically" : "mismatch:";
  for (const auto& m : mismatched) o.detail += " " + m;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for gaplab"};
  std::string out = "acceptance_out";
  std::vector<int> only;
  app.add_option("--out", out, "Directory for CSV and JSON outputs");
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  out_dir = out;
  fs::create_directories(out_dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"rate n=2 p=2", [] { return rate_criterion(2.0, 0.42, 0.58, "p2"); }},
      {"rate n=2 p=5", [] { return rate_criterion(5.0, 0.18, 0.32, "p5"); }},
      {"rate n=2 p=2.5", [] { return rate_criterion(2.5, 0.40, 0.60, "p2.5"); }},
      {"oscillation decay n=3", oscillation_criterion},
      {"barrier certificates", certificate_criterion},
      {"closed forms vs finite differences", oracle_criterion},
      {"transform bounds", transform_criterion},
      {"solver properties", property_criterion},
      {"boundary normal-derivative bound p=3", bernstein_criterion},
      {"determinism", determinism_criterion},
  };
  const std::set<int> selected(only.begin(), only.end());
  nlohmann::json summary = nlohmann::json::object();
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail << " ("
              << fmt(secs) << " s)" << std::endl;
    summary[std::to_string(id)] = {
        {"name", criteria[i].first}, {"pass", o.pass}, {"detail", o.detail}, {"seconds", secs}, {"data", o.data}};
  }
  write_text("summary.json", summary.dump(2) + "\n");
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
