#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gaplab/error.hpp"
#include "gaplab/experiments.hpp"

using namespace gaplab;

namespace {

RateTable synthetic(const std::vector<double>& eps, double scale, double alpha) {
  RateTable t;
  for (double e : eps) {
    RateRow r;
    r.epsilon = e;
    r.max_grad_neck = scale * std::pow(e, -alpha);
    r.max_grad_global = r.max_grad_neck;
    r.argmax_xp = Vec::Zero(1);
    r.converged = true;
    r.grid_ns = 64;
    r.grid_nt = 16;
    t.rows.push_back(r);
  }
  return t;
}

const std::vector<double> kEps = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4};

SolverConfig quick_solver(double p) {
  SolverConfig c;
  c.p = p;
  c.grid_ns = 16;
  c.grid_nt = 8;
  return c;
}

SweepConfig quick_sweep(std::vector<double> eps) {
  SweepConfig s;
  s.epsilons = std::move(eps);
  s.resolution_rule = false;
  return s;
}

}  // namespace

TEST_CASE("theorem targets") {
  TheoremTargets a = theorem_targets(2, 2.0, 0.0);
  CHECK(*a.upper_exponent == 0.5);
  CHECK(*a.lower_exponent == 0.5);
  CHECK_FALSE(a.notes.empty());

  TheoremTargets b = theorem_targets(2, 5.0, 0.1);
  CHECK(*b.upper_exponent == doctest::Approx(0.275).epsilon(1e-15));
  CHECK(*b.lower_exponent == doctest::Approx(0.225).epsilon(1e-15));

  TheoremTargets c = theorem_targets(3, 2.0, 0.0);
  CHECK(*c.upper_exponent == 0.5);
  CHECK_FALSE(c.lower_exponent.has_value());
  CHECK_FALSE(c.notes.empty());

  CHECK(*theorem_targets(2, 2.5, 0.1).upper_exponent == 0.5);
  CHECK(*theorem_targets(2, 2.5, 0.1).lower_exponent == doctest::Approx(0.45));
  CHECK_THROWS_AS(theorem_targets(1, 2.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(theorem_targets(2, 1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(theorem_targets(2, 2.0, -0.1), InvalidArgument);
}

TEST_CASE("property: exact power laws are fitted exactly") {
  FitWindow all{false};
  RateFit half = fit_rate(synthetic(kEps, 1.0, 0.5), all);
  CHECK(std::abs(half.slope - 0.5) < 1e-12);
  CHECK(std::abs(half.intercept) < 1e-12);
  CHECK(half.r2 == doctest::Approx(1.0).epsilon(1e-12));

  RateFit third = fit_rate(synthetic(kEps, 3.0, 1.0 / 3.0), all);
  CHECK(std::abs(third.slope - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(third.intercept - std::log(3.0)) < 1e-12);
}

TEST_CASE("fit window rules") {
  RateTable t = synthetic(kEps, 1.0, 0.5);
  RateFit f = fit_rate(t);
  CHECK(f.window.size() == 4);
  CHECK(f.window.front() == 3e-3);
  t.rows[2].converged = false;
  CHECK_THROWS_AS(fit_rate(t), InvalidArgument);
  RateFit g = fit_rate(t, FitWindow{false});
  CHECK(g.window.size() == 4);
  CHECK(g.excluded_unconverged == 1);
  CHECK_THROWS_AS(fit_rate(synthetic({1e-2, 1e-3, 1e-4}, 1.0, 0.5), FitWindow{false}), InvalidArgument);
}

TEST_CASE("least squares") {
  LineFit f = least_squares({0.0, 1.0, 2.0, 3.0}, {1.0, 3.1, 4.9, 7.0});
  CHECK(f.slope == doctest::Approx(1.98));
  CHECK(f.intercept == doctest::Approx(1.03));
  CHECK(f.stderr_slope > 0.0);
  CHECK_THROWS_AS(least_squares({1.0}, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(least_squares({1.0, 1.0}, {1.0, 2.0}), InvalidArgument);
  CHECK_THROWS_AS(least_squares({1.0, 2.0}, {1.0}), InvalidArgument);
}

TEST_CASE("oscillation fits") {
  std::vector<double> radii = dyadic_radii(1e-4);
  REQUIRE(radii.size() >= 4);
  std::vector<double> osc;
  for (double r : radii) osc.push_back(std::pow(r, 0.37));
  OscillationFit f = fit_oscillation(radii, osc);
  CHECK_FALSE(f.degenerate);
  CHECK(std::abs(f.beta - 0.37) < 1e-12);

  std::vector<double> flat(radii.size(), 0.0);
  CHECK(fit_oscillation(radii, flat).degenerate);
  CHECK_THROWS_AS(fit_oscillation({0.4, 0.2, 0.1}, {1.0, 0.5, 0.2}), InvalidArgument);
}

TEST_CASE("dyadic radii lie between sqrt(eps) and 1/2") {
  for (double e : {1e-2, 1e-3, 1e-4}) {
    std::vector<double> r = dyadic_radii(e);
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(r[i] > std::sqrt(e));
      CHECK(r[i] < 0.5);
      if (i) CHECK(r[i] == r[i - 1] / 2.0);
    }
  }
}

TEST_CASE("oscillation decay fit on a solved field") {
  SolverConfig c = quick_solver(2.0);
  c.grid_ns = 32;
  DiscreteField f = solve(make_disk_geometry(1e-3), c);
  std::vector<double> radii = dyadic_radii(1e-3);
  OscillationFit fit = oscillation_decay_fit(f, radii);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.radii == radii);
  CHECK_THROWS_AS(oscillation_decay_fit(f, {0.4, 0.2, 0.1, 0.02}), InvalidArgument);
  CHECK_THROWS_AS(oscillation_decay_fit(f, {0.4, 0.3, 0.1, 0.05}), InvalidArgument);
  DiscreteField flat = f;
  flat.values.setConstant(1.0);
  CHECK(oscillation_decay_fit(flat, radii).degenerate);
}

TEST_CASE("resolution rule") {
  SweepConfig s;
  SolverConfig base;
  for (double e : {1e-2, 1e-3, 1e-4}) {
    SolverConfig c = resolved_config(base, s, e);
    TensorGrid g = make_grid(2, c.outer_radius, c.grid_ns, c.grid_nt, c.grading, c.refine);
    const int mid = g.ns() / 2;
    CHECK(g.s[static_cast<std::size_t>(mid)] == 0.0);
    CHECK(g.s[static_cast<std::size_t>(mid + 1)] <= s.cell_fraction * std::sqrt(e) * (1.0 + 1e-12));
    CHECK(c.grid_nt == base.grid_nt);
    CHECK(c.grid_ns >= s.min_ns);
  }
}

TEST_CASE("sweep configuration checks") {
  CHECK_NOTHROW(quick_sweep({}).validate());
  CHECK_THROWS_AS(quick_sweep({1e-2, 1e-2, 1e-3}).validate(), InvalidArgument);
  CHECK_THROWS_AS(quick_sweep({1e-3, 1e-2}).validate(), InvalidArgument);
  CHECK_THROWS_AS(quick_sweep({1.5}).validate(), InvalidArgument);
}

TEST_CASE("empty sweep gives an empty table") {
  RateTable t = sweep_epsilon(make_disk_geometry(1e-2), quick_solver(2.0), quick_sweep({}));
  CHECK(t.rows.empty());
}

TEST_CASE("sweep rows, monotonicity and determinism") {
  SweepConfig s = quick_sweep({1e-1, 3e-2, 1e-2, 3e-3, 1e-3});
  s.workers = 1;
  RateTable a = sweep_epsilon(make_disk_geometry(1e-2), quick_solver(2.0), s);
  REQUIRE(a.rows.size() == 5);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].epsilon == s.epsilons[i]);
    CHECK(a.rows[i].converged);
    CHECK(a.rows[i].max_grad_neck <= a.rows[i].max_grad_global);
    if (i) CHECK(a.rows[i].max_grad_neck >= a.rows[i - 1].max_grad_neck);
  }
  s.workers = 3;
  RateTable b = sweep_epsilon(make_disk_geometry(1e-2), quick_solver(2.0), s);
  CHECK(a.to_csv() == b.to_csv());
}

TEST_CASE("rate table CSV round trip is exact") {
  SweepConfig s = quick_sweep({1e-1, 1e-2, 1e-3});
  RateTable t = sweep_epsilon(make_disk_geometry(1e-2), quick_solver(3.0), s);
  std::string csv = t.to_csv();
  CHECK(csv.rfind("epsilon,max_grad_neck,max_grad_global,argmax_x1,", 0) == 0);
  RateTable back = RateTable::from_csv(csv);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CHECK(back.rows[i].epsilon == t.rows[i].epsilon);
    CHECK(back.rows[i].max_grad_neck == t.rows[i].max_grad_neck);
    CHECK(back.rows[i].energy == t.rows[i].energy);
    CHECK(back.rows[i].osc == t.rows[i].osc);
  }
  CHECK(back.to_csv() == csv);
  CHECK_THROWS_AS(RateTable::from_csv(""), ConfigError);
  CHECK_THROWS_AS(RateTable::from_csv("eps,x\n1,2\n"), ConfigError);
}

TEST_CASE("resolution comparison flags large slope changes") {
  RateFit a, b;
  a.slope = 0.5;
  a.stderr_slope = 0.01;
  b.slope = 0.505;
  CHECK_FALSE(compare_resolution(a, b).under_resolved);
  b.slope = 0.53;
  CHECK(compare_resolution(a, b).under_resolved);
}

TEST_CASE("rate plot") {
  RateTable t = synthetic(kEps, 1.0, 0.48);
  RateFit f = fit_rate(t);
  PlotOptions o;
  o.title = "disks p=2";
  o.targets = theorem_targets(2, 2.0, 0.1);
  std::string svg = rate_plot_svg(t, f, o);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polygon") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("disks p=2") != std::string::npos);
  CHECK(svg == rate_plot_svg(t, f, o));
  std::string csv = rate_plot_csv(t, f);
  CHECK(csv.rfind("epsilon,log_inv_eps,log_max_grad,fitted,in_fit", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}
