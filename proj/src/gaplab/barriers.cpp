#include "gaplab/barriers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "gaplab/error.hpp"

namespace gaplab {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string variant_name(BarrierVariant v) {
  switch (v) {
    case BarrierVariant::Supersolution:
      return "supersolution_v";
    case BarrierVariant::Subsolution:
      return "subsolution_w";
    case BarrierVariant::Bernstein:
      return "bernstein_F";
    case BarrierVariant::Appendix:
      return "appendix_F";
  }
  return "unknown";
}

BarrierVariant parse_variant(const std::string& name) {
  if (name == "supersolution_v") return BarrierVariant::Supersolution;
  if (name == "subsolution_w") return BarrierVariant::Subsolution;
  if (name == "bernstein_F") return BarrierVariant::Bernstein;
  if (name == "appendix_F") return BarrierVariant::Appendix;
  throw ConfigError("unknown barrier variant '" + name + "'");
}

// ---------------------------------------------------------------------------
// Specification

std::vector<std::string> BarrierSpec::admissibility_issues() const {
  std::vector<std::string> out;
  if (n < 2) out.push_back("n must be at least 2");
  if (!(p > 1.0)) out.push_back("p must exceed 1");
  if (!(epsilon > 0.0)) out.push_back("epsilon must be positive");
  if (!(kappa1 > 0.0) || !(kappa2 >= kappa1)) out.push_back("need 0 < kappa1 <= kappa2");
  switch (variant) {
    case BarrierVariant::Supersolution: {
      const double room = p - n - 1.0;
      if (!(room > 0.0)) {
        out.push_back("supersolution needs p > n + 1 (p = " + fmt(p) + ", n = " + std::to_string(n) + ")");
        break;
      }
      if (!(delta > 0.0 && delta < room)) out.push_back("delta must lie in (0, p - n - 1) = (0, " + fmt(room) + ")");
      double gmax = (room - delta) / (p - 1.0);
      if (!(gamma > 0.0 && gamma < gmax))
        out.push_back("gamma must lie in (0, (p - n - 1 - delta)/(p - 1)) = (0, " + fmt(gmax) + "), got " + fmt(gamma));
      break;
    }
    case BarrierVariant::Subsolution: {
      if (n != 2) out.push_back("subsolution is defined for n = 2");
      if (!(delta > 0.0 && delta < 0.5)) out.push_back("delta must lie in (0, 1/2)");
      double gmin = std::max((p - 3.0 + delta) / (p - 1.0), 0.0);
      if (!(gamma > gmin)) out.push_back("gamma must exceed max((p - 3 + delta)/(p - 1), 0) = " + fmt(gmin) + ", got " + fmt(gamma));
      if (!(epsilon < delta / 10.0)) out.push_back("epsilon must be below delta/10 = " + fmt(delta / 10.0));
      break;
    }
    case BarrierVariant::Bernstein:
      if (!(beta >= 0.0 && beta < 0.5)) out.push_back("beta must lie in [0, 1/2)");
      break;
    case BarrierVariant::Appendix:
      if (!(A > 0.0)) out.push_back("A must be positive");
      if (!(q >= 2.0)) out.push_back("q must be at least 2");
      break;
  }
  return out;
}

void BarrierSpec::validate() const {
  auto issues = admissibility_issues();
  if (!issues.empty()) throw InvariantError("inadmissible " + variant_name(variant) + ": " + issues.front());
}

double BarrierSpec::transverse_weight() const {
  switch (variant) {
    case BarrierVariant::Supersolution:
      return 2.0 + delta;
    case BarrierVariant::Subsolution:
      return 2.0 - delta;
    default:
      throw InvalidArgument(variant_name(variant) + " is not a radial barrier");
  }
}

double BarrierSpec::truncation_radius() const {
  return variant == BarrierVariant::Subsolution ? 4.0 * std::sqrt(epsilon / delta) : 0.0;
}

double BarrierSpec::dimension_threshold() const {
  const double ratio = kappa2 / ((1.0 - 2.0 * beta) * kappa1);
  if (p >= 2.0) return 2.5 * (p - 1.0) * (0.5 * (p + 1.0 - 2.0 * beta * (p - 1.0)) + ratio) + 1.0;
  return 2.5 * (0.5 * (3.0 - 2.0 * beta) + ratio) + 3.0 - p;
}

bool BarrierSpec::dimension_condition() const { return n >= dimension_threshold(); }

nlohmann::json BarrierSpec::to_json() const {
  return {{"variant", variant_name(variant)},
          {"n", n},
          {"p", p},
          {"delta", delta},
          {"gamma", gamma},
          {"beta", beta},
          {"A", A},
          {"q", q},
          {"kappa1", kappa1},
          {"kappa2", kappa2},
          {"epsilon", epsilon}};
}

// ---------------------------------------------------------------------------
// Closed forms

Quartic divergence_quartic(int n, double p, double gamma, double a) {
  Quartic q;
  q.c_aa = n + a - 2.0 + (p - 1.0) * (gamma - 1.0);
  q.c_ab = (n - 1.0 + a) * (a + a * a) + 2.0 * a * a * (p - 1.0) * (gamma - 2.0) + (p - 2.0) * (a + a * a * a);
  q.c_bb = a * a * a * ((n - 1.0 + a) + a * (p - 2.0) + a * (gamma - 2.0) * (p - 1.0));
  return q;
}

double first_sign_change(const Quartic& q, double cap) {
  const double f0 = q(0.0);
  const int steps = 2000;
  double prev = 0.0;
  for (int i = 1; i <= steps; ++i) {
    double s = cap * i / steps;
    if ((q(s) > 0.0) != (f0 > 0.0) || q(s) == 0.0) {
      double lo = prev, hi = s;
      for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if ((q(mid) > 0.0) == (f0 > 0.0) && q(mid) != 0.0)
          lo = mid;
        else
          hi = mid;
      }
      return lo;
    }
    prev = s;
  }
  return cap;
}

BarrierValue eval_barrier(const BarrierSpec& spec, const Vec& x) {
  if (x.size() != spec.n) throw InvalidArgument("point dimension does not match the barrier dimension");
  const double a = spec.transverse_weight();
  const int t = spec.n - 1;
  const double A = x.head(t).squaredNorm();
  const double B = x[t] * x[t];
  const double R = std::sqrt(A + a * B);
  if (!(R > 0.0)) throw DomainError("barrier derivatives are undefined at the origin");
  const double g = spec.gamma;
  BarrierValue out;
  out.gradient = Vec::Zero(spec.n);
  const double cut = spec.truncation_radius();
  if (R <= cut) return out;
  out.value = std::pow(R, g) - (cut > 0.0 ? std::pow(cut, g) : 0.0);
  const double c = g * std::pow(R, g - 2.0);
  out.gradient.head(t) = c * x.head(t);
  out.gradient[t] = c * a * x[t];
  Quartic q = divergence_quartic(spec.n, spec.p, g, a);
  double poly = q.c_aa * A * A + q.c_ab * A * B + q.c_bb * B * B;
  double dv = out.gradient.norm();
  out.divergence = std::pow(dv, spec.p - 4.0) * g * g * g * std::pow(R, 3.0 * g - 8.0) * poly;
  return out;
}

// ---------------------------------------------------------------------------
// Certification

namespace {

// Largest r on a scan of (0, cap] with |D^2 h(x') - D^2 h(0)| <= tol for |x'| <= r.
double hessian_continuity_radius(const GapGeometry& geom, double tol, double cap) {
  const int t = geom.dim - 1;
  Vec origin = Vec::Zero(t);
  Mat h1 = geom.upper->hessian(origin);
  Mat h2 = geom.lower->hessian(origin);
  std::vector<Vec> dirs;
  for (int i = 0; i < t; ++i) {
    Vec e = Vec::Zero(t);
    e[i] = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
    for (int j = i + 1; j < t; ++j) {
      for (double sgn : {1.0, -1.0}) {
        Vec d = Vec::Zero(t);
        d[i] = 1.0 / std::sqrt(2.0);
        d[j] = sgn / std::sqrt(2.0);
        dirs.push_back(d);
        dirs.push_back(-d);
      }
    }
  }
  const int steps = 500;
  double good = 0.0;
  for (int k = 1; k <= steps; ++k) {
    double r = cap * k / steps;
    for (const Vec& d : dirs) {
      Vec xp = r * d;
      double e1 = (geom.upper->hessian(xp) - h1).operatorNorm();
      double e2 = (geom.lower->hessian(xp) - h2).operatorNorm();
      if (e1 > tol || e2 > tol) return good;
    }
    good = r;
  }
  return good;
}

struct Sampler {
  std::mt19937_64 rng;
  int tdim;
  explicit Sampler(std::uint64_t seed, int t) : rng(seed), tdim(t) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
  Vec direction() {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec d(tdim);
    do {
      for (int i = 0; i < tdim; ++i) d[i] = nd(rng);
    } while (d.norm() < 1e-12);
    return d / d.norm();
  }
};

std::vector<Vec> grid_directions(int t) {
  std::vector<Vec> out;
  for (int i = 0; i < t; ++i) {
    Vec e = Vec::Zero(t);
    e[i] = 1.0;
    out.push_back(e);
    out.push_back(-e);
  }
  return out;
}

}  // namespace

Certificate certify_sign(const BarrierSpec& spec_in, const GapGeometry& geom, const CertifyOptions& opts) {
  if (spec_in.variant != BarrierVariant::Supersolution && spec_in.variant != BarrierVariant::Subsolution)
    throw InvalidArgument("certify_sign applies to supersolution_v and subsolution_w");
  if (geom.dim != spec_in.n) throw InvalidArgument("barrier dimension does not match the geometry");
  Certificate c;
  c.spec = spec_in;
  c.spec.epsilon = geom.epsilon;
  const BarrierSpec& spec = c.spec;
  c.issues = spec.admissibility_issues();
  c.admissible = c.issues.empty();
  if (!c.admissible && !opts.allow_inadmissible)
    throw InvariantError("inadmissible " + variant_name(spec.variant) + ": " + c.issues.front());

  const bool super = spec.variant == BarrierVariant::Supersolution;
  const int n = spec.n;
  const int t = n - 1;
  const double a = spec.transverse_weight();
  const Quartic quart = divergence_quartic(n, spec.p, spec.gamma, a);
  const double cap = std::min(0.49, 0.99 * geom.profile_radius());

  if (super) {
    if (quart.c_aa < 0.0) {
      c.mu0 = std::min(0.99 * first_sign_change(quart, 0.5), 0.49);
    } else {
      c.mu0 = 0.49;
      c.issues.push_back("no cone |x_n| <= mu0 |x'| with negative divergence; sampling the fallback cone mu0 = 0.49");
    }
    const double tol = spec.kappa1 * spec.delta / (8.0 + 2.0 * spec.delta);
    c.r0 = hessian_continuity_radius(geom, tol, cap);
    if (!(c.r0 > 0.0)) c.issues.push_back("boundary Hessians are not continuous enough at the origin for any r0 > 0");
    c.mu = std::min(c.mu0, spec.kappa2 * c.r0);
    c.inner_radius = c.mu > 0.0 ? geom.epsilon / c.mu : std::numeric_limits<double>::infinity();
    c.outer_radius = c.mu / spec.kappa2;
    if (!(geom.epsilon < c.mu * c.mu / spec.kappa2))
      c.issues.push_back("epsilon must be below mu^2/kappa2 = " + fmt(c.mu * c.mu / spec.kappa2));
    c.notes.push_back(
        "sign convention: the supersolution condition checked is -div(|Dv|^{p-2} Dv) > 0, which is what the "
        "negative leading coefficient of the quartic yields; a statement with the opposite sign would be "
        "inconsistent with it");
  } else {
    double s0 = quart.c_aa > 0.0 ? first_sign_change(quart, 2.0) : 0.0;
    if (!(quart.c_aa > 0.0)) c.issues.push_back("leading coefficient is not positive; falling back to r0 = 0.49");
    c.r0 = quart.c_aa > 0.0 ? std::min(cap, 0.99 * s0 / (1.0 + spec.delta / 8.0)) : cap;
    c.mu0 = s0;
    c.inner_radius = 0.0;
    c.outer_radius = c.r0;
    if (!(geom.epsilon < c.r0 * c.r0 * spec.delta / 64.0))
      c.notes.push_back("epsilon exceeds r0^2 delta/64: the observation point 8 sqrt(eps/delta) lies outside the region");
  }
  c.admissible = c.issues.empty();

  const double cut = spec.truncation_radius();
  const double lo_r = super ? c.inner_radius : std::min(0.5 * cut, 0.5 * c.outer_radius);
  const double hi_r = c.outer_radius;
  c.interior_min_margin = std::numeric_limits<double>::infinity();
  c.boundary_min_margin = std::numeric_limits<double>::infinity();
  auto record = [&](const std::string& kind, const Vec& x, double value) {
    ++c.violation_count;
    if (c.violations.size() < 100) c.violations.push_back({kind, x, value});
  };
  if (!(hi_r > lo_r) || !(lo_r > 0.0)) {
    c.issues.push_back("empty sampling region");
    c.admissible = false;
    return c;
  }

  Sampler smp(opts.seed, t);
  const auto dirs = grid_directions(t);
  const std::size_t ngrid = opts.samples / 11;
  const double log_ratio = std::log(hi_r / lo_r);

  // Interior.
  auto check_interior = [&](const Vec& xp, double frac) {
    Vec x(n);
    x.head(t) = xp;
    double lo = geom.lower_boundary(xp), hi = geom.upper_boundary(xp);
    x[t] = lo + frac * (hi - lo);
    ++c.interior_samples;
    const double A = xp.squaredNorm(), B = x[t] * x[t];
    const double R2 = A + a * B;
    if (super && std::abs(x[t]) > c.mu0 * std::sqrt(A)) {
      ++c.outside_cone;
      record("outside_cone", x, std::abs(x[t]) / std::sqrt(A));
      return;
    }
    if (!super && std::sqrt(R2) <= cut) return;
    BarrierValue bv = eval_barrier(spec, x);
    double poly = quart.c_aa * A * A + quart.c_ab * A * B + quart.c_bb * B * B;
    double margin = (super ? -poly : poly) / (R2 * R2);
    c.interior_min_margin = std::min(c.interior_min_margin, margin);
    bool ok = super ? (-bv.divergence > 0.0) : (bv.divergence >= 0.0);
    if (!ok) record("interior_divergence", x, bv.divergence);
  };
  {
    const std::size_t per_dir = std::max<std::size_t>(1, ngrid / dirs.size());
    const std::size_t nr = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(double(per_dir)))));
    const std::size_t nt = std::max<std::size_t>(1, per_dir / nr);
    for (const Vec& d : dirs)
      for (std::size_t i = 0; i < nr; ++i) {
        double r = lo_r * std::exp(log_ratio * (i + 0.5) / nr);
        for (std::size_t j = 0; j < nt; ++j) check_interior(r * d, (j + 0.5) / nt);
      }
    const std::size_t rest = opts.samples > c.interior_samples ? opts.samples - c.interior_samples : 0;
    for (std::size_t k = 0; k < rest; ++k) {
      double r = lo_r * std::exp(log_ratio * smp.uniform());
      Vec d = smp.direction();
      double frac = smp.uniform();
      check_interior(r * d, frac);
    }
  }

  // Boundary: Gamma_+ and Gamma_- over |x'| <= outer radius, including x' = 0.
  const double b_lo = hi_r * 1e-6;
  const double b_log = std::log(hi_r / b_lo);
  auto check_boundary = [&](const Vec& xp, bool upper) {
    Vec x(n);
    x.head(t) = xp;
    x[t] = upper ? geom.upper_boundary(xp) : geom.lower_boundary(xp);
    Vec nu = inner_normal(geom, upper ? Side::Upper : Side::Lower, xp);
    ++c.boundary_samples;
    BarrierValue bv = eval_barrier(spec, x);
    double dn = bv.gradient.dot(nu);
    const double R = std::sqrt(xp.squaredNorm() + a * x[t] * x[t]);
    double margin = (super ? dn : -dn) / (spec.gamma * std::pow(R, spec.gamma - 1.0));
    c.boundary_min_margin = std::min(c.boundary_min_margin, margin);
    bool ok = super ? dn > 0.0 : dn <= 0.0;
    if (!ok) record(upper ? "boundary_upper" : "boundary_lower", x, dn);
  };
  {
    check_boundary(Vec::Zero(t), true);
    check_boundary(Vec::Zero(t), false);
    const std::size_t per_dir = std::max<std::size_t>(1, ngrid / dirs.size());
    for (const Vec& d : dirs)
      for (std::size_t i = 0; i < per_dir; ++i) {
        double r = b_lo * std::exp(b_log * (i + 0.5) / per_dir);
        check_boundary(r * d, i % 2 == 0);
      }
    const std::size_t rest = opts.samples > c.boundary_samples ? opts.samples - c.boundary_samples : 0;
    for (std::size_t k = 0; k < rest; ++k) {
      double r = b_lo * std::exp(b_log * smp.uniform());
      Vec d = smp.direction();
      check_boundary(r * d, k % 2 == 0);
    }
  }
  if (c.interior_samples == c.outside_cone) c.interior_min_margin = 0.0;
  return c;
}

nlohmann::json Certificate::to_json() const {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& e : violations) v.push_back({{"kind", e.kind}, {"point", vec_json(e.point)}, {"value", e.value}});
  return {{"spec", spec.to_json()},
          {"admissible", admissible},
          {"issues", issues},
          {"construction", {{"mu0", mu0}, {"mu", mu}, {"r0", r0}, {"inner_radius", inner_radius}, {"outer_radius", outer_radius}}},
          {"samples", {{"interior", interior_samples}, {"boundary", boundary_samples}, {"outside_cone", outside_cone}}},
          {"min_margin", {{"interior", interior_min_margin}, {"boundary", boundary_min_margin}}},
          {"violation_count", violation_count},
          {"violations", v},
          {"notes", notes}};
}

// ---------------------------------------------------------------------------
// Bernstein quantities

double bernstein_weight(const BarrierSpec& spec, const Vec& x) {
  const int t = static_cast<int>(x.size()) - 1;
  const double xp2 = x.head(t).squaredNorm();
  const double xn2 = x[t] * x[t];
  if (spec.variant == BarrierVariant::Bernstein) {
    const double g = 2.0 * spec.beta;
    return spec.epsilon / spec.kappa1 + xp2 - 5.0 * spec.kappa2 / (2.0 * (1.0 - g) * spec.kappa1) * xn2;
  }
  if (spec.variant == BarrierVariant::Appendix)
    return spec.epsilon + xp2 - 4.0 * spec.kappa2 * spec.kappa2 / spec.kappa1 * xn2;
  throw InvalidArgument("bernstein_weight applies to bernstein_F and appendix_F");
}

namespace {

// Extreme eigenvalues of D^2 h1 and -D^2 h2 on |x'| <= radius.
std::pair<double, double> measure_kappas(const GapGeometry& geom, double radius) {
  const int t = geom.dim - 1;
  double k1 = std::numeric_limits<double>::infinity();
  double k2 = -std::numeric_limits<double>::infinity();
  auto visit = [&](const Vec& xp) {
    for (const Mat& h : {Mat(geom.upper->hessian(xp)), Mat(-geom.lower->hessian(xp))}) {
      Eigen::SelfAdjointEigenSolver<Mat> es(h);
      k1 = std::min(k1, es.eigenvalues().minCoeff());
      k2 = std::max(k2, es.eigenvalues().maxCoeff());
    }
  };
  const int steps = 200;
  for (int i = 0; i <= steps; ++i) {
    double r = radius * i / steps;
    if (t == 1) {
      visit(Vec::Constant(1, r));
      visit(Vec::Constant(1, -r));
    } else {
      const int nang = 32;
      for (int k = 0; k < nang; ++k) {
        double th = 2.0 * std::numbers::pi * k / nang;
        Vec xp = Vec::Zero(t);
        xp[0] = r * std::cos(th);
        xp[1] = r * std::sin(th);
        visit(xp);
      }
    }
  }
  return {k1, k2};
}

}  // namespace

BernsteinReport bernstein_eval(const BarrierSpec& spec_in, const DiscreteField& field, const BernsteinOptions& opts) {
  if (spec_in.variant != BarrierVariant::Bernstein && spec_in.variant != BarrierVariant::Appendix)
    throw InvalidArgument("bernstein_eval applies to bernstein_F and appendix_F");
  BarrierSpec spec = spec_in;
  const GapGeometry& geom = field.geometry();
  spec.epsilon = geom.epsilon;
  spec.n = geom.dim;
  spec.validate();
  if (!geom.kappa1 || !geom.kappa2) throw InvalidArgument("Bernstein quantities need convexity constants kappa1, kappa2");

  const int n = geom.dim;
  const int t = n - 1;
  const TensorGrid& grid = field.grid();
  const int ns = grid.ns();
  const int nt = grid.nt();
  const double p = field.config().p;
  const double gam = 2.0 * spec.beta;
  GradientField gf = gradient_field(field);
  const std::size_t cells = gf.cells.size();
  const SimplexMesh& mesh = field.mesh();
  const int corners = mesh.corners_per_cell();

  BernsteinReport rep;
  rep.dimension_condition = spec.variant == BarrierVariant::Bernstein ? spec.dimension_condition() : true;
  rep.weight.resize(cells);
  rep.quantity.resize(cells);
  std::vector<double> ucell(cells, 0.0);
  for (std::size_t s = 0; s < mesh.count; ++s)
    ucell[mesh.cell[s]] += field.values[mesh.nodes[s * (n + 1)]] / corners;
  for (std::size_t c = 0; c < cells; ++c) {
    const Vec& x = gf.cells[c].center;
    double q = bernstein_weight(spec, x);
    double g = gf.cells[c].magnitude;
    double f;
    if (spec.variant == BarrierVariant::Bernstein) {
      double qp = std::max(q, 0.0);
      f = p >= 2.0 ? std::pow(qp, 0.5 * (p - p * gam)) * std::pow(g, p) : std::pow(qp, 1.0 - gam) * g * g;
    } else {
      double ff = q * g * g + spec.A * ucell[c] * ucell[c];
      f = std::pow(std::max(ff, 0.0), 0.5 * spec.q);
    }
    rep.weight[c] = q;
    rep.quantity[c] = f;
    if (c == 0 || f > rep.quantity[rep.argmax]) rep.argmax = c;
  }
  rep.argmax_point = gf.cells[rep.argmax].center;

  auto kap = measure_kappas(geom, opts.sample_radius);
  rep.kappa1_measured = kap.first;
  rep.kappa2_measured = kap.second;
  rep.floor = opts.floor_fraction * gf.max();

  // D_nu |Du|^s on the boundary: each grid column is extrapolated to the
  // boundary by a quadratic in x_n through its three outermost cell centres,
  // then tangential neighbours and the column slope give a local n x n solve.
  const int ntc = nt - 1;
  if (ntc < 3) throw InvalidArgument("boundary derivatives need at least three transverse cells");
  auto cell_index = [&](const int* tc, int k) {
    std::size_t idx = 0;
    for (int d = 0; d < t; ++d) idx = idx * static_cast<std::size_t>(ns - 1) + static_cast<std::size_t>(tc[d]);
    return idx * static_cast<std::size_t>(ntc) + static_cast<std::size_t>(k);
  };
  struct Trace {
    Vec x;
    double f;
    double dfdn;
  };
  auto extrapolate = [&](const int* tc, bool upper, double s) {
    double z[3], f[3];
    for (int i = 0; i < 3; ++i) {
      std::size_t c = cell_index(tc, upper ? ntc - 1 - i : i);
      z[i] = gf.cells[c].center[t];
      f[i] = std::pow(gf.cells[c].magnitude, s);
    }
    Trace tr;
    tr.x = gf.cells[cell_index(tc, upper ? ntc - 1 : 0)].center;
    Vec xp = tr.x.head(t);
    double zb = upper ? geom.upper_boundary(xp) : geom.lower_boundary(xp);
    tr.x[t] = zb;
    tr.f = 0.0;
    tr.dfdn = 0.0;
    for (int i = 0; i < 3; ++i) {
      double l = 1.0, dl = 0.0;
      for (int j = 0; j < 3; ++j) {
        if (j == i) continue;
        double den = z[i] - z[j];
        double term = 1.0 / den;
        for (int k = 0; k < 3; ++k)
          if (k != i && k != j) term *= (zb - z[k]) / (z[i] - z[k]);
        dl += term;
        l *= (zb - z[j]) / den;
      }
      tr.f += l * f[i];
      tr.dfdn += dl * f[i];
    }
    return tr;
  };
  const int ncols = t == 2 ? (ns - 1) * (ns - 1) : (ns - 1);
  std::size_t ok2 = 0, okp = 0;
  for (int col = 0; col < ncols; ++col) {
    int tc[2];
    if (t == 2) {
      tc[0] = col / (ns - 1);
      tc[1] = col % (ns - 1);
    } else {
      tc[0] = col;
      tc[1] = 0;
    }
    bool interior = true;
    for (int d = 0; d < t; ++d)
      if (tc[d] == 0 || tc[d] == ns - 2) interior = false;
    if (!interior) continue;
    for (int side = 0; side < 2; ++side) {
      const bool upper = side == 0;
      std::size_t c0 = cell_index(tc, upper ? ntc - 1 : 0);
      Vec xp = gf.cells[c0].center.head(t);
      if (xp.norm() > opts.sample_radius) continue;
      double g0 = gf.cells[c0].magnitude;
      if (g0 <= rep.floor || !(g0 > 0.0)) continue;
      for (double s : {2.0, p}) {
        Trace here = extrapolate(tc, upper, s);
        Mat m = Mat::Zero(n, n);
        Vec rhs(n);
        for (int d = 0; d < t; ++d) {
          int tp[2] = {tc[0], tc[1]}, tm[2] = {tc[0], tc[1]};
          tp[d] += 1;
          tm[d] -= 1;
          Trace a = extrapolate(tp, upper, s), b = extrapolate(tm, upper, s);
          m.row(d) = (a.x - b.x).transpose();
          rhs[d] = a.f - b.f;
        }
        m(t, t) = 1.0;
        rhs[t] = here.dfdn;
        Vec df = m.partialPivLu().solve(rhs);
        Vec nu = inner_normal(geom, upper ? Side::Upper : Side::Lower, xp);
        NormalDerivativeSample sm;
        sm.point = here.x;
        sm.grad_norm = g0;
        sm.s = s;
        sm.ratio = df.dot(nu) / (s * here.f);
        sm.holds = sm.ratio >= rep.kappa1_measured * (1.0 - opts.tolerance) &&
                   sm.ratio <= rep.kappa2_measured * (1.0 + opts.tolerance);
        if (s == 2.0) {
          ++rep.count_s2;
          ok2 += sm.holds;
        }
        if (s == p) {
          ++rep.count_sp;
          okp += sm.holds;
        }
        rep.samples.push_back(sm);
        if (p == 2.0) break;
      }
    }
  }
  rep.fraction_s2 = rep.count_s2 ? static_cast<double>(ok2) / rep.count_s2 : 0.0;
  rep.fraction_sp = rep.count_sp ? static_cast<double>(okp) / rep.count_sp : 0.0;
  return rep;
}

nlohmann::json BernsteinReport::to_json(bool with_fields) const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& e : samples)
    s.push_back({{"point", vec_json(e.point)}, {"grad_norm", e.grad_norm}, {"s", e.s}, {"ratio", e.ratio}, {"holds", e.holds}});
  nlohmann::json j{{"argmax", argmax},
                   {"argmax_point", vec_json(argmax_point)},
                   {"max_quantity", quantity.empty() ? 0.0 : quantity[argmax]},
                   {"kappa1_measured", kappa1_measured},
                   {"kappa2_measured", kappa2_measured},
                   {"floor", floor},
                   {"fraction_s2", fraction_s2},
                   {"fraction_sp", fraction_sp},
                   {"count_s2", count_s2},
                   {"count_sp", count_sp},
                   {"dimension_condition", dimension_condition},
                   {"samples", s}};
  if (with_fields) {
    j["weight"] = weight;
    j["quantity"] = quantity;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Comparison

ComparisonFit comparison_fit(const DiscreteField& field, const BarrierSpec& spec, const Region& region, double tol) {
  if (spec.variant != BarrierVariant::Supersolution) throw InvalidArgument("comparison_fit needs a supersolution spec");
  const GapGeometry& geom = field.geometry();
  if (geom.dim != spec.n) throw InvalidArgument("barrier dimension does not match the field");
  const int n = geom.dim;
  const int t = n - 1;
  const double a = spec.transverse_weight();
  const double shift = std::sqrt(geom.epsilon);
  const TensorGrid& grid = field.grid();
  const int ns = grid.ns();
  const int nt = grid.nt();
  auto in_region = [&](const int* tang) {
    Vec xp(t);
    for (int d = 0; d < t; ++d) xp[d] = grid.s[tang[d]];
    return region.contains(xp);
  };
  auto barrier = [&](const Vec& x) {
    double r2 = x.head(t).squaredNorm() + a * x[t] * x[t];
    return std::pow(r2, 0.5 * spec.gamma) + shift;
  };
  std::vector<std::size_t> boundary, interior;
  const int ntang = t == 2 ? ns * ns : ns;
  for (int it = 0; it < ntang; ++it) {
    int tang[2] = {t == 2 ? it / ns : it, t == 2 ? it % ns : 0};
    if (!in_region(tang)) continue;
    bool edge = false;
    for (int d = 0; d < t && !edge; ++d)
      for (int s : {-1, 1}) {
        int nb[2] = {tang[0], tang[1]};
        nb[d] += s;
        if (nb[d] < 0 || nb[d] >= ns || !in_region(nb)) edge = true;
      }
    for (int k = 0; k < nt; ++k) (edge ? boundary : interior).push_back(grid.node(tang, k));
  }
  if (boundary.empty()) throw InvalidArgument("region does not intersect the grid");
  ComparisonFit fit;
  fit.boundary_nodes = boundary.size();
  fit.interior_nodes = interior.size();
  for (std::size_t i : boundary)
    fit.C_boundary = std::max(fit.C_boundary, std::abs(field.values[static_cast<Eigen::Index>(i)]) / barrier(field.point(i)));
  std::size_t bad = 0;
  for (std::size_t i : interior)
    if (std::abs(field.values[static_cast<Eigen::Index>(i)]) > fit.C_boundary * barrier(field.point(i)) * (1.0 + tol)) ++bad;
  fit.interior_violation_fraction = interior.empty() ? 0.0 : static_cast<double>(bad) / interior.size();
  return fit;
}

nlohmann::json ComparisonFit::to_json() const {
  return {{"C_boundary", C_boundary},
          {"interior_violation_fraction", interior_violation_fraction},
          {"boundary_nodes", boundary_nodes},
          {"interior_nodes", interior_nodes}};
}

}  // namespace gaplab
