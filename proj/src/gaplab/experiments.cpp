#include "gaplab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "gaplab/error.hpp"

namespace gaplab {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  return fmt("%.17g", v);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("malformed number '" + s + "' in column " + what);
  }
}

}  // namespace

nlohmann::json TheoremTargets::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["p"] = p;
  j["delta"] = delta;
  j["upper_exponent"] = upper_exponent ? nlohmann::json(*upper_exponent) : nlohmann::json(nullptr);
  j["lower_exponent"] = lower_exponent ? nlohmann::json(*lower_exponent) : nlohmann::json(nullptr);
  j["notes"] = notes;
  return j;
}

TheoremTargets theorem_targets(int n, double p, double delta) {
  if (n < 2) throw InvalidArgument("theorem targets need n >= 2");
  if (!(p > 1.0)) throw InvalidArgument("theorem targets need p > 1");
  if (!(delta >= 0.0)) throw InvalidArgument("theorem targets need delta >= 0");
  TheoremTargets t;
  t.n = n;
  t.p = p;
  t.delta = delta;
  double upper = 0.5;
  if (p > n + 1) {
    upper = std::min(upper, (n + 2.0 * delta) / (2.0 * (p - 1.0)));
    t.notes.push_back("p > n+1: upper exponent (n + 2 delta) / (2 (p - 1)) for convex/concave C^2 profiles");
  }
  t.upper_exponent = upper;
  if (n == 2) {
    t.lower_exponent = p <= 3.0 ? (1.0 - delta) / 2.0 : (1.0 - delta) / (p - 1.0);
    if (delta == 0.0)
      t.notes.push_back("lower bound holds for every delta > 0; delta = 0 is the limiting value");
  } else {
    if (p <= n + 1) t.notes.push_back("n >= 3: upper exponent improves to 1/2 - beta with beta > 0 unspecified");
    t.notes.push_back("no lower bound is available for n >= 3");
  }
  return t;
}

void SweepConfig::validate() const {
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0 && epsilons[i] < 1.0)) throw InvalidArgument("sweep.epsilons must lie in (0, 1)");
    for (std::size_t k = 0; k < i; ++k)
      if (epsilons[k] == epsilons[i]) throw InvalidArgument("sweep.epsilons contains a duplicate value");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) throw InvalidArgument("sweep.epsilons must be decreasing");
  }
  if (!(window_delta > 0.0)) throw InvalidArgument("sweep.window_delta must be positive");
  if (!(window_factor > 0.0)) throw InvalidArgument("sweep.window_factor must be positive");
  if (!(cell_fraction > 0.0)) throw InvalidArgument("sweep.cell_fraction must be positive");
  if (min_ns < 2 || min_ns % 2 != 0) throw InvalidArgument("sweep.min_ns must be even and at least 2");
  if (!(osc_top > 0.0 && osc_top < 0.5)) throw InvalidArgument("sweep.osc_top must lie in (0, 1/2)");
  if (!(target_delta > 0.0 && target_delta < 1.0)) throw InvalidArgument("sweep.target_delta must lie in (0, 1)");
  if (workers < 0) throw InvalidArgument("sweep.workers must be nonnegative");
}

nlohmann::json SweepConfig::to_json() const {
  return {{"epsilons", epsilons},         {"window_delta", window_delta},
          {"window_factor", window_factor}, {"resolution_rule", resolution_rule},
          {"cell_fraction", cell_fraction}, {"min_ns", min_ns},
          {"osc_top", osc_top},             {"exclude_largest", exclude_largest},
          {"target_delta", target_delta},         {"check_resolution", check_resolution}};
}

SolverConfig resolved_config(const SolverConfig& base, const SweepConfig& sweep, double epsilon) {
  SolverConfig c = base;
  if (!sweep.resolution_rule) return c;
  const double target = sweep.cell_fraction * std::sqrt(epsilon);
  const double q = c.grading;
  const double span = c.outer_radius / (1 << c.refine);
  auto first_width = [&](int m) { return q == 1.0 ? span / m : span * (q - 1.0) / (std::pow(q, m) - 1.0); };
  int m = 1;
  while (first_width(m) > target) {
    if (m > 1 << 20) throw InvalidArgument("resolution rule cannot reach the requested cell width");
    ++m;
  }
  c.grid_ns = std::max(2 * m, sweep.min_ns);
  return c;
}

std::vector<double> dyadic_radii(double epsilon, double top) {
  std::vector<double> r;
  const double floor = std::sqrt(epsilon);
  for (double v = top; v > floor; v *= 0.5)
    if (v < 0.5) r.push_back(v);
  return r;
}

int default_workers() {
  if (const char* env = std::getenv("GAPLAB_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RateRow measure_row(const DiscreteField& field, const SweepConfig& sweep) {
  const GapGeometry& geom = field.geometry();
  const int t = geom.dim - 1;
  const double outer = field.config().outer_radius;
  RateRow row;
  row.epsilon = geom.epsilon;
  GradientField gf = gradient_field(field);
  row.max_grad_global = gf.max();
  const double window = std::min(sweep.window_factor * std::sqrt(geom.epsilon / sweep.window_delta), outer);
  std::size_t a = gf.argmax_in(Region::neck(Vec::Zero(t), window));
  row.max_grad_neck = gf.cells[a].magnitude;
  row.argmax_xp = gf.cells[a].center.head(t);
  for (double r : dyadic_radii(geom.epsilon, sweep.osc_top))
    if (r <= outer) row.osc.emplace_back(r, oscillation(field, Region::neck(Vec::Zero(t), r)));
  row.energy = field.diagnostics.final_energy;
  row.converged = field.diagnostics.converged;
  row.iterations = field.diagnostics.iterations;
  row.grid_ns = field.config().grid_ns;
  row.grid_nt = field.config().grid_nt;
  return row;
}

RateTable sweep_epsilon(const GapGeometry& family, const SolverConfig& cfg, const SweepConfig& sweep) {
  sweep.validate();
  cfg.validate();
  RateTable table;
  table.dim = family.dim;
  table.geometry = family.describe();
  table.solver = cfg.to_json();
  table.sweep = sweep.to_json();
  const std::size_t jobs = sweep.epsilons.size();
  table.rows.resize(jobs);
  if (jobs == 0) return table;

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs) return;
      try {
        const double eps = sweep.epsilons[i];
        DiscreteField f = solve(family.with_epsilon(eps), resolved_config(cfg, sweep, eps));
        table.rows[i] = measure_row(f, sweep);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int k = std::max(1, std::min<int>(sweep.workers > 0 ? sweep.workers : default_workers(),
                                          static_cast<int>(jobs)));
  if (k == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < k; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return table;
}

std::vector<double> RateTable::osc_radii() const {
  std::vector<double> r;
  for (const auto& row : rows)
    for (const auto& [radius, v] : row.osc)
      if (std::find(r.begin(), r.end(), radius) == r.end()) r.push_back(radius);
  std::sort(r.begin(), r.end(), std::greater<>());
  return r;
}

std::string RateTable::to_csv() const {
  const std::vector<double> radii = osc_radii();
  std::ostringstream out;
  out << "epsilon,max_grad_neck,max_grad_global";
  for (int i = 1; i < dim; ++i) out << ",argmax_x" << i;
  for (double r : radii) out << ",osc_" << fmt("%.10g", r);
  out << ",energy,converged,iters,grid_ns,grid_nt\n";
  for (const auto& row : rows) {
    out << num(row.epsilon) << ',' << num(row.max_grad_neck) << ',' << num(row.max_grad_global);
    for (int i = 0; i < dim - 1; ++i) out << ',' << (i < row.argmax_xp.size() ? num(row.argmax_xp[i]) : "");
    for (double r : radii) {
      out << ',';
      for (const auto& [radius, v] : row.osc)
        if (radius == r) out << num(v);
    }
    out << ',' << num(row.energy) << ',' << (row.converged ? 1 : 0) << ',' << row.iterations << ','
        << row.grid_ns << ',' << row.grid_nt << '\n';
  }
  return out.str();
}

RateTable RateTable::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("rate table CSV is empty");
  const std::vector<std::string> header = split(line, ',');
  RateTable table;
  int argmax_cols = 0;
  std::vector<double> radii;
  for (const auto& h : header) {
    if (h.rfind("argmax_x", 0) == 0) ++argmax_cols;
    if (h.rfind("osc_", 0) == 0) radii.push_back(parse_double(h.substr(4), h));
  }
  table.dim = argmax_cols + 1;
  const std::size_t expected = 3 + argmax_cols + radii.size() + 5;
  if (header.size() != expected || header[0] != "epsilon") throw ConfigError("rate table CSV has an unexpected header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != expected) throw ConfigError("rate table CSV line " + std::to_string(lineno) + " has the wrong width");
    RateRow row;
    std::size_t c = 0;
    row.epsilon = parse_double(f[c++], "epsilon");
    row.max_grad_neck = parse_double(f[c++], "max_grad_neck");
    row.max_grad_global = parse_double(f[c++], "max_grad_global");
    row.argmax_xp.resize(argmax_cols);
    for (int i = 0; i < argmax_cols; ++i) row.argmax_xp[i] = parse_double(f[c++], "argmax");
    for (double r : radii) {
      double v = parse_double(f[c++], "osc");
      if (!std::isnan(v)) row.osc.emplace_back(r, v);
    }
    row.energy = parse_double(f[c++], "energy");
    row.converged = f[c++] == "1";
    row.iterations = static_cast<int>(parse_double(f[c++], "iters"));
    row.grid_ns = static_cast<int>(parse_double(f[c++], "grid_ns"));
    row.grid_nt = static_cast<int>(parse_double(f[c++], "grid_nt"));
    table.rows.push_back(std::move(row));
  }
  return table;
}

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("least squares needs equally many x and y values");
  const std::size_t n = x.size();
  if (n < 2) throw InvalidArgument("least squares needs at least 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("least squares needs distinct x values");
  LineFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = y[i] - f.intercept - f.slope * x[i];
    ssr += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  f.stderr_slope = n > 2 ? std::sqrt(ssr / static_cast<double>(n - 2) / sxx) : 0.0;
  return f;
}

nlohmann::json RateFit::to_json() const {
  return {{"slope", slope},   {"intercept", intercept}, {"stderr", stderr_slope},
          {"r2", r2},         {"window", window},       {"excluded_unconverged", excluded_unconverged}};
}

RateFit fit_rate(const RateTable& table, const FitWindow& window) {
  std::vector<const RateRow*> rows;
  RateFit fit;
  for (const auto& r : table.rows) {
    if (r.epsilon < window.eps_min || r.epsilon > window.eps_max) continue;
    if (!r.converged) {
      ++fit.excluded_unconverged;
      continue;
    }
    rows.push_back(&r);
  }
  if (window.exclude_largest && !rows.empty()) {
    auto largest = std::max_element(rows.begin(), rows.end(),
                                    [](const RateRow* a, const RateRow* b) { return a->epsilon < b->epsilon; });
    rows.erase(largest);
  }
  if (rows.size() < 4)
    throw InvalidArgument("rate fit needs at least 4 converged rows in the window, got " + std::to_string(rows.size()));
  std::vector<double> x, y;
  for (const RateRow* r : rows) {
    if (!(r->max_grad_neck > 0.0)) throw InvalidArgument("rate fit needs positive gradient maxima");
    x.push_back(std::log(1.0 / r->epsilon));
    y.push_back(std::log(r->max_grad_neck));
    fit.window.push_back(r->epsilon);
  }
  LineFit lf = least_squares(x, y);
  fit.slope = lf.slope;
  fit.intercept = lf.intercept;
  fit.stderr_slope = lf.stderr_slope;
  fit.r2 = lf.r2;
  return fit;
}

nlohmann::json OscillationFit::to_json() const {
  nlohmann::json j = {{"degenerate", degenerate}, {"radii", radii}, {"osc", osc}};
  if (!degenerate) {
    j["beta"] = beta;
    j["stderr"] = stderr_beta;
    j["r2"] = r2;
  }
  return j;
}

OscillationFit fit_oscillation(const std::vector<double>& radii, const std::vector<double>& osc) {
  if (radii.size() != osc.size()) throw InvalidArgument("oscillation fit needs one value per radius");
  if (radii.size() < 4) throw InvalidArgument("oscillation fit needs at least 4 radii");
  OscillationFit f;
  f.radii = radii;
  f.osc = osc;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(osc[i] > 0.0)) {
      f.degenerate = true;
      return f;
    }
    x.push_back(std::log(radii[i]));
    y.push_back(std::log(osc[i]));
  }
  LineFit lf = least_squares(x, y);
  f.beta = lf.slope;
  f.stderr_beta = lf.stderr_slope;
  f.r2 = lf.r2;
  return f;
}

OscillationFit oscillation_decay_fit(const DiscreteField& field, const std::vector<double>& radii) {
  const double floor = std::sqrt(field.geometry().epsilon);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > floor)) throw InvalidArgument("oscillation radius " + num(radii[i]) + " is not above sqrt(eps)");
    if (!(radii[i] < 0.5)) throw InvalidArgument("oscillation radius " + num(radii[i]) + " is not below 1/2");
    if (i > 0) {
      double k = std::log2(radii[i - 1] / radii[i]);
      if (!(k > 0.5) || std::abs(k - std::round(k)) > 1e-9)
        throw InvalidArgument("oscillation radii must be dyadic and decreasing");
    }
  }
  const int t = field.geometry().dim - 1;
  std::vector<double> osc;
  for (double r : radii) osc.push_back(oscillation(field, Region::neck(Vec::Zero(t), r)));
  return fit_oscillation(radii, osc);
}

nlohmann::json ResolutionCheck::to_json() const {
  return {{"slope_base", slope_base},
          {"slope_refined", slope_refined},
          {"stderr_base", stderr_base},
          {"under_resolved", under_resolved}};
}

ResolutionCheck compare_resolution(const RateFit& base, const RateFit& refined) {
  ResolutionCheck c;
  c.slope_base = base.slope;
  c.slope_refined = refined.slope;
  c.stderr_base = base.stderr_slope;
  c.under_resolved = !(std::abs(refined.slope - base.slope) < base.stderr_slope);
  return c;
}

namespace {

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double W = 640, H = 480, L = 70, R = 20, T = 40, B = 60;
  double px(double x) const { return L + (x - x0) / (x1 - x0) * (W - L - R); }
  double py(double y) const { return H - B - (y - y0) / (y1 - y0) * (H - T - B); }
};

std::string f4(double v) { return fmt("%.4f", v); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else if (c == '&')
      out += "&amp;";
    else
      out += c;
  }
  return out;
}

bool in_fit(const RateFit& fit, double eps) {
  return std::find(fit.window.begin(), fit.window.end(), eps) != fit.window.end();
}

}  // namespace

std::string rate_plot_svg(const RateTable& table, const RateFit& fit, const PlotOptions& opts) {
  std::vector<double> xs, ys;
  for (const auto& r : table.rows) {
    if (!(r.max_grad_neck > 0.0)) continue;
    xs.push_back(std::log10(1.0 / r.epsilon));
    ys.push_back(std::log10(r.max_grad_neck));
  }
  if (xs.empty()) throw InvalidArgument("nothing to plot");
  // Fit coefficients are in natural logs; slopes carry over to log10 unchanged.
  const double b10 = fit.intercept / std::log(10.0);
  Frame fr;
  fr.x0 = std::floor(*std::min_element(xs.begin(), xs.end()) * 2.0) / 2.0;
  fr.x1 = std::ceil(*std::max_element(xs.begin(), xs.end()) * 2.0) / 2.0;
  if (fr.x1 - fr.x0 < 0.5) fr.x1 = fr.x0 + 0.5;
  fr.y0 = std::floor(*std::min_element(ys.begin(), ys.end()) * 4.0) / 4.0 - 0.25;
  fr.y1 = std::ceil(*std::max_element(ys.begin(), ys.end()) * 4.0) / 4.0 + 0.25;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
  s << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  s << "<defs><clipPath id=\"plot\"><rect x=\"" << f4(Frame::L) << "\" y=\"" << f4(Frame::T) << "\" width=\""
    << f4(Frame::W - Frame::L - Frame::R) << "\" height=\"" << f4(Frame::H - Frame::T - Frame::B)
    << "\"/></clipPath></defs>\n";
  if (!opts.title.empty())
    s << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << escape(opts.title) << "</text>\n";

  // Target band through the centroid of the fitted points.
  if (opts.targets && !fit.window.empty()) {
    double cx = 0.0, cy = 0.0;
    for (double e : fit.window) {
      cx += std::log10(1.0 / e);
      cy += b10 + fit.slope * std::log10(1.0 / e);
    }
    cx /= fit.window.size();
    cy /= fit.window.size();
    auto line_y = [&](double slope, double x) { return cy + slope * (x - cx); };
    const auto& t = *opts.targets;
    if (t.upper_exponent && t.lower_exponent) {
      double lo = *t.lower_exponent, hi = *t.upper_exponent;
      s << "<polygon clip-path=\"url(#plot)\" fill=\"#9ecae1\" fill-opacity=\"0.35\" stroke=\"none\" points=\""
        << f4(fr.px(fr.x0)) << ',' << f4(fr.py(line_y(lo, fr.x0))) << ' ' << f4(fr.px(fr.x1)) << ','
        << f4(fr.py(line_y(lo, fr.x1))) << ' ' << f4(fr.px(fr.x1)) << ',' << f4(fr.py(line_y(hi, fr.x1))) << ' '
        << f4(fr.px(fr.x0)) << ',' << f4(fr.py(line_y(hi, fr.x0))) << "\"/>\n";
    }
    for (const auto& e : {t.lower_exponent, t.upper_exponent}) {
      if (!e) continue;
      s << "<line clip-path=\"url(#plot)\" stroke=\"#3182bd\" stroke-dasharray=\"6,4\" x1=\"" << f4(fr.px(fr.x0))
        << "\" y1=\"" << f4(fr.py(line_y(*e, fr.x0))) << "\" x2=\"" << f4(fr.px(fr.x1)) << "\" y2=\""
        << f4(fr.py(line_y(*e, fr.x1))) << "\"/>\n";
    }
  }

  // Axes and decade ticks.
  s << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << f4(Frame::L) << "\" y=\"" << f4(Frame::T) << "\" width=\""
    << f4(Frame::W - Frame::L - Frame::R) << "\" height=\"" << f4(Frame::H - Frame::T - Frame::B) << "\"/></g>\n";
  s << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (double x = std::ceil(fr.x0 * 2.0) / 2.0; x <= fr.x1 + 1e-12; x += 0.5) {
    s << "<line stroke=\"black\" x1=\"" << f4(fr.px(x)) << "\" y1=\"" << f4(Frame::H - Frame::B) << "\" x2=\""
      << f4(fr.px(x)) << "\" y2=\"" << f4(Frame::H - Frame::B + 5) << "\"/>";
    s << "<text text-anchor=\"middle\" x=\"" << f4(fr.px(x)) << "\" y=\"" << f4(Frame::H - Frame::B + 18) << "\">"
      << fmt("%.1f", x) << "</text>\n";
  }
  for (double y = std::ceil(fr.y0 * 4.0) / 4.0; y <= fr.y1 + 1e-12; y += 0.25) {
    s << "<line stroke=\"black\" x1=\"" << f4(Frame::L - 5) << "\" y1=\"" << f4(fr.py(y)) << "\" x2=\""
      << f4(Frame::L) << "\" y2=\"" << f4(fr.py(y)) << "\"/>";
    s << "<text text-anchor=\"end\" x=\"" << f4(Frame::L - 8) << "\" y=\"" << f4(fr.py(y) + 4) << "\">"
      << fmt("%.2f", y) << "</text>\n";
  }
  s << "<text text-anchor=\"middle\" x=\"" << f4((Frame::L + Frame::W - Frame::R) / 2) << "\" y=\"" << f4(Frame::H - 15)
    << "\">log10(1/eps)</text>\n";
  s << "<text text-anchor=\"middle\" transform=\"translate(18," << f4((Frame::T + Frame::H - Frame::B) / 2)
    << ") rotate(-90)\">log10(max |Du|)</text>\n";
  s << "</g>\n";

  // Fitted line.
  s << "<line clip-path=\"url(#plot)\" stroke=\"#d62728\" stroke-width=\"1.5\" x1=\"" << f4(fr.px(fr.x0)) << "\" y1=\""
    << f4(fr.py(b10 + fit.slope * fr.x0)) << "\" x2=\"" << f4(fr.px(fr.x1)) << "\" y2=\""
    << f4(fr.py(b10 + fit.slope * fr.x1)) << "\"/>\n";

  // Data points: filled when used by the fit.
  for (const auto& r : table.rows) {
    if (!(r.max_grad_neck > 0.0)) continue;
    bool used = in_fit(fit, r.epsilon);
    s << "<circle r=\"4\" stroke=\"black\" fill=\"" << (used ? "black" : "white") << "\" cx=\""
      << f4(fr.px(std::log10(1.0 / r.epsilon))) << "\" cy=\"" << f4(fr.py(std::log10(r.max_grad_neck))) << "\"/>\n";
  }

  s << "<text x=\"" << f4(Frame::L + 10) << "\" y=\"" << f4(Frame::T + 18)
    << "\" font-family=\"sans-serif\" font-size=\"12\">slope " << fmt("%.4f", fit.slope) << " +/- "
    << fmt("%.4f", fit.stderr_slope);
  if (opts.targets) {
    const auto& t = *opts.targets;
    s << "; targets";
    if (t.lower_exponent) s << " lower " << fmt("%.4f", *t.lower_exponent);
    if (t.upper_exponent) s << " upper " << fmt("%.4f", *t.upper_exponent);
  }
  s << "</text>\n</svg>\n";
  return s.str();
}

std::string rate_plot_csv(const RateTable& table, const RateFit& fit) {
  std::ostringstream out;
  out << "epsilon,log_inv_eps,log_max_grad,fitted,in_fit\n";
  for (const auto& r : table.rows) {
    double x = std::log(1.0 / r.epsilon);
    out << num(r.epsilon) << ',' << num(x) << ','
        << (r.max_grad_neck > 0.0 ? num(std::log(r.max_grad_neck)) : std::string()) << ','
        << num(fit.intercept + fit.slope * x) << ',' << (in_fit(fit, r.epsilon) ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace gaplab
