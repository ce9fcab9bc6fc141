#include "gaplab/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gaplab/error.hpp"

namespace gaplab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& s) {
  std::string t = trim(s);
  try {
    std::size_t used = 0;
    double v = std::stod(t, &used);
    if (used == t.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + s + "'");
}

long long to_integer(const std::string& key, const std::string& s) {
  std::string t = trim(s);
  try {
    std::size_t used = 0;
    long long v = std::stoll(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + s + "'");
}

int to_int(const std::string& key, const std::string& s) {
  long long v = to_integer(key, s);
  if (v < -(1LL << 31) || v > (1LL << 31) - 1) throw ConfigError(key + ": integer out of range");
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::string t = trim(s);
  if (t.empty() || t[0] == '-') throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
}

bool to_bool(const std::string& key, const std::string& s) {
  std::string t = trim(s);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::string t = trim(s);
  if (t.empty()) return out;
  std::istringstream in(t);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_double(key, item));
  return out;
}

std::string list_str(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

std::optional<double> to_optional(const std::string& key, const std::string& s) {
  if (trim(s).empty()) return std::nullopt;
  return to_double(key, s);
}

std::string opt_str(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

struct Key {
  std::string name;  // "section.key"
  // Keys that only steer output or scheduling stay out of the hash.
  bool hashed;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define GAPLAB_DOUBLE(sec, key, field)                                                      \
  Key {                                                                                     \
    #sec "." #key, true, [](const RunConfig& c) { return fmt_double(c.field); },            \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); } \
  }
#define GAPLAB_INT(sec, key, field)                                                      \
  Key {                                                                                  \
    #sec "." #key, true, [](const RunConfig& c) { return std::to_string(c.field); },     \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_int(k, v); } \
  }
#define GAPLAB_BOOL(sec, key, field, hashed)                                                  \
  Key {                                                                                       \
    #sec "." #key, hashed, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); }      \
  }
#define GAPLAB_LIST(sec, key, field)                                                      \
  Key {                                                                                   \
    #sec "." #key, true, [](const RunConfig& c) { return list_str(c.field); },            \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_list(k, v); } \
  }
#define GAPLAB_OPT(sec, key, field)                                                           \
  Key {                                                                                       \
    #sec "." #key, true, [](const RunConfig& c) { return opt_str(c.field); },                 \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_optional(k, v); } \
  }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k{
        Key{"geometry.kind", true, [](const RunConfig& c) { return c.geometry.kind; },
            [](RunConfig& c, const std::string& key, const std::string& v) {
              std::string t = trim(v);
              if (t != "disks" && t != "quadratic" && t != "polynomial")
                throw ConfigError(key + ": unknown geometry kind '" + t + "' (expected disks, quadratic or polynomial)");
              c.geometry.kind = t;
            }},
        GAPLAB_INT(geometry, dim, geometry.dim),
        GAPLAB_DOUBLE(geometry, epsilon, geometry.epsilon),
        GAPLAB_LIST(geometry, upper_matrix, geometry.upper_matrix),
        GAPLAB_LIST(geometry, lower_matrix, geometry.lower_matrix),
        GAPLAB_LIST(geometry, upper_coeffs, geometry.upper_coeffs),
        GAPLAB_LIST(geometry, lower_coeffs, geometry.lower_coeffs),
        GAPLAB_OPT(geometry, c1, geometry.c1),
        GAPLAB_OPT(geometry, c2, geometry.c2),
        GAPLAB_OPT(geometry, kappa1, geometry.kappa1),
        GAPLAB_OPT(geometry, kappa2, geometry.kappa2),

        GAPLAB_DOUBLE(solver, p, solver.p),
        GAPLAB_DOUBLE(solver, eta, solver.eta),
        GAPLAB_INT(solver, grid_ns, solver.grid_ns),
        GAPLAB_INT(solver, grid_nt, solver.grid_nt),
        GAPLAB_DOUBLE(solver, grading, solver.grading),
        GAPLAB_DOUBLE(solver, outer_radius, solver.outer_radius),
        Key{"solver.dirichlet", true, [](const RunConfig& c) { return c.solver.dirichlet; },
            [](RunConfig& c, const std::string&, const std::string& v) { c.solver.dirichlet = trim(v); }},
        GAPLAB_DOUBLE(solver, newton_tol, solver.newton_tol),
        GAPLAB_INT(solver, max_newton, solver.max_newton),
        GAPLAB_INT(solver, continuation_steps, solver.continuation_steps),
        GAPLAB_INT(solver, refine, solver.refine),
        // Explicit schedule "p:eta, p:eta, ...".
        Key{"solver.continuation", true,
            [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.solver.continuation.size(); ++i)
                out += (i ? "," : "") + fmt_double(c.solver.continuation[i].p) + ":" +
                       fmt_double(c.solver.continuation[i].eta);
              return out;
            },
            [](RunConfig& c, const std::string& key, const std::string& v) {
              c.solver.continuation.clear();
              std::istringstream in(trim(v));
              std::string item;
              while (std::getline(in, item, ',')) {
                auto colon = item.find(':');
                if (colon == std::string::npos) throw ConfigError(key + ": expected p:eta pairs, got '" + item + "'");
                c.solver.continuation.push_back(
                    {to_double(key, item.substr(0, colon)), to_double(key, item.substr(colon + 1))});
              }
            }},

        GAPLAB_LIST(sweep, epsilons, sweep.epsilons),
        GAPLAB_DOUBLE(sweep, window_delta, sweep.window_delta),
        GAPLAB_DOUBLE(sweep, window_factor, sweep.window_factor),
        GAPLAB_BOOL(sweep, resolution_rule, sweep.resolution_rule, true),
        GAPLAB_DOUBLE(sweep, cell_fraction, sweep.cell_fraction),
        GAPLAB_INT(sweep, min_ns, sweep.min_ns),
        GAPLAB_DOUBLE(sweep, osc_top, sweep.osc_top),
        GAPLAB_BOOL(sweep, exclude_largest, sweep.exclude_largest, true),
        GAPLAB_DOUBLE(sweep, target_delta, sweep.target_delta),
        GAPLAB_BOOL(sweep, check_resolution, sweep.check_resolution, true),
        Key{"sweep.workers", false, [](const RunConfig& c) { return std::to_string(c.sweep.workers); },
            [](RunConfig& c, const std::string& key, const std::string& v) { c.sweep.workers = to_int(key, v); }},

        Key{"barrier.variant", true, [](const RunConfig& c) { return variant_name(c.barrier.spec.variant); },
            [](RunConfig& c, const std::string& key, const std::string& v) {
              try {
                c.barrier.spec.variant = parse_variant(trim(v));
              } catch (const Error& e) {
                throw ConfigError(key + ": " + e.what());
              }
            }},
        GAPLAB_INT(barrier, n, barrier.spec.n),
        GAPLAB_DOUBLE(barrier, p, barrier.spec.p),
        GAPLAB_DOUBLE(barrier, delta, barrier.spec.delta),
        GAPLAB_DOUBLE(barrier, gamma, barrier.spec.gamma),
        GAPLAB_DOUBLE(barrier, beta, barrier.spec.beta),
        GAPLAB_DOUBLE(barrier, A, barrier.spec.A),
        GAPLAB_DOUBLE(barrier, q, barrier.spec.q),
        Key{"barrier.kappa1", true,
            [](const RunConfig& c) { return c.barrier.kappa1_set ? fmt_double(c.barrier.spec.kappa1) : ""; },
            [](RunConfig& c, const std::string& key, const std::string& v) {
              auto o = to_optional(key, v);
              c.barrier.kappa1_set = o.has_value();
              c.barrier.spec.kappa1 = o.value_or(1.0);
            }},
        Key{"barrier.kappa2", true,
            [](const RunConfig& c) { return c.barrier.kappa2_set ? fmt_double(c.barrier.spec.kappa2) : ""; },
            [](RunConfig& c, const std::string& key, const std::string& v) {
              auto o = to_optional(key, v);
              c.barrier.kappa2_set = o.has_value();
              c.barrier.spec.kappa2 = o.value_or(1.0);
            }},
        Key{"barrier.samples", true, [](const RunConfig& c) { return std::to_string(c.barrier.certify.samples); },
            [](RunConfig& c, const std::string& key, const std::string& v) { c.barrier.certify.samples = to_u64(key, v); }},
        Key{"barrier.seed", true, [](const RunConfig& c) { return std::to_string(c.barrier.certify.seed); },
            [](RunConfig& c, const std::string& key, const std::string& v) { c.barrier.certify.seed = to_u64(key, v); }},
        GAPLAB_BOOL(barrier, allow_inadmissible, barrier.certify.allow_inadmissible, true),
        GAPLAB_DOUBLE(barrier, sample_radius, barrier.bernstein.sample_radius),
        GAPLAB_DOUBLE(barrier, floor_fraction, barrier.bernstein.floor_fraction),
        GAPLAB_DOUBLE(barrier, tolerance, barrier.bernstein.tolerance),

        GAPLAB_LIST(transform, radii, transform.radii),
        Key{"transform.samples", true, [](const RunConfig& c) { return std::to_string(c.transform.samples); },
            [](RunConfig& c, const std::string& key, const std::string& v) { c.transform.samples = to_u64(key, v); }},
        GAPLAB_INT(transform, quadrature_order, transform.quadrature_order),
        GAPLAB_DOUBLE(transform, cutoff, transform.cutoff),
        GAPLAB_DOUBLE(transform, coefficient_p, transform.coefficient_p),
        Key{"transform.seed", true, [](const RunConfig& c) { return std::to_string(c.transform.seed); },
            [](RunConfig& c, const std::string& key, const std::string& v) { c.transform.seed = to_u64(key, v); }},

        Key{"output.dir", false, [](const RunConfig& c) { return c.output.dir; },
            [](RunConfig& c, const std::string&, const std::string& v) { c.output.dir = trim(v); }},
        GAPLAB_BOOL(output, plot, output.plot, false),
        Key{"output.title", false, [](const RunConfig& c) { return c.output.title; },
            [](RunConfig& c, const std::string&, const std::string& v) { c.output.title = trim(v); }},
    };
    std::sort(k.begin(), k.end(), [](const Key& a, const Key& b) { return a.name < b.name; });
    return k;
  }();
  return keys;
}

#undef GAPLAB_DOUBLE
#undef GAPLAB_INT
#undef GAPLAB_BOOL
#undef GAPLAB_LIST
#undef GAPLAB_OPT

const Key& find_key(const std::string& name) {
  for (const auto& k : registry())
    if (k.name == name) return k;
  throw ConfigError("unknown key '" + name + "'");
}

Mat square_matrix(const std::string& key, const std::vector<double>& entries) {
  const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(entries.size()))));
  if (n < 1 || static_cast<std::size_t>(n * n) != entries.size())
    throw ConfigError(key + ": expected a square number of entries, got " + std::to_string(entries.size()));
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = entries[static_cast<std::size_t>(i * n + j)];
  if ((m - m.transpose()).norm() > 1e-12 * (1.0 + m.norm()))
    throw ConfigError(key + ": matrix must be symmetric");
  return m;
}

}  // namespace

GapGeometry GeometryConfig::build() const {
  GapGeometry g;
  try {
    if (kind == "disks") {
      g = make_disk_geometry(epsilon, dim);
    } else if (kind == "quadratic") {
      Mat mu = square_matrix("geometry.upper_matrix", upper_matrix);
      Mat ml = square_matrix("geometry.lower_matrix", lower_matrix);
      if (mu.rows() + 1 != dim)
        throw ConfigError("geometry.upper_matrix: a " + std::to_string(mu.rows()) + "x" + std::to_string(mu.rows()) +
                          " matrix does not match geometry.dim = " + std::to_string(dim));
      if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("geometry.epsilon must lie in (0, 1)");
      g = make_quadratic_geometry(epsilon, mu, ml);
    } else if (kind == "polynomial") {
      if (upper_coeffs.empty() || lower_coeffs.empty())
        throw ConfigError("geometry.upper_coeffs and geometry.lower_coeffs must be nonempty");
      if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("geometry.epsilon must lie in (0, 1)");
      g = make_polynomial_geometry(epsilon, dim, upper_coeffs, lower_coeffs);
    } else {
      throw ConfigError("geometry.kind: unknown geometry kind '" + kind + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  }
  if (c1) g.c1 = *c1;
  if (c2) g.c2 = *c2;
  if (kappa1) g.kappa1 = *kappa1;
  if (kappa2) g.kappa2 = *kappa2;
  return g;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) { find_key(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return find_key(key).get(*this); }

RunConfig RunConfig::parse(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("malformed config at line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' must appear inside a section");
    for (const auto& [key, value] : body) c.set(section + "." + key, value.get_value<std::string>());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::validate() const {
  if (geometry.dim < 2 || geometry.dim > 3) throw ConfigError("geometry.dim must be 2 or 3");
  if (!(geometry.epsilon > 0.0 && geometry.epsilon < 1.0)) throw ConfigError("geometry.epsilon must lie in (0, 1)");
  geometry.build();
  try {
    solver.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  try {
    sweep.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (barrier.certify.samples < 1) throw ConfigError("barrier.samples must be positive");
  if (!(barrier.bernstein.sample_radius > 0.0)) throw ConfigError("barrier.sample_radius must be positive");
  if (!(barrier.bernstein.floor_fraction >= 0.0)) throw ConfigError("barrier.floor_fraction must be nonnegative");
  if (!(barrier.bernstein.tolerance >= 0.0)) throw ConfigError("barrier.tolerance must be nonnegative");
  for (double r : transform.radii)
    if (!(r > 0.0 && r <= 0.25)) throw ConfigError("transform.radii must lie in (0, 1/4]");
  if (transform.samples < 1) throw ConfigError("transform.samples must be positive");
  if (transform.quadrature_order < 2) throw ConfigError("transform.quadrature_order must be at least 2");
  if (!(transform.cutoff > 0.0 && transform.cutoff < 1.0)) throw ConfigError("transform.cutoff must lie in (0, 1)");
  if (!(transform.coefficient_p > 1.0)) throw ConfigError("transform.coefficient_p must exceed 1");
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& k : registry())
    if (k.hashed) out += k.name + "=" + k.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

std::string RunConfig::to_ini() const {
  std::string out;
  std::string section;
  for (const auto& k : registry()) {
    auto dot = k.name.find('.');
    std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(*this) + "\n";
  }
  return out;
}

BarrierSpec RunConfig::barrier_spec(const GapGeometry& geom) const {
  BarrierSpec s = barrier.spec;
  if (!barrier.kappa1_set) s.kappa1 = geom.kappa1.value_or(1.0);
  if (!barrier.kappa2_set) s.kappa2 = geom.kappa2.value_or(1.0);
  s.epsilon = geom.epsilon;
  return s;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

}  // namespace gaplab
