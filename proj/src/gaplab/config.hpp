#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gaplab/barriers.hpp"
#include "gaplab/experiments.hpp"
#include "gaplab/geometry.hpp"
#include "gaplab/solver.hpp"

namespace gaplab {

struct GeometryConfig {
  std::string kind = "disks";
  int dim = 2;
  double epsilon = 1e-3;
  // Row-major entries of the profile Hessians (quadratic kind).
  std::vector<double> upper_matrix{1.0};
  std::vector<double> lower_matrix{-1.0};
  // Coefficients of |x'|^2, |x'|^4, ... (polynomial kind).
  std::vector<double> upper_coeffs{0.5};
  std::vector<double> lower_coeffs{-0.5};
  // Overrides of the constants derived from the profiles.
  std::optional<double> c1, c2, kappa1, kappa2;

  GapGeometry build() const;
};

struct BarrierConfig {
  BarrierSpec spec;
  // Unset convexity constants are taken from the geometry.
  bool kappa1_set = false;
  bool kappa2_set = false;
  CertifyOptions certify;
  BernsteinOptions bernstein;
};

struct TransformConfig {
  std::vector<double> radii{0.05, 0.1, 0.2};
  std::size_t samples = 1000;
  int quadrature_order = 16;
  double cutoff = 0.9;
  double coefficient_p = 2.0;
  std::uint64_t seed = 0;
};

struct OutputConfig {
  std::string dir = "out";
  bool plot = true;
  std::string title;
};

// Run configuration read from an INI document with sections [geometry],
// [solver], [sweep], [barrier], [transform] and [output].
struct RunConfig {
  GeometryConfig geometry;
  SolverConfig solver;
  SweepConfig sweep;
  BarrierConfig barrier;
  TransformConfig transform;
  OutputConfig output;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  // Sets one value addressed as "section.key"; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  // Throws ConfigError naming the offending key.
  void validate() const;
  // Every key that affects results, as sorted "section.key=value" lines.
  std::string canonical() const;
  // SHA-256 of canonical(), hex encoded.
  std::string hash() const;
  // All keys with their current values, as an INI document.
  std::string to_ini() const;
  static std::vector<std::string> keys();

  // Barrier spec with unset constants filled from the geometry.
  BarrierSpec barrier_spec(const GapGeometry& geom) const;
};

std::string sha256_hex(const std::string& data);

}  // namespace gaplab
