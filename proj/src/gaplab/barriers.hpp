#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gaplab/geometry.hpp"
#include "gaplab/solver.hpp"

namespace gaplab {

enum class BarrierVariant { Supersolution, Subsolution, Bernstein, Appendix };

// "supersolution_v", "subsolution_w", "bernstein_F", "appendix_F".
std::string variant_name(BarrierVariant v);
BarrierVariant parse_variant(const std::string& name);

struct BarrierSpec {
  BarrierVariant variant = BarrierVariant::Supersolution;
  int n = 2;
  double p = 5.0;
  double delta = 0.5;
  double gamma = 0.3;
  // Bernstein exponent; the weight exponent is gamma = 2 beta.
  double beta = 0.0;
  double A = 1.0;
  double q = 2.0;
  double kappa1 = 1.0;
  double kappa2 = 1.0;
  double epsilon = 1e-3;

  // Human-readable list of violated parameter bounds (empty when admissible).
  std::vector<std::string> admissibility_issues() const;
  // Throws InvariantError naming the first violated bound.
  void validate() const;
  // Weight a of the transverse variable in R^2 = |x'|^2 + a x_n^2.
  double transverse_weight() const;
  // Radius of the truncation set {R <= 4 sqrt(eps/delta)} of the subsolution (0 otherwise).
  double truncation_radius() const;
  // Dimension threshold for the Bernstein exponent; true when (n, p, beta) satisfy it.
  bool dimension_condition() const;
  double dimension_threshold() const;
  nlohmann::json to_json() const;
};

struct BarrierValue {
  double value = 0.0;
  Vec gradient;
  // div(|D b|^(p-2) D b)
  double divergence = 0.0;
};

// Closed-form value, gradient and p-Laplacian of the radial barrier
// R^gamma (supersolution) or [R^gamma - T^gamma]_+ (subsolution).
BarrierValue eval_barrier(const BarrierSpec& spec, const Vec& x);

// Coefficients (c_AA, c_AB, c_BB) of the quartic that carries the sign of
// div(|Dv|^(p-2) Dv) for v = (|x'|^2 + a x_n^2)^(gamma/2):
//   div = |Dv|^(p-4) gamma^3 R^(3 gamma - 8) (c_AA |x'|^4 + c_AB |x'|^2 x_n^2 + c_BB x_n^4).
struct Quartic {
  double c_aa = 0.0;
  double c_ab = 0.0;
  double c_bb = 0.0;
  double operator()(double s) const { return c_aa + c_ab * s * s + c_bb * s * s * s * s; }
};
Quartic divergence_quartic(int n, double p, double gamma, double a);
// Smallest positive root in (0, cap] of the quartic in s = |x_n|/|x'|, or cap when
// it keeps the sign of c_AA up to cap.
double first_sign_change(const Quartic& q, double cap);

struct CertifyOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  // Certify inadmissible parameters anyway, to exhibit the violations.
  bool allow_inadmissible = false;
};

struct CertificateViolation {
  std::string kind;
  Vec point;
  double value = 0.0;
};

struct Certificate {
  BarrierSpec spec;
  bool admissible = true;
  std::vector<std::string> issues;
  // Construction constants.
  double mu0 = 0.0;
  double mu = 0.0;
  double r0 = 0.0;
  double inner_radius = 0.0;
  double outer_radius = 0.0;
  std::size_t interior_samples = 0;
  std::size_t boundary_samples = 0;
  std::size_t outside_cone = 0;
  // Smallest normalized interior margin (-div for v, +div for w, divided by |Dv|^(p-4) gamma^3 R^(3 gamma - 4)).
  double interior_min_margin = 0.0;
  // Smallest boundary margin (dv/dnu for v, -dw/dnu for w, divided by gamma R^(gamma - 1)).
  double boundary_min_margin = 0.0;
  std::size_t violation_count = 0;
  std::vector<CertificateViolation> violations;  // first 100
  std::vector<std::string> notes;
  nlohmann::json to_json() const;
};

// Samples the barrier's region from its construction and checks the interior
// divergence sign and the boundary normal-derivative sign.
Certificate certify_sign(const BarrierSpec& spec, const GapGeometry& geom, const CertifyOptions& opts = {});

// Weight Q of the Bernstein quantity (variant Bernstein or Appendix).
double bernstein_weight(const BarrierSpec& spec, const Vec& x);

struct NormalDerivativeSample {
  Vec point;
  double grad_norm = 0.0;
  double s = 2.0;
  // D_nu |Du|^s / (s |Du|^s); the bound asks kappa1 <= ratio <= kappa2.
  double ratio = 0.0;
  bool holds = false;
};

struct BernsteinOptions {
  // Boundary samples are taken on |x'| <= sample_radius.
  double sample_radius = 0.25;
  // Samples with |Du| below floor_fraction * max |Du| are skipped.
  double floor_fraction = 1e-3;
  // Relative slack applied to both sides of the bound.
  double tolerance = 0.0;
};

struct BernsteinReport {
  std::vector<double> weight;    // Q per cell
  std::vector<double> quantity;  // F (or G when p < 2) per cell
  std::size_t argmax = 0;
  Vec argmax_point;
  double kappa1_measured = 0.0;
  double kappa2_measured = 0.0;
  double floor = 0.0;
  std::vector<NormalDerivativeSample> samples;
  // Fraction of samples above the floor satisfying the bound, per s.
  double fraction_s2 = 0.0;
  double fraction_sp = 0.0;
  std::size_t count_s2 = 0;
  std::size_t count_sp = 0;
  bool dimension_condition = false;
  nlohmann::json to_json(bool with_fields = false) const;
};

BernsteinReport bernstein_eval(const BarrierSpec& spec, const DiscreteField& field, const BernsteinOptions& opts = {});

struct ComparisonFit {
  double C_boundary = 0.0;
  double interior_violation_fraction = 0.0;
  std::size_t boundary_nodes = 0;
  std::size_t interior_nodes = 0;
  nlohmann::json to_json() const;
};

// Fits |u| <= C (v + sqrt(eps)) on the region's boundary nodes and counts
// interior nodes exceeding it by more than tol.
ComparisonFit comparison_fit(const DiscreteField& field, const BarrierSpec& spec, const Region& region,
                             double tol = 1e-6);

}  // namespace gaplab
