#pragma once

#include <cstdint>
#include <vector>

#include "gaplab/geometry.hpp"
#include "gaplab/quadrature.hpp"

namespace gaplab {

// Flattening chart centred at x0': keeps x' (shifted) and maps the transverse
// coordinate affinely onto a slab of constant height h1(x0') - h2(x0') + eps.
class NeckChart {
 public:
  NeckChart(GapGeometry geom, Vec base_xp, double outer_radius);

  const GapGeometry& geometry() const { return geom_; }
  const Vec& base() const { return base_; }
  double outer_radius() const { return radius_; }
  // Slab height h1(x0') - h2(x0') + eps.
  double slab_height() const { return base_width_; }

  Vec forward(const Vec& x) const;
  Vec inverse(const Vec& z) const;

  struct Jacobian {
    Mat B;  // dZ/dx
    double det;
  };
  Jacobian jacobian(const Vec& z) const;

  // Physical point above x' at relative height t in [0, 1] (0 = lower boundary).
  Vec point_at(const Vec& xp, double t) const;

 private:
  GapGeometry geom_;
  Vec base_;
  double radius_;
  double base_width_;
};

// Intermediates of the annular map at one point.
struct PhiPoint {
  Vec x;
  Vec g;
  Vec theta;
  Vec xi;
  double mu = 0.0;
  double h1_moll = 0.0;
  double h2_moll = 0.0;
  Vec dh1_moll;
  Vec dh2_moll;
};

// Map from the cylinder Q_{2r,r^2} \ Q_{r/4,r^2} onto the gap, built from
// mollified profiles so that the lateral faces y_n = +-r^2 land on the
// inclusion boundaries.
class PhiChart {
 public:
  // cutoff: profiles are replaced by zero beyond |x'| > cutoff.
  PhiChart(GapGeometry geom, double r, int quadrature_order = 16, double cutoff = 0.9);

  const GapGeometry& geometry() const { return geom_; }
  double scale() const { return r_; }
  int quadrature_order() const { return order_; }

  bool in_domain(const Vec& y) const;
  PhiPoint evaluate(const Vec& y) const;
  Vec forward(const Vec& y) const { return evaluate(y).x; }
  Mat jacobian(const Vec& y) const;
  // Hessians of each component x_i with respect to y.
  std::vector<Mat> second_derivatives(const Vec& y) const;
  // Damped Newton inversion; tolerance 1e-12, at most 50 iterations.
  Vec inverse(const Vec& x) const;

 private:
  struct Profiles {
    double h1, h2;
    Vec d1, d2;
  };
  Profiles profiles_at(const Vec& yp) const;
  // Mollified gradient and its y' and y_n derivatives for one profile.
  void mollified(const Profile& prof, const Vec& yp, double mu, double dmu, double& value, Vec& grad,
                 Mat& dgrad_dyp, Vec& dgrad_dyn) const;
  PhiPoint evaluate_unchecked(const Vec& y, Mat* jac) const;

  GapGeometry geom_;
  double r_;
  int order_;
  double cutoff_;
  BallRule rule_;
};

struct PhiBoundsReport {
  double r = 0.0;
  std::size_t samples = 0;
  std::size_t boundary_samples = 0;
  double C_jacobian = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double C_btilde = 0.0;         // max |b~|
  double C_btilde_scaled = 0.0;  // r * max |b~|
  double parallelism_residual_max = 0.0;
  double coefficient_p = 2.0;
  std::vector<std::pair<std::string, Vec>> violations;
  nlohmann::json to_json() const;
};

// Samples the annular cylinder and measures the two-sided Jacobian bound, the
// drift coefficient b~ = a^{kl} D_kl y of the pulled-back operator, and the
// alignment of D Phi e_n with the boundary normal on y_n = +-r^2. The operator
// coefficients are a = I + (p-2) e1 e1^T.
PhiBoundsReport verify_phi_bounds(const PhiChart& chart, std::size_t samples, std::uint64_t seed = 0,
                                  double coefficient_p = 2.0);

}  // namespace gaplab
