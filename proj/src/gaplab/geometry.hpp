#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gaplab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A boundary profile x_n = h(x') over the tangential variables, with exact
// first and second derivatives.
class Profile {
 public:
  virtual ~Profile() = default;
  virtual int tangential_dim() const = 0;
  virtual double value(const Vec& xp) const = 0;
  virtual Vec gradient(const Vec& xp) const = 0;
  virtual Mat hessian(const Vec& xp) const = 0;
  // Radius of the ball |x'| < R on which the profile may be evaluated.
  virtual double domain_radius() const { return 1.0; }
  virtual nlohmann::json describe() const = 0;

 protected:
  void check_domain(const Vec& xp) const;
};

// h(x') = x'^T M x' / 2 with M symmetric.
class QuadraticProfile : public Profile {
 public:
  explicit QuadraticProfile(Mat m);
  int tangential_dim() const override { return static_cast<int>(m_.rows()); }
  double value(const Vec& xp) const override;
  Vec gradient(const Vec& xp) const override;
  Mat hessian(const Vec& xp) const override;
  nlohmann::json describe() const override;
  const Mat& matrix() const { return m_; }

 private:
  Mat m_;
};

// sign * (1 - sqrt(1 - |x'|^2)): the lower or upper cap of a unit ball.
class DiskProfile : public Profile {
 public:
  DiskProfile(int tangential_dim, double sign);
  int tangential_dim() const override { return dim_; }
  double value(const Vec& xp) const override;
  Vec gradient(const Vec& xp) const override;
  Mat hessian(const Vec& xp) const override;
  double domain_radius() const override { return kClamp; }
  nlohmann::json describe() const override;

  static constexpr double kClamp = 0.999;

 private:
  int dim_;
  double sign_;
};

// Radial even polynomial h(x') = sum_k c_k |x'|^(2k), k = 1, 2, ...
class RadialPolynomialProfile : public Profile {
 public:
  RadialPolynomialProfile(int tangential_dim, std::vector<double> coeffs);
  int tangential_dim() const override { return dim_; }
  double value(const Vec& xp) const override;
  Vec gradient(const Vec& xp) const override;
  Mat hessian(const Vec& xp) const override;
  nlohmann::json describe() const override;

 private:
  int dim_;
  std::vector<double> coeffs_;
};

// User-supplied closed form with its own derivative evaluators.
class FunctionProfile : public Profile {
 public:
  using ValueFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;
  using HessFn = std::function<Mat(const Vec&)>;
  FunctionProfile(int tangential_dim, ValueFn f, GradFn g, HessFn h, std::string label,
                  double radius = 1.0);
  int tangential_dim() const override { return dim_; }
  double value(const Vec& xp) const override;
  Vec gradient(const Vec& xp) const override;
  Mat hessian(const Vec& xp) const override;
  double domain_radius() const override { return radius_; }
  nlohmann::json describe() const override;

 private:
  int dim_;
  ValueFn f_;
  GradFn g_;
  HessFn h_;
  std::string label_;
  double radius_;
};

enum class Side { Upper, Lower };

struct GapGeometry {
  int dim = 2;
  double epsilon = 0.0;
  std::shared_ptr<const Profile> upper;
  std::shared_ptr<const Profile> lower;
  double c1 = 1.0;
  double c2 = 1.0;
  std::optional<double> kappa1;
  std::optional<double> kappa2;
  std::string kind = "custom";

  GapGeometry() = default;
  GapGeometry(int dim, double epsilon, std::shared_ptr<const Profile> upper,
              std::shared_ptr<const Profile> lower, double c1, double c2,
              std::optional<double> kappa1 = std::nullopt,
              std::optional<double> kappa2 = std::nullopt, std::string kind = "custom");

  double h_upper(const Vec& xp) const { return upper->value(xp); }
  double h_lower(const Vec& xp) const { return lower->value(xp); }
  double gap_width(const Vec& xp) const;
  // Height of the upper boundary eps/2 + h1 and of the lower boundary -eps/2 + h2.
  double upper_boundary(const Vec& xp) const;
  double lower_boundary(const Vec& xp) const;
  double profile_radius() const;
  // The same profiles at a different separation.
  GapGeometry with_epsilon(double eps) const;
  nlohmann::json describe() const;
};

GapGeometry make_disk_geometry(double epsilon, int dim = 2);
// h1 = x'^T M1 x' / 2, h2 = x'^T M2 x' / 2.
GapGeometry make_quadratic_geometry(double epsilon, const Mat& m_upper, const Mat& m_lower);
GapGeometry make_polynomial_geometry(double epsilon, int dim, const std::vector<double>& upper,
                                     const std::vector<double>& lower);
// Rebuilds a geometry from GapGeometry::describe(). Function profiles cannot be restored.
GapGeometry geometry_from_json(const nlohmann::json& j);

// Unit normal on the upper or lower boundary at x'. Upper: (-Dh1, 1)/sqrt(1+|Dh1|^2).
// Lower: (Dh2, -1)/sqrt(1+|Dh2|^2). Both point away from the gap, into the inclusion.
Vec inner_normal(const GapGeometry& geom, Side side, const Vec& xp);

struct HypothesisViolation {
  std::string kind;
  Vec point;
  double value;
  double bound;
};

struct HypothesisReport {
  double radius = 0.0;
  std::size_t samples = 0;
  double c1_est = 0.0;
  double c2_est = 0.0;
  double kappa1_est = 0.0;
  double kappa2_est = 0.0;
  std::vector<HypothesisViolation> violations;
  nlohmann::json to_json() const;
};

// Sample-based estimate of the standing constants on |x'| <= radius. Violations of
// declared constants are collected, not thrown.
HypothesisReport validate_hypotheses(const GapGeometry& geom, std::size_t samples,
                                     double radius = 0.9, std::uint64_t seed = 0);

struct Region {
  enum class Kind { Neck, Annulus, Full };
  Kind kind = Kind::Full;
  Vec center;
  double outer = 1.0;
  double inner = 0.0;

  static Region neck(const Vec& center, double r);
  static Region annulus(const Vec& center, double r_outer, double r_inner);
  static Region full(int tangential_dim);
  // Membership in the closure of the region, tested on x' only.
  bool contains(const Vec& xp) const;
};

}  // namespace gaplab
