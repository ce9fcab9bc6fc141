#include "gaplab/transforms.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "gaplab/error.hpp"

namespace gaplab {

NeckChart::NeckChart(GapGeometry geom, Vec base_xp, double outer_radius)
    : geom_(std::move(geom)), base_(std::move(base_xp)), radius_(outer_radius) {
  if (base_.size() != geom_.dim - 1) throw InvalidArgument("chart centre has the wrong dimension");
  if (!(radius_ > 0.0 && radius_ <= 0.5)) throw InvalidArgument("chart radius must lie in (0, 1/2]");
  base_width_ = geom_.gap_width(base_);
}

Vec NeckChart::forward(const Vec& x) const {
  const int n = geom_.dim;
  if (x.size() != n) throw InvalidArgument("neck chart expects a point of dimension " + std::to_string(n));
  Vec xp = x.head(n - 1);
  if ((xp - base_).norm() > radius_ * (1.0 + 1e-12)) throw DomainError("point outside the chart neighbourhood");
  double lo = geom_.lower_boundary(xp);
  double hi = geom_.upper_boundary(xp);
  double xn = x[n - 1];
  double slack = 1e-12 * (hi - lo);
  if (xn < lo - slack || xn > hi + slack) throw DomainError("point outside the gap");
  Vec z(n);
  z.head(n - 1) = xp - base_;
  z[n - 1] = base_width_ * ((xn - lo) / (hi - lo) - 0.5);
  return z;
}

Vec NeckChart::inverse(const Vec& z) const {
  const int n = geom_.dim;
  if (z.size() != n) throw InvalidArgument("neck chart expects a point of dimension " + std::to_string(n));
  if (std::abs(z[n - 1]) > 0.5 * base_width_ * (1.0 + 1e-12)) throw DomainError("point outside the slab");
  return point_at(z.head(n - 1) + base_, z[n - 1] / base_width_ + 0.5);
}

Vec NeckChart::point_at(const Vec& xp, double t) const {
  const int n = geom_.dim;
  Vec x(n);
  x.head(n - 1) = xp;
  double lo = geom_.lower_boundary(xp);
  x[n - 1] = lo + t * geom_.gap_width(xp);
  return x;
}

NeckChart::Jacobian NeckChart::jacobian(const Vec& z) const {
  const int n = geom_.dim;
  Vec x = inverse(z);
  Vec xp = x.head(n - 1);
  double xn = x[n - 1];
  double w = geom_.gap_width(xp);
  Vec d1 = geom_.upper->gradient(xp);
  Vec d2 = geom_.lower->gradient(xp);
  double eps = geom_.epsilon;
  double h1 = geom_.h_upper(xp);
  double h2 = geom_.h_lower(xp);
  Mat b = Mat::Identity(n, n);
  double f = base_width_ / (w * w);
  for (int j = 0; j < n - 1; ++j)
    b(n - 1, j) = f * (d2[j] * (xn - h1 - 0.5 * eps) - d1[j] * (xn - h2 + 0.5 * eps));
  b(n - 1, n - 1) = base_width_ / w;
  return {b, b(n - 1, n - 1)};
}

PhiChart::PhiChart(GapGeometry geom, double r, int quadrature_order, double cutoff)
    : geom_(std::move(geom)), r_(r), order_(quadrature_order), cutoff_(cutoff) {
  if (geom_.dim < 2 || geom_.dim > 3) throw InvalidArgument("annular chart implemented for n = 2 and n = 3");
  if (!(r > std::sqrt(geom_.epsilon))) throw InvalidArgument("chart scale r must exceed sqrt(epsilon)");
  if (!(cutoff > 0.0) || cutoff > geom_.profile_radius())
    throw InvalidArgument("profile cutoff must lie inside the profile domain");
  if (!(2.0 * r + r * r * r < cutoff)) throw InvalidArgument("chart scale r too large for the profile cutoff");
  rule_ = mollifier_rule(geom_.dim - 1, quadrature_order);
}

bool PhiChart::in_domain(const Vec& y) const {
  if (y.size() != geom_.dim) return false;
  const int n = geom_.dim;
  double rho = y.head(n - 1).norm();
  double slack = 1e-12;
  return rho >= 0.25 * r_ * (1.0 - slack) && rho <= 2.0 * r_ * (1.0 + slack) &&
         std::abs(y[n - 1]) <= r_ * r_ * (1.0 + slack);
}

PhiChart::Profiles PhiChart::profiles_at(const Vec& yp) const {
  Profiles p;
  const int t = geom_.dim - 1;
  if (yp.norm() <= cutoff_) {
    p.h1 = geom_.upper->value(yp);
    p.h2 = geom_.lower->value(yp);
    p.d1 = geom_.upper->gradient(yp);
    p.d2 = geom_.lower->gradient(yp);
  } else {
    p.h1 = p.h2 = 0.0;
    p.d1 = p.d2 = Vec::Zero(t);
  }
  return p;
}

void PhiChart::mollified(const Profile& prof, const Vec& yp, double mu, double dmu, double& value, Vec& grad,
                         Mat& dgrad_dyp, Vec& dgrad_dyn) const {
  const int t = geom_.dim - 1;
  value = 0.0;
  grad = Vec::Zero(t);
  dgrad_dyp = Mat::Zero(t, t);
  Mat dgrad_dmu = Mat::Zero(t, 1);
  Vec z(t);
  for (std::size_t q = 0; q < rule_.weights.size(); ++q) {
    for (int d = 0; d < t; ++d) z[d] = rule_.points[q][d];
    Vec pt = yp - mu * z;
    if (pt.norm() > cutoff_) continue;
    double w = rule_.weights[q];
    value += w * prof.value(pt);
    grad += w * prof.gradient(pt);
    Mat h = prof.hessian(pt);
    dgrad_dyp += w * h;
    dgrad_dmu -= w * h * z;
  }
  dgrad_dyn = dmu * dgrad_dmu.col(0);
}

PhiPoint PhiChart::evaluate_unchecked(const Vec& y, Mat* jac) const {
  const int n = geom_.dim;
  const int t = n - 1;
  Vec yp = y.head(t);
  double yn = y[n - 1];
  double r2 = r_ * r_;
  double r4 = r2 * r2;
  double r6 = r4 * r2;

  PhiPoint out;
  out.mu = (r2 - yn) * (r2 + yn) / r_;
  double dmu = -2.0 * yn / r_;

  Profiles pr = profiles_at(yp);
  Mat dd1, dd2;
  Vec dn1, dn2;
  mollified(*geom_.upper, yp, out.mu, dmu, out.h1_moll, out.dh1_moll, dd1, dn1);
  mollified(*geom_.lower, yp, out.mu, dmu, out.h2_moll, out.dh2_moll, dd2, dn2);

  double w = geom_.epsilon + pr.h1 - pr.h2;
  Vec dw = pr.d1 - pr.d2;
  Vec s = out.dh1_moll + out.dh2_moll;
  Vec dif = out.dh1_moll - out.dh2_moll;
  out.theta = w * s / (8.0 * r6);
  out.xi = w * dif / (8.0 * r4);
  double cyl = (yn - r2) * (yn + r2);
  Vec lin = out.theta * yn + out.xi;
  out.g = cyl * lin;

  out.x.resize(n);
  out.x.head(t) = yp - out.g;
  out.x[n - 1] = 0.5 * ((yn / r2) * w + pr.h1 + pr.h2);

  if (jac) {
    Mat dtheta_dyp = (s * dw.transpose() + w * (dd1 + dd2)) / (8.0 * r6);
    Mat dxi_dyp = (dif * dw.transpose() + w * (dd1 - dd2)) / (8.0 * r4);
    Vec dtheta_dyn = w * (dn1 + dn2) / (8.0 * r6);
    Vec dxi_dyn = w * (dn1 - dn2) / (8.0 * r4);
    Mat dg_dyp = cyl * (dtheta_dyp * yn + dxi_dyp);
    Vec dg_dyn = 2.0 * yn * lin + cyl * (dtheta_dyn * yn + out.theta + dxi_dyn);
    Mat& J = *jac;
    J.resize(n, n);
    J.topLeftCorner(t, t) = Mat::Identity(t, t) - dg_dyp;
    J.topRightCorner(t, 1) = -dg_dyn;
    J.bottomLeftCorner(1, t) = (0.5 * ((yn / r2) * dw + pr.d1 + pr.d2)).transpose();
    J(n - 1, n - 1) = w / (2.0 * r2);
  }
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(out.x[i])) throw NumericalError("mollification quadrature produced a non-finite value");
  return out;
}

PhiPoint PhiChart::evaluate(const Vec& y) const {
  if (!in_domain(y)) throw DomainError("point outside the annular cylinder");
  return evaluate_unchecked(y, nullptr);
}

Mat PhiChart::jacobian(const Vec& y) const {
  if (!in_domain(y)) throw DomainError("point outside the annular cylinder");
  Mat j;
  evaluate_unchecked(y, &j);
  return j;
}

std::vector<Mat> PhiChart::second_derivatives(const Vec& y) const {
  if (!in_domain(y)) throw DomainError("point outside the annular cylinder");
  const int n = geom_.dim;
  std::vector<Mat> hess(n, Mat::Zero(n, n));
  // Fourth-order central differences of the analytic Jacobian. The map extends
  // smoothly past y_n = +-r^2 (the mollifier is even in its scale).
  for (int m = 0; m < n; ++m) {
    double h = (m == n - 1 ? 1e-3 * r_ * r_ : 1e-3 * r_);
    Mat jp1, jm1, jp2, jm2;
    Vec e = Vec::Zero(n);
    e[m] = h;
    evaluate_unchecked(y + e, &jp1);
    evaluate_unchecked(y - e, &jm1);
    evaluate_unchecked(y + 2.0 * e, &jp2);
    evaluate_unchecked(y - 2.0 * e, &jm2);
    Mat d = (8.0 * (jp1 - jm1) - (jp2 - jm2)) / (12.0 * h);
    // d(i, q) = d^2 x_i / dy_q dy_m
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < n; ++q) hess[i](q, m) = d(i, q);
  }
  for (auto& h : hess) h = 0.5 * (h + h.transpose());
  return hess;
}

Vec PhiChart::inverse(const Vec& x) const {
  const int n = geom_.dim;
  if (x.size() != n) throw InvalidArgument("annular chart expects a point of dimension " + std::to_string(n));
  Vec xp = x.head(n - 1);
  Profiles pr = profiles_at(xp);
  double w = geom_.epsilon + pr.h1 - pr.h2;
  Vec y(n);
  y.head(n - 1) = xp;
  y[n - 1] = r_ * r_ * (2.0 * x[n - 1] - pr.h1 - pr.h2) / w;
  double scale = std::max(x.norm(), r_ * r_);
  for (int it = 0; it < 50; ++it) {
    Mat j;
    PhiPoint pt = evaluate_unchecked(y, &j);
    Vec res = pt.x - x;
    double rn = res.norm();
    if (rn <= 1e-12 * scale) {
      if (!in_domain(y)) throw DomainError("preimage lies outside the annular cylinder");
      return y;
    }
    Vec step = j.partialPivLu().solve(res);
    double alpha = 1.0;
    while (alpha > 1e-6) {
      Vec trial = y - alpha * step;
      if ((evaluate_unchecked(trial, nullptr).x - x).norm() < rn) break;
      alpha *= 0.5;
    }
    y -= alpha * step;
  }
  throw NumericalError("Newton inversion of the annular chart did not converge");
}

nlohmann::json PhiBoundsReport::to_json() const {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& [kind, pt] : violations)
    v.push_back({{"kind", kind}, {"point", std::vector<double>(pt.data(), pt.data() + pt.size())}});
  return {{"r", r},
          {"samples", samples},
          {"boundary_samples", boundary_samples},
          {"C_jacobian", C_jacobian},
          {"C_btilde", C_btilde},
          {"C_btilde_scaled", C_btilde_scaled},
          {"coefficient_p", coefficient_p},
          {"residuals",
           {{"parallelism_max", parallelism_residual_max},
            {"symmetric_part_lambda_min", lambda_min},
            {"symmetric_part_lambda_max", lambda_max}}},
          {"violations", v}};
}

namespace {

// Sine of the angle between two vectors.
double sine_between(const Vec& a, const Vec& b) {
  Vec ua = a / a.norm();
  Vec ub = b / b.norm();
  return (ua - ua.dot(ub) * ub).norm();
}

}  // namespace

PhiBoundsReport verify_phi_bounds(const PhiChart& chart, std::size_t samples, std::uint64_t seed,
                                  double coefficient_p) {
  if (samples < 1000) throw InvalidArgument("verify_phi_bounds needs at least 1000 samples");
  if (!(coefficient_p > 1.0)) throw InvalidArgument("coefficient exponent p must exceed 1");
  const GapGeometry& geom = chart.geometry();
  const int n = geom.dim;
  const int t = n - 1;
  const double r = chart.scale();
  const double r2 = r * r;

  // Build the sample set: a tensor grid in (|y'|, y_n) that includes the faces
  // y_n = +-r^2, plus uniform random points.
  std::vector<Vec> pts;
  auto direction = [&](double angle) {
    Vec d = Vec::Zero(t);
    d[0] = std::cos(angle);
    if (t == 2) d[1] = std::sin(angle);
    return d;
  };
  std::size_t grid = samples / 2;
  std::size_t nrho = std::max<std::size_t>(8, static_cast<std::size_t>(std::sqrt(static_cast<double>(grid) / 2.0)));
  std::size_t nyn = std::max<std::size_t>(3, grid / (2 * nrho));
  for (std::size_t a = 0; a < 2; ++a) {
    double angle = a == 0 ? 0.0 : (t == 1 ? std::numbers::pi : 0.75 * std::numbers::pi);
    for (std::size_t i = 0; i < nrho; ++i) {
      double rho = 0.25 * r + (2.0 * r - 0.25 * r) * static_cast<double>(i) / static_cast<double>(nrho - 1);
      for (std::size_t k = 0; k < nyn; ++k) {
        double yn = -r2 + 2.0 * r2 * static_cast<double>(k) / static_cast<double>(nyn - 1);
        Vec y(n);
        y.head(t) = rho * direction(angle);
        y[n - 1] = yn;
        pts.push_back(y);
      }
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (pts.size() < samples) {
    double rho = 0.25 * r + 1.75 * r * unif(rng);
    double angle = 2.0 * std::numbers::pi * unif(rng);
    if (t == 1) angle = unif(rng) < 0.5 ? 0.0 : std::numbers::pi;
    Vec y(n);
    y.head(t) = rho * direction(angle);
    y[n - 1] = -r2 + 2.0 * r2 * unif(rng);
    pts.push_back(y);
  }

  PhiBoundsReport rep;
  rep.r = r;
  rep.samples = pts.size();
  rep.coefficient_p = coefficient_p;
  rep.lambda_min = std::numeric_limits<double>::infinity();
  rep.lambda_max = -std::numeric_limits<double>::infinity();
  Mat a = Mat::Identity(n, n);
  a(0, 0) += coefficient_p - 2.0;

  for (const Vec& y : pts) {
    Mat j = chart.jacobian(y);
    Mat sym = 0.5 * (j + j.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    double lmin = es.eigenvalues().minCoeff();
    double lmax = es.eigenvalues().maxCoeff();
    rep.lambda_min = std::min(rep.lambda_min, lmin);
    rep.lambda_max = std::max(rep.lambda_max, lmax);
    Eigen::FullPivLU<Mat> lu(j);
    if (!(lmin > 0.0) || !lu.isInvertible()) {
      rep.violations.emplace_back("singular_jacobian", y);
      continue;
    }
    Mat k = lu.inverse();
    auto hx = chart.second_derivatives(y);
    Vec c(n);
    for (int i = 0; i < n; ++i) c[i] = (a * k.transpose() * hx[i] * k).trace();
    Vec btilde = -k * c;
    rep.C_btilde = std::max(rep.C_btilde, btilde.norm());

    double yn = y[n - 1];
    if (std::abs(std::abs(yn) - r2) <= 1e-14 * r2) {
      ++rep.boundary_samples;
      Vec yp = y.head(t);
      Vec grad = yn > 0 ? geom.upper->gradient(yp) : geom.lower->gradient(yp);
      Vec target(n);
      target.head(t) = -grad;
      target[n - 1] = 1.0;
      double res = sine_between(j.col(n - 1), target);
      rep.parallelism_residual_max = std::max(rep.parallelism_residual_max, res);
      if (res > 1e-8) rep.violations.emplace_back("boundary_alignment", y);
    }
  }
  if (rep.lambda_min > 0.0)
    rep.C_jacobian = std::max(rep.lambda_max, 1.0 / rep.lambda_min);
  else
    rep.C_jacobian = std::numeric_limits<double>::infinity();
  rep.C_btilde_scaled = r * rep.C_btilde;
  return rep;
}

}  // namespace gaplab
