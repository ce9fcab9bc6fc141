#include "gaplab/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "gaplab/error.hpp"

namespace gaplab {

QuadratureRule gauss_legendre(int order) {
  if (order < 1 || order > 512) throw InvalidArgument("quadrature order must lie in [1, 512]");
  const int n = order;
  // P_n(x) and P_n'(x) by the three-term recurrence.
  auto legendre = [n](double x) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    double dp = n * (p0 - x * p1) / (1.0 - x * x);
    return std::pair<double, double>{p1, dp};
  };
  QuadratureRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      auto [p, dp] = legendre(x);
      double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double dp = legendre(x).second;
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

double ball_moment(int dim, int j, int k) {
  double half = 0.5 * dim;
  double log_val = half * std::log(std::numbers::pi) + std::lgamma(j + half) + std::lgamma(k + 1.0) -
                   std::lgamma(half) - std::lgamma(j + k + 1.0 + half);
  return std::exp(log_val);
}

double bump(double r2) {
  if (r2 >= 1.0) return 0.0;
  double s = 1.0 - r2;
  double s2 = s * s;
  return s2 * s2;
}

double bump_normalization(int dim) { return 1.0 / ball_moment(dim, 0, 4); }

BallRule mollifier_rule(int dim, int order) {
  BallRule rule;
  rule.dim = dim;
  const double c = bump_normalization(dim);
  if (dim == 1) {
    auto gl = gauss_legendre(order);
    for (int i = 0; i < order; ++i) {
      rule.points.push_back({gl.nodes[i]});
      rule.weights.push_back(gl.weights[i] * c * bump(gl.nodes[i] * gl.nodes[i]));
    }
  } else if (dim == 2) {
    // Polar product rule: Gauss-Legendre in the radius, equispaced angles.
    auto gl = gauss_legendre(order);
    const int nang = 2 * order;
    for (int i = 0; i < order; ++i) {
      double rho = 0.5 * (gl.nodes[i] + 1.0);
      double wr = 0.5 * gl.weights[i] * rho * c * bump(rho * rho);
      for (int a = 0; a < nang; ++a) {
        double th = 2.0 * std::numbers::pi * a / nang;
        rule.points.push_back({rho * std::cos(th), rho * std::sin(th)});
        rule.weights.push_back(wr * 2.0 * std::numbers::pi / nang);
      }
    }
  } else {
    throw InvalidArgument("mollifier quadrature implemented for tangential dimension 1 or 2");
  }
  return rule;
}

}  // namespace gaplab
