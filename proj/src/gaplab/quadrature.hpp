#pragma once

#include <vector>

namespace gaplab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre rule with `order` points on [-1, 1].
QuadratureRule gauss_legendre(int order);

// Points z and weights w on the unit ball of R^d such that sum w_i f(z_i)
// approximates the integral of f against the normalized bump (1-|z|^2)^4.
struct BallRule {
  int dim = 1;
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
};

BallRule mollifier_rule(int dim, int order);

// Integral of |z|^(2j) (1-|z|^2)^k over the unit ball of R^d.
double ball_moment(int dim, int j, int k);

// Unnormalized bump (1-|z|^2)^4 on |z| < 1, zero outside.
double bump(double r2);

// Normalization constant making the bump a unit-mass density in R^d.
double bump_normalization(int dim);

}  // namespace gaplab
