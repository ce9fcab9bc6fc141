#include <doctest.h>

#include <cmath>
#include <random>

#include "gaplab/error.hpp"
#include "gaplab/transforms.hpp"
#include "support/oracles.hpp"

using namespace gaplab;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

GapGeometry flat_geometry(double eps, int dim = 2) {
  auto zero = std::make_shared<FunctionProfile>(
      dim - 1, [](const Vec&) { return 0.0; }, [](const Vec& x) { return Vec(Vec::Zero(x.size())); },
      [](const Vec& x) { return Mat(Mat::Zero(x.size(), x.size())); }, "flat");
  return GapGeometry(dim, eps, zero, zero, 1.0, 1.0, std::nullopt, std::nullopt, "flat");
}

// Random point strictly inside the gap above |x'| <= r.
Vec random_gap_point(const GapGeometry& g, std::mt19937_64& rng, double r) {
  Vec xp = oracle::random_vector(rng, g.dim - 1, -r, r);
  while (xp.norm() > r) xp *= 0.5;
  std::uniform_real_distribution<double> t(0.0, 1.0);
  double lo = g.lower_boundary(xp), hi = g.upper_boundary(xp);
  Vec x(g.dim);
  x << xp, lo + t(rng) * (hi - lo);
  return x;
}

}  // namespace

TEST_CASE("neck chart maps the midline of symmetric disks to the midline") {
  NeckChart c(make_disk_geometry(0.01), Vec::Zero(1), 0.5);
  CHECK(std::abs(c.forward(v2(0.1, 0.0))[1]) < 1e-18);
}

TEST_CASE("neck chart examples on disks") {
  NeckChart c(make_disk_geometry(0.01), Vec::Zero(1), 0.5);
  Vec z = c.forward(v2(0.1, 0.002));
  CHECK(z[0] == doctest::Approx(0.1));
  // 0.01 * (0.002 + 0.01001256) / 0.02002512 - 0.005, frozen from the long-double gap width.
  const long double w = oracle::disk_gap_width(0.01L, 0.1L);
  const double expect = static_cast<double>(0.01L * ((0.002L + w / 2.0L) / w - 0.5L));
  CHECK(expect == doctest::Approx(9.98746e-4).epsilon(1e-6));
  CHECK(z[1] == doctest::Approx(expect).epsilon(1e-12));

  auto jac = c.jacobian(z);
  CHECK(jac.det == doctest::Approx(static_cast<double>(0.01L / w)).epsilon(1e-12));
  CHECK(jac.det == doctest::Approx(0.499373).epsilon(1e-6));
}

TEST_CASE("neck chart maps the lower boundary to the slab bottom") {
  GapGeometry g = make_disk_geometry(0.01);
  NeckChart c(g, Vec::Zero(1), 0.5);
  for (double x1 : {-0.4, -0.1, 0.0, 0.25}) {
    Vec x = v2(x1, g.lower_boundary(Vec::Constant(1, x1)));
    CHECK(c.forward(x)[1] == doctest::Approx(-0.5 * c.slab_height()).epsilon(1e-12));
  }
}

TEST_CASE("neck chart Jacobian is the identity for flat profiles") {
  NeckChart c(flat_geometry(0.05), Vec::Zero(1), 0.5);
  auto j = c.jacobian(v2(0.3, 0.01));
  CHECK((j.B - Mat::Identity(2, 2)).norm() < 1e-15);
  CHECK(j.det == doctest::Approx(1.0));
}

TEST_CASE("property: neck Jacobian determinant is positive and independent of the transverse coordinate") {
  std::mt19937_64 rng(2);
  for (const GapGeometry& g : {make_disk_geometry(1e-3), make_disk_geometry(1e-2, 3)}) {
    Vec base = Vec::Zero(g.dim - 1);
    base[0] = 0.05;
    NeckChart c(g, base, 0.4);
    for (int i = 0; i < 100; ++i) {
      Vec z = c.forward(random_gap_point(g, rng, 0.3));
      Vec z2 = z;
      z2[g.dim - 1] = -0.3 * z[g.dim - 1];
      double d1 = c.jacobian(z).det, d2 = c.jacobian(z2).det;
      CHECK(d1 > 0.0);
      CHECK(d1 == d2);
      CHECK(c.jacobian(z).B.determinant() == doctest::Approx(d1).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: neck chart round trip") {
  std::mt19937_64 rng(4);
  for (const GapGeometry& g : {make_disk_geometry(1e-3), make_disk_geometry(1e-4, 3)}) {
    NeckChart c(g, Vec::Zero(g.dim - 1), 0.5);
    for (int i = 0; i < 200; ++i) {
      Vec x = random_gap_point(g, rng, 0.45);
      Vec back = c.inverse(c.forward(x));
      CHECK((back - x).norm() <= 1e-10 * x.norm() + 1e-16);
    }
  }
}

TEST_CASE("neck chart rejects points outside the gap") {
  NeckChart c(make_disk_geometry(0.01), Vec::Zero(1), 0.5);
  CHECK_THROWS_AS(c.forward(v2(0.0, 0.2)), DomainError);
  CHECK_THROWS_AS(c.forward(v2(0.6, 0.0)), DomainError);
}

TEST_CASE("annular chart vanishes displacement on the lateral faces") {
  PhiChart c(make_disk_geometry(1e-3), 0.1);
  const double r2 = c.scale() * c.scale();
  for (double y1 : {0.03, 0.1, -0.15, 0.19}) {
    for (double s : {1.0, -1.0}) {
      PhiPoint p = c.evaluate(v2(y1, s * r2));
      CHECK(p.g.norm() == 0.0);
      CHECK(p.x[0] == y1);
      CHECK(p.h1_moll == doctest::Approx(1.0 - std::sqrt(1.0 - y1 * y1)).epsilon(1e-14));
    }
  }
}

TEST_CASE("annular chart upper face lands on the upper boundary") {
  GapGeometry g = make_disk_geometry(1e-3);
  PhiChart c(g, 0.1);
  for (double y1 : {0.05, -0.12}) {
    Vec x = c.forward(v2(y1, 0.01));
    CHECK(x[1] == doctest::Approx(g.upper_boundary(Vec::Constant(1, y1))).epsilon(1e-13));
  }
}

TEST_CASE("annular chart on flat profiles is a transverse scaling") {
  const double eps = 1e-3, r = 0.1;
  PhiChart c(flat_geometry(eps), r);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Vec y = v2(0.05 + 0.1 * (u(rng) + 1.0) / 2.0, r * r * u(rng));
    PhiPoint p = c.evaluate(y);
    CHECK(p.theta.norm() == 0.0);
    CHECK(p.xi.norm() == 0.0);
    CHECK(p.x[0] == doctest::Approx(y[0]).epsilon(1e-15));
    CHECK(p.x[1] == doctest::Approx(eps * y[1] / (2.0 * r * r)).epsilon(1e-13));
  }
}

TEST_CASE("annular chart mollification agrees with a denser quadrature") {
  GapGeometry g = make_disk_geometry(1e-3);
  PhiChart base(g, 0.1, 16), dense(g, 0.1, 48);
  for (const Vec& y : {v2(0.05, 0.0), v2(0.12, 0.004), v2(-0.08, -0.007)}) {
    CHECK((base.forward(y) - dense.forward(y)).norm() < 1e-8);
  }
}

TEST_CASE("property: annular chart round trip") {
  std::mt19937_64 rng(8);
  GapGeometry g = make_disk_geometry(1e-3);
  PhiChart c(g, 0.1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int done = 0;
  while (done < 100) {
    Vec y = v2(0.2 * u(rng), 0.01 * u(rng));
    if (!c.in_domain(y)) continue;
    Vec x = c.forward(y);
    CHECK((c.forward(c.inverse(x)) - x).norm() <= 1e-10 * x.norm());
    CHECK((c.inverse(x) - y).norm() <= 1e-10 * y.norm());
    ++done;
  }
}

TEST_CASE("property: mollified profiles converge as the transverse coordinate reaches the faces") {
  GapGeometry g = make_disk_geometry(1e-3);
  PhiChart c(g, 0.1);
  const double exact = 1.0 - std::sqrt(1.0 - 0.1 * 0.1);
  double prev = 1.0;
  for (double frac : {0.0, 0.5, 0.9, 0.99, 0.999}) {
    double err = std::abs(c.evaluate(v2(0.1, frac * 0.01)).h1_moll - exact);
    CHECK(err <= prev);
    prev = err;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("annular chart Jacobian matches finite differences") {
  PhiChart c(make_disk_geometry(1e-3), 0.1);
  Vec y = v2(0.07, 0.003);
  Mat j = c.jacobian(y);
  for (int k = 0; k < 2; ++k) {
    auto comp = [&](const Vec& z) { return c.forward(z)[k]; };
    Vec fd = oracle::fd_gradient(comp, y, 1e-5);
    CHECK((j.row(k).transpose() - fd).norm() < 1e-7 * (1.0 + fd.norm()));
  }
}

TEST_CASE("verify_phi_bounds on flat profiles reproduces the diagonal bound") {
  const double eps = 1e-3, r = 0.1;
  PhiChart c(flat_geometry(eps), r);
  PhiBoundsReport rep = verify_phi_bounds(c, 1000, 0);
  const double expect = std::max({1.0, 2.0 * r * r / eps, eps / (2.0 * r * r)});
  CHECK(rep.C_jacobian == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rep.C_btilde < 1e-9);
  CHECK(rep.parallelism_residual_max < 1e-14);
  CHECK(rep.violations.empty());
}

TEST_CASE("verify_phi_bounds on disks: Neumann alignment and finite bounds") {
  PhiChart c(make_disk_geometry(1e-4), 0.1);
  PhiBoundsReport rep = verify_phi_bounds(c, 1000, 0);
  CHECK(std::isfinite(rep.C_jacobian));
  CHECK(rep.lambda_min > 0.0);
  CHECK(rep.parallelism_residual_max < 1e-8);
  CHECK(rep.C_btilde_scaled == doctest::Approx(0.1 * rep.C_btilde));
  CHECK(rep.violations.empty());
}

TEST_CASE("verify_phi_bounds is deterministic in the seed") {
  PhiChart c(make_disk_geometry(1e-4), 0.1);
  CHECK(verify_phi_bounds(c, 1000, 3).to_json() == verify_phi_bounds(c, 1000, 3).to_json());
  CHECK_THROWS_AS(verify_phi_bounds(c, 999, 0), InvalidArgument);
}

TEST_CASE("annular chart argument checks") {
  GapGeometry g = make_disk_geometry(1e-2);
  CHECK_THROWS_AS(PhiChart(g, 0.05), InvalidArgument);
  PhiChart c(g, 0.2);
  CHECK_THROWS_AS(c.evaluate(v2(0.01, 0.0)), DomainError);
  CHECK_THROWS_AS(c.evaluate(v2(0.1, 0.05)), DomainError);
}
