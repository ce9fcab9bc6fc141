#include "gaplab/geometry.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "gaplab/error.hpp"

namespace gaplab {

namespace {

std::string fmt_point(const Vec& xp) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < xp.size(); ++i) os << (i ? ", " : "") << xp[i];
  os << ")";
  return os.str();
}

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

void Profile::check_domain(const Vec& xp) const {
  if (xp.size() != tangential_dim())
    throw InvalidArgument("profile expects a point of dimension " + std::to_string(tangential_dim()));
  if (!(xp.norm() <= domain_radius()))
    throw DomainError("point " + fmt_point(xp) + " outside profile domain |x'| <= " +
                      std::to_string(domain_radius()));
}

QuadraticProfile::QuadraticProfile(Mat m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() < 1) throw InvalidArgument("quadratic profile needs a square matrix");
  if ((m_ - m_.transpose()).norm() > 1e-14 * (1.0 + m_.norm()))
    throw InvalidArgument("quadratic profile matrix must be symmetric");
}

double QuadraticProfile::value(const Vec& xp) const {
  check_domain(xp);
  return 0.5 * xp.dot(m_ * xp);
}

Vec QuadraticProfile::gradient(const Vec& xp) const {
  check_domain(xp);
  return m_ * xp;
}

Mat QuadraticProfile::hessian(const Vec& xp) const {
  check_domain(xp);
  return m_;
}

nlohmann::json QuadraticProfile::describe() const {
  std::vector<double> entries(m_.data(), m_.data() + m_.size());
  return {{"kind", "quadratic"}, {"matrix", entries}, {"size", m_.rows()}};
}

DiskProfile::DiskProfile(int tangential_dim, double sign) : dim_(tangential_dim), sign_(sign) {
  if (tangential_dim < 1) throw InvalidArgument("disk profile needs tangential dimension >= 1");
  if (sign != 1.0 && sign != -1.0) throw InvalidArgument("disk profile sign must be +1 or -1");
}

double DiskProfile::value(const Vec& xp) const {
  check_domain(xp);
  double s = xp.squaredNorm();
  // 1 - sqrt(1 - s) written without cancellation.
  return sign_ * s / (1.0 + std::sqrt(1.0 - s));
}

Vec DiskProfile::gradient(const Vec& xp) const {
  check_domain(xp);
  return sign_ * xp / std::sqrt(1.0 - xp.squaredNorm());
}

Mat DiskProfile::hessian(const Vec& xp) const {
  check_domain(xp);
  double q = 1.0 - xp.squaredNorm();
  double root = std::sqrt(q);
  Mat h = Mat::Identity(dim_, dim_) / root + xp * xp.transpose() / (q * root);
  return sign_ * h;
}

nlohmann::json DiskProfile::describe() const { return {{"kind", "disk"}, {"sign", sign_}}; }

RadialPolynomialProfile::RadialPolynomialProfile(int tangential_dim, std::vector<double> coeffs)
    : dim_(tangential_dim), coeffs_(std::move(coeffs)) {
  if (tangential_dim < 1) throw InvalidArgument("polynomial profile needs tangential dimension >= 1");
  if (coeffs_.empty()) throw InvalidArgument("polynomial profile needs at least one coefficient");
  for (double c : coeffs_)
    if (!std::isfinite(c)) throw InvalidArgument("polynomial profile coefficient is not finite");
}

double RadialPolynomialProfile::value(const Vec& xp) const {
  check_domain(xp);
  double s = xp.squaredNorm();
  double acc = 0.0;
  for (std::size_t k = coeffs_.size(); k-- > 0;) acc = acc * s + coeffs_[k];
  return acc * s;
}

Vec RadialPolynomialProfile::gradient(const Vec& xp) const {
  check_domain(xp);
  // d/dx sum c_k s^k = sum 2k c_k s^(k-1) x
  double s = xp.squaredNorm();
  double d = 0.0;
  for (std::size_t k = coeffs_.size(); k >= 1; --k) d = d * s + 2.0 * static_cast<double>(k) * coeffs_[k - 1];
  return d * xp;
}

Mat RadialPolynomialProfile::hessian(const Vec& xp) const {
  check_domain(xp);
  double s = xp.squaredNorm();
  double d1 = 0.0;  // sum 2k c_k s^(k-1)
  double d2 = 0.0;  // sum 4k(k-1) c_k s^(k-2)
  for (std::size_t k = coeffs_.size(); k >= 1; --k) {
    double kk = static_cast<double>(k);
    d1 = d1 * s + 2.0 * kk * coeffs_[k - 1];
    if (k >= 2) d2 = d2 * s + 4.0 * kk * (kk - 1.0) * coeffs_[k - 1];
  }
  return d1 * Mat::Identity(dim_, dim_) + d2 * xp * xp.transpose();
}

nlohmann::json RadialPolynomialProfile::describe() const {
  return {{"kind", "polynomial"}, {"coefficients", coeffs_}};
}

FunctionProfile::FunctionProfile(int tangential_dim, ValueFn f, GradFn g, HessFn h, std::string label,
                                 double radius)
    : dim_(tangential_dim),
      f_(std::move(f)),
      g_(std::move(g)),
      h_(std::move(h)),
      label_(std::move(label)),
      radius_(radius) {
  if (!f_ || !g_ || !h_) throw InvalidArgument("function profile needs value, gradient and Hessian evaluators");
}

double FunctionProfile::value(const Vec& xp) const {
  check_domain(xp);
  return f_(xp);
}

Vec FunctionProfile::gradient(const Vec& xp) const {
  check_domain(xp);
  return g_(xp);
}

Mat FunctionProfile::hessian(const Vec& xp) const {
  check_domain(xp);
  return h_(xp);
}

nlohmann::json FunctionProfile::describe() const { return {{"kind", "function"}, {"label", label_}}; }

GapGeometry::GapGeometry(int dim_, double epsilon_, std::shared_ptr<const Profile> upper_,
                         std::shared_ptr<const Profile> lower_, double c1_, double c2_,
                         std::optional<double> kappa1_, std::optional<double> kappa2_, std::string kind_)
    : dim(dim_),
      epsilon(epsilon_),
      upper(std::move(upper_)),
      lower(std::move(lower_)),
      c1(c1_),
      c2(c2_),
      kappa1(kappa1_),
      kappa2(kappa2_),
      kind(std::move(kind_)) {
  if (dim < 2) throw InvalidArgument("geometry dimension must be at least 2");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("epsilon must be positive");
  if (!upper || !lower) throw InvalidArgument("geometry needs both boundary profiles");
  if (upper->tangential_dim() != dim - 1 || lower->tangential_dim() != dim - 1)
    throw InvalidArgument("profile dimension does not match geometry dimension");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw InvalidArgument("c1 and c2 must be positive");
  if ((kappa1 && !(*kappa1 > 0.0)) || (kappa2 && !(*kappa2 > 0.0)))
    throw InvalidArgument("kappa constants must be positive");
  if (kappa1 && kappa2 && *kappa1 > *kappa2) throw InvalidArgument("kappa1 must not exceed kappa2");

  Vec origin = Vec::Zero(dim - 1);
  const double tol = 1e-12;
  if (std::abs(upper->value(origin)) > tol || std::abs(lower->value(origin)) > tol)
    throw InvariantError("profiles must vanish at the origin");
  if (upper->gradient(origin).norm() > tol || lower->gradient(origin).norm() > tol)
    throw InvariantError("profile gradients must vanish at the origin");
}

double GapGeometry::gap_width(const Vec& xp) const { return epsilon + upper->value(xp) - lower->value(xp); }

double GapGeometry::upper_boundary(const Vec& xp) const { return 0.5 * epsilon + upper->value(xp); }

double GapGeometry::lower_boundary(const Vec& xp) const { return -0.5 * epsilon + lower->value(xp); }

double GapGeometry::profile_radius() const { return std::min(upper->domain_radius(), lower->domain_radius()); }

GapGeometry GapGeometry::with_epsilon(double eps) const {
  if (kind == "disks") return make_disk_geometry(eps, dim);
  return GapGeometry(dim, eps, upper, lower, c1, c2, kappa1, kappa2, kind);
}

nlohmann::json GapGeometry::describe() const {
  nlohmann::json j{{"kind", kind},        {"dim", dim},
                   {"epsilon", epsilon},  {"upper", upper->describe()},
                   {"lower", lower->describe()}, {"c1", c1},
                   {"c2", c2}};
  j["kappa1"] = kappa1 ? nlohmann::json(*kappa1) : nlohmann::json(nullptr);
  j["kappa2"] = kappa2 ? nlohmann::json(*kappa2) : nlohmann::json(nullptr);
  return j;
}

GapGeometry make_disk_geometry(double epsilon, int dim) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("disk geometry needs 0 < epsilon < 1");
  if (dim < 2) throw InvalidArgument("disk geometry needs dimension >= 2");
  auto up = std::make_shared<DiskProfile>(dim - 1, 1.0);
  auto lo = std::make_shared<DiskProfile>(dim - 1, -1.0);
  // Declared constants hold on |x'| <= 1/2, the neck region used throughout.
  const double r = 0.5;
  double q = 1.0 - r * r;
  double kappa2 = std::pow(q, -1.5);
  double c2 = r * r / (1.0 + std::sqrt(q)) + r / std::sqrt(q) + kappa2;
  return GapGeometry(dim, epsilon, up, lo, 1.0, c2, 1.0, kappa2, "disks");
}

GapGeometry make_quadratic_geometry(double epsilon, const Mat& m_upper, const Mat& m_lower) {
  auto up = std::make_shared<QuadraticProfile>(m_upper);
  auto lo = std::make_shared<QuadraticProfile>(m_lower);
  int dim = static_cast<int>(m_upper.rows()) + 1;
  if (m_lower.rows() != m_upper.rows()) throw InvalidArgument("profile matrices differ in size");
  Eigen::SelfAdjointEigenSolver<Mat> eu(m_upper), el(-m_lower), ed(m_upper - m_lower);
  double lam_min_diff = ed.eigenvalues().minCoeff();
  double c1 = lam_min_diff > 0.0 ? 0.5 * lam_min_diff : 1.0;
  // sup |h| + sup |Dh| + sup |D^2 h| on the unit ball is 5/2 of the spectral norm.
  auto spectral = [](const Mat& m) { return Eigen::JacobiSVD<Mat>(m).singularValues()[0]; };
  double c2 = 2.5 * std::max(spectral(m_upper), spectral(m_lower));
  if (!(c2 > 0.0)) c2 = 1.0;
  double k1 = std::min(eu.eigenvalues().minCoeff(), el.eigenvalues().minCoeff());
  double k2 = std::max(eu.eigenvalues().maxCoeff(), el.eigenvalues().maxCoeff());
  std::optional<double> kappa1, kappa2;
  if (k1 > 0.0) {
    kappa1 = k1;
    kappa2 = k2;
  }
  return GapGeometry(dim, epsilon, up, lo, c1, c2, kappa1, kappa2, "quadratic");
}

GapGeometry make_polynomial_geometry(double epsilon, int dim, const std::vector<double>& upper,
                                     const std::vector<double>& lower) {
  auto up = std::make_shared<RadialPolynomialProfile>(dim - 1, upper);
  auto lo = std::make_shared<RadialPolynomialProfile>(dim - 1, lower);
  // Near the origin h1 - h2 ~ (c_up - c_lo)|x'|^2; the validator measures the rest.
  double lead = upper.front() - lower.front();
  double c1 = lead > 0.0 ? lead : 1.0;
  // Termwise bound of sup |h| + sup |Dh| + sup |D^2 h| on the unit ball.
  auto bound = [](const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t k = 1; k <= c.size(); ++k) s += std::abs(c[k - 1]) * (1.0 + 4.0 * static_cast<double>(k * k));
    return s;
  };
  double c2 = std::max({bound(upper), bound(lower), 1e-300});
  return GapGeometry(dim, epsilon, up, lo, c1, c2, std::nullopt, std::nullopt, "polynomial");
}

namespace {

std::shared_ptr<const Profile> profile_from_json(const nlohmann::json& j, int tdim) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "disk") return std::make_shared<DiskProfile>(tdim, j.at("sign").get<double>());
  if (kind == "polynomial")
    return std::make_shared<RadialPolynomialProfile>(tdim, j.at("coefficients").get<std::vector<double>>());
  if (kind == "quadratic") {
    auto entries = j.at("matrix").get<std::vector<double>>();
    int n = j.at("size").get<int>();
    if (n != tdim || entries.size() != static_cast<std::size_t>(n * n))
      throw InvalidArgument("quadratic profile matrix has the wrong size");
    return std::make_shared<QuadraticProfile>(Eigen::Map<Mat>(entries.data(), n, n));
  }
  throw InvalidArgument("profile kind '" + kind + "' cannot be restored");
}

}  // namespace

GapGeometry geometry_from_json(const nlohmann::json& j) {
  int dim = j.at("dim").get<int>();
  double eps = j.at("epsilon").get<double>();
  if (j.at("kind").get<std::string>() == "disks") return make_disk_geometry(eps, dim);
  std::optional<double> k1, k2;
  if (!j.at("kappa1").is_null()) k1 = j.at("kappa1").get<double>();
  if (!j.at("kappa2").is_null()) k2 = j.at("kappa2").get<double>();
  return GapGeometry(dim, eps, profile_from_json(j.at("upper"), dim - 1), profile_from_json(j.at("lower"), dim - 1),
                     j.at("c1").get<double>(), j.at("c2").get<double>(), k1, k2, j.at("kind").get<std::string>());
}

Vec inner_normal(const GapGeometry& geom, Side side, const Vec& xp) {
  Vec n(geom.dim);
  if (side == Side::Upper) {
    Vec g = geom.upper->gradient(xp);
    n.head(geom.dim - 1) = -g;
    n[geom.dim - 1] = 1.0;
  } else {
    Vec g = geom.lower->gradient(xp);
    n.head(geom.dim - 1) = g;
    n[geom.dim - 1] = -1.0;
  }
  return n / n.norm();
}

nlohmann::json HypothesisReport::to_json() const {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& e : violations)
    v.push_back({{"kind", e.kind}, {"point", vec_json(e.point)}, {"value", e.value}, {"bound", e.bound}});
  return {{"radius", radius},         {"samples", samples},       {"c1_est", c1_est},
          {"c2_est", c2_est},         {"kappa1_est", kappa1_est}, {"kappa2_est", kappa2_est},
          {"violations", v}};
}

namespace {

std::vector<Vec> hypothesis_samples(int tdim, std::size_t samples, double radius, std::uint64_t seed) {
  std::vector<Vec> pts;
  std::size_t grid = samples / 2;
  if (tdim == 1) {
    for (std::size_t i = 0; i < grid; ++i) {
      double t = -radius + 2.0 * radius * static_cast<double>(i) / static_cast<double>(grid - 1);
      pts.push_back(Vec::Constant(1, t));
    }
  } else {
    auto side = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(grid), 1.0 / tdim)));
    std::vector<std::size_t> idx(tdim, 0);
    while (true) {
      Vec p(tdim);
      for (int d = 0; d < tdim; ++d)
        p[d] = -radius + 2.0 * radius * static_cast<double>(idx[d]) / static_cast<double>(side - 1);
      if (p.norm() <= radius) pts.push_back(p);
      int d = 0;
      while (d < tdim && ++idx[d] == side) idx[d++] = 0;
      if (d == tdim) break;
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::size_t rest = samples > pts.size() ? samples - pts.size() : 0;
  for (std::size_t i = 0; i < rest; ++i) {
    Vec dir(tdim);
    for (int d = 0; d < tdim; ++d) dir[d] = normal(rng);
    double rr = radius * std::pow(unif(rng), 1.0 / tdim);
    pts.push_back(rr * dir / dir.norm());
  }
  return pts;
}

}  // namespace

HypothesisReport validate_hypotheses(const GapGeometry& geom, std::size_t samples, double radius,
                                     std::uint64_t seed) {
  if (samples < 100) throw InvalidArgument("validate_hypotheses needs at least 100 samples");
  if (!(radius > 0.0)) throw InvalidArgument("validation radius must be positive");
  radius = std::min(radius, geom.profile_radius());
  HypothesisReport rep;
  rep.radius = radius;
  const int tdim = geom.dim - 1;
  Vec origin = Vec::Zero(tdim);
  const double tol = 1e-12;
  for (auto [side, prof] : {std::pair<const char*, const Profile*>{"upper", geom.upper.get()},
                            std::pair<const char*, const Profile*>{"lower", geom.lower.get()}}) {
    double v0 = prof->value(origin);
    double g0 = prof->gradient(origin).norm();
    if (std::abs(v0) > tol) rep.violations.push_back({std::string("origin_value_") + side, origin, v0, 0.0});
    if (g0 > tol) rep.violations.push_back({std::string("origin_gradient_") + side, origin, g0, 0.0});
  }

  auto pts = hypothesis_samples(tdim, samples, radius, seed);
  rep.samples = pts.size();
  double c1_est = std::numeric_limits<double>::infinity();
  double sup_val = 0.0, sup_grad = 0.0, sup_hess = 0.0;
  double k1 = std::numeric_limits<double>::infinity();
  double k2 = -std::numeric_limits<double>::infinity();
  const double ktol = 1e-12;
  for (const Vec& p : pts) {
    double h1 = geom.upper->value(p);
    double h2 = geom.lower->value(p);
    double r2 = p.squaredNorm();
    if (r2 > 0.0) {
      double ratio = (h1 - h2) / r2;
      c1_est = std::min(c1_est, ratio);
      if (h1 - h2 < geom.c1 * r2 * (1.0 - 1e-12))
        rep.violations.push_back({"closeness", p, h1 - h2, geom.c1 * r2});
    }
    Mat hu = geom.upper->hessian(p);
    Mat hl = geom.lower->hessian(p);
    sup_val = std::max({sup_val, std::abs(h1), std::abs(h2)});
    sup_grad = std::max({sup_grad, geom.upper->gradient(p).norm(), geom.lower->gradient(p).norm()});
    Eigen::SelfAdjointEigenSolver<Mat> eu(hu), el(-hl);
    double spec_u = eu.eigenvalues().cwiseAbs().maxCoeff();
    double spec_l = el.eigenvalues().cwiseAbs().maxCoeff();
    sup_hess = std::max({sup_hess, spec_u, spec_l});
    double lo = std::min(eu.eigenvalues().minCoeff(), el.eigenvalues().minCoeff());
    double hi = std::max(eu.eigenvalues().maxCoeff(), el.eigenvalues().maxCoeff());
    k1 = std::min(k1, lo);
    k2 = std::max(k2, hi);
    if (geom.kappa1 && lo < *geom.kappa1 * (1.0 - ktol))
      rep.violations.push_back({"convexity_lower", p, lo, *geom.kappa1});
    if (geom.kappa2 && hi > *geom.kappa2 * (1.0 + ktol))
      rep.violations.push_back({"convexity_upper", p, hi, *geom.kappa2});
  }
  double norm = sup_val + sup_grad + sup_hess;
  if (norm > geom.c2 * (1.0 + 1e-12)) rep.violations.push_back({"regularity", origin, norm, geom.c2});
  rep.c1_est = std::isfinite(c1_est) ? c1_est : 0.0;
  rep.c2_est = norm;
  rep.kappa1_est = k1;
  rep.kappa2_est = k2;
  return rep;
}

Region Region::neck(const Vec& center, double r) {
  if (!(r > 0.0)) throw InvalidArgument("region radius must be positive");
  if (center.norm() + r > 1.0 + 1e-12) throw DomainError("region must lie within |x'| < 1");
  Region reg;
  reg.kind = Kind::Neck;
  reg.center = center;
  reg.outer = r;
  return reg;
}

Region Region::annulus(const Vec& center, double r_outer, double r_inner) {
  if (!(r_inner > 0.0) || !(r_outer > r_inner)) throw InvalidArgument("annulus needs 0 < inner < outer");
  if (center.norm() + r_outer > 1.0 + 1e-12) throw DomainError("region must lie within |x'| < 1");
  Region reg;
  reg.kind = Kind::Annulus;
  reg.center = center;
  reg.outer = r_outer;
  reg.inner = r_inner;
  return reg;
}

Region Region::full(int tangential_dim) {
  Region reg;
  reg.kind = Kind::Full;
  reg.center = Vec::Zero(tangential_dim);
  reg.outer = 1.0;
  return reg;
}

bool Region::contains(const Vec& xp) const {
  double d = (xp - center).norm();
  const double slack = 1e-12;
  switch (kind) {
    case Kind::Full:
      return d <= 1.0 + slack;
    case Kind::Neck:
      return d <= outer * (1.0 + slack);
    case Kind::Annulus:
      return d <= outer * (1.0 + slack) && d >= inner * (1.0 - slack);
  }
  return false;
}

}  // namespace gaplab
