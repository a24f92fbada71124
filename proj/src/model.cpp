#include "polyfwd/model.hpp"

#include <cmath>
#include <sstream>

namespace polyfwd {

namespace {

bool finite(double v) { return std::isfinite(v); }

std::string describe(const char* constraint, double value) {
  std::ostringstream os;
  os << constraint << " (got " << value << ")";
  return os.str();
}

std::string describe2(const char* constraint, double lhs, double rhs) {
  std::ostringstream os;
  os << constraint << " (" << lhs << " vs " << rhs << ")";
  return os.str();
}

double require_key(const FlatParams& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    throw std::invalid_argument("missing parameter key: " + key);
  }
  return it->second;
}

}  // namespace

Eigen::VectorXd basis_eval(const Eigen::VectorXd& x) {
  if (x.size() == 2) {
    const double z = x[0], y = x[1];
    Eigen::VectorXd h(kBasisDim2);
    h << 1.0, z, y, z * z, y * z, y * y;
    return h;
  }
  if (x.size() == 3) {
    const double z = x[0], y = x[1], r = x[2];
    Eigen::VectorXd h(kBasisDim3);
    h << 1.0, z, y, r, z * z, y * z, y * y;
    return h;
  }
  throw std::invalid_argument("basis_eval: state must have length 2 or 3");
}

Eigen::MatrixXd generator_matrix(const TwoFactorParams& p, Measure measure,
                                 const MarketPriceOfRisk& mpr) {
  // Column j holds the basis coordinates of the generator applied to basis
  // monomial j, so column assembly below reads off drift and second-order
  // terms monomial by monomial.
  const double a11 = p.sigma_z * p.sigma_z;
  const double a12 = p.rho * p.sigma_y * p.sigma_z;
  const double a22 = p.sigma_y * p.sigma_y;

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(kBasisDim2, kBasisDim2);
  using namespace basis2;
  if (measure == Measure::Q) {
    // drift (-kappa_Z z, kappa_Y (z - y))
    g(z, z) = -p.kappa_z;
    g(z, y) = p.kappa_y;
    g(y, y) = -p.kappa_y;
    g(one, zz) = a11;
    g(zz, zz) = -2.0 * p.kappa_z;
    g(one, yz) = a12;
    g(zz, yz) = p.kappa_y;
    g(yz, yz) = -(p.kappa_z + p.kappa_y);
    g(one, yy) = a22;
    g(yz, yy) = 2.0 * p.kappa_y;
    g(yy, yy) = -2.0 * p.kappa_y;
  } else {
    // drift ((lambda_Z - kappa_Z) z + gamma_Z,
    //        kappa_Y z + (lambda_Y - kappa_Y) y + gamma_Y)
    const double mz = mpr.lambda_z - p.kappa_z;
    const double my = mpr.lambda_y - p.kappa_y;
    g(one, z) = mpr.gamma_z;
    g(z, z) = mz;
    g(one, y) = mpr.gamma_y;
    g(z, y) = p.kappa_y;
    g(y, y) = my;
    g(one, zz) = a11;
    g(z, zz) = 2.0 * mpr.gamma_z;
    g(zz, zz) = 2.0 * mz;
    g(one, yz) = a12;
    g(z, yz) = mpr.gamma_y;
    g(y, yz) = mpr.gamma_z;
    g(zz, yz) = p.kappa_y;
    g(yz, yz) = mz + my;
    g(one, yy) = a22;
    g(y, yy) = 2.0 * mpr.gamma_y;
    g(yz, yy) = 2.0 * p.kappa_y;
    g(yy, yy) = 2.0 * my;
  }
  return g;
}

Eigen::MatrixXd generator_matrix(const ThreeFactorParams& p, Measure measure) {
  if (measure != Measure::Q) {
    throw unsupported_measure_error(
        "generator_matrix: three-factor dynamics are defined under Q only");
  }
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(kBasisDim3, kBasisDim3);
  using namespace basis3;
  // drift (-kappa_Z z, kappa_Y (z - y), kappa_R (theta_R - r));
  // cross variation d<Z,Y> = r sigma_Y sigma_Z dt feeds the yz column.
  g(z, z) = -p.kappa_z;
  g(z, y) = p.kappa_y;
  g(y, y) = -p.kappa_y;
  g(one, r) = p.kappa_r * p.theta_r;
  g(r, r) = -p.kappa_r;
  g(one, zz) = p.sigma_z * p.sigma_z;
  g(zz, zz) = -2.0 * p.kappa_z;
  g(r, yz) = p.sigma_y * p.sigma_z;
  g(zz, yz) = p.kappa_y;
  g(yz, yz) = -(p.kappa_z + p.kappa_y);
  g(one, yy) = p.sigma_y * p.sigma_y;
  g(yz, yy) = 2.0 * p.kappa_y;
  g(yy, yy) = -2.0 * p.kappa_y;
  return g;
}

Eigen::VectorXd spot_coordinates(const TwoFactorParams& p) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kBasisDim2);
  v[basis2::one] = p.c;
  v[basis2::zz] = p.beta;
  v[basis2::yy] = p.alpha;
  return v;
}

Eigen::VectorXd spot_coordinates(const ThreeFactorParams& p) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kBasisDim3);
  v[basis3::one] = p.c;
  v[basis3::zz] = p.beta;
  v[basis3::yy] = p.alpha;
  return v;
}

double spot_price(const TwoFactorParams& p, const Eigen::Vector2d& x) {
  return spot_coordinates(p).dot(basis_eval(x));
}

double spot_price(const ThreeFactorParams& p, const Eigen::Vector3d& x) {
  return spot_coordinates(p).dot(basis_eval(x));
}

Eigen::MatrixXd diffusion_matrix(const TwoFactorParams& p) {
  Eigen::Matrix2d a;
  const double a12 = p.rho * p.sigma_y * p.sigma_z;
  a << p.sigma_z * p.sigma_z, a12, a12, p.sigma_y * p.sigma_y;
  return a;
}

Eigen::MatrixXd diffusion_matrix(const ThreeFactorParams& p, const Eigen::Vector3d& x) {
  const double r = x[2];
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  a(0, 0) = p.sigma_z * p.sigma_z;
  a(0, 1) = a(1, 0) = r * p.sigma_y * p.sigma_z;
  a(1, 1) = p.sigma_y * p.sigma_y;
  a(2, 2) = p.sigma_r * p.sigma_r * (1.0 - r * r);
  return a;
}

namespace {

// Shared quadratic-monomial block of Sigma(x): covariation of
// (z, y, z^2, yz, y^2) given the 2x2 state covariation a. Both specifications
// reduce to this with their own a12; the three-factor Jacobi row is appended
// by the caller.
void fill_quadratic_block(Eigen::MatrixXd& s, int z_, int y_, int zz_, int yz_, int yy_,
                          double z, double y, double a11, double a12, double a22) {
  s(z_, z_) = a11;
  s(z_, y_) = s(y_, z_) = a12;
  s(y_, y_) = a22;

  s(z_, zz_) = s(zz_, z_) = 2.0 * z * a11;
  s(z_, yz_) = s(yz_, z_) = y * a11 + z * a12;
  s(z_, yy_) = s(yy_, z_) = 2.0 * y * a12;

  s(y_, zz_) = s(zz_, y_) = 2.0 * z * a12;
  s(y_, yz_) = s(yz_, y_) = y * a12 + z * a22;
  s(y_, yy_) = s(yy_, y_) = 2.0 * y * a22;

  s(zz_, zz_) = 4.0 * z * z * a11;
  s(zz_, yz_) = s(yz_, zz_) = 2.0 * z * (y * a11 + z * a12);
  s(zz_, yy_) = s(yy_, zz_) = 4.0 * y * z * a12;

  s(yz_, yz_) = y * y * a11 + 2.0 * y * z * a12 + z * z * a22;
  s(yz_, yy_) = s(yy_, yz_) = 2.0 * y * (y * a12 + z * a22);

  s(yy_, yy_) = 4.0 * y * y * a22;
}

}  // namespace

Eigen::MatrixXd sigma_h(const TwoFactorParams& p, const Eigen::Vector2d& x) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(kBasisDim2, kBasisDim2);
  using namespace basis2;
  fill_quadratic_block(s, z, y, zz, yz, yy, x[0], x[1], p.sigma_z * p.sigma_z,
                       p.rho * p.sigma_y * p.sigma_z, p.sigma_y * p.sigma_y);
  return s;
}

Eigen::MatrixXd sigma_h(const ThreeFactorParams& p, const Eigen::Vector3d& x) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(kBasisDim3, kBasisDim3);
  using namespace basis3;
  const double rv = x[2];
  fill_quadratic_block(s, z, y, zz, yz, yy, x[0], x[1], p.sigma_z * p.sigma_z,
                       rv * p.sigma_y * p.sigma_z, p.sigma_y * p.sigma_y);
  // The Jacobi factor is driven by an independent Brownian motion, so its row
  // only carries its own variance.
  s(r, r) = p.sigma_r * p.sigma_r * (1.0 - rv * rv);
  return s;
}

std::vector<std::string> validate_params(const TwoFactorParams& p,
                                         bool calibration_constraints) {
  std::vector<std::string> v;
  for (double f : {p.c, p.alpha, p.beta, p.kappa_z, p.kappa_y, p.sigma_z, p.sigma_y,
                   p.rho, p.z0, p.y0}) {
    if (!finite(f)) {
      v.push_back("all parameters must be finite");
      break;
    }
  }
  if (!(p.c >= 0.0)) v.push_back(describe("c >= 0", p.c));
  if (!(p.alpha >= 0.0)) v.push_back(describe("alpha >= 0", p.alpha));
  if (!(p.beta >= 0.0)) v.push_back(describe("beta >= 0", p.beta));
  if (!(p.sigma_z > 0.0)) v.push_back(describe("sigma_Z > 0", p.sigma_z));
  if (!(p.sigma_y > 0.0)) v.push_back(describe("sigma_Y > 0", p.sigma_y));
  if (!(p.rho > -1.0 && p.rho < 1.0)) v.push_back(describe("rho in (-1,1)", p.rho));
  if (calibration_constraints) {
    if (!(p.kappa_z >= 0.0)) v.push_back(describe("kappa_Z >= 0", p.kappa_z));
    if (!(p.kappa_y >= p.kappa_z))
      v.push_back(describe2("kappa_Y >= kappa_Z", p.kappa_y, p.kappa_z));
    if (!(p.kappa_y <= 1.0)) v.push_back(describe("kappa_Y <= 1", p.kappa_y));
  }
  return v;
}

std::vector<std::string> validate_params(const ThreeFactorParams& p) {
  std::vector<std::string> v;
  for (double f : {p.c, p.alpha, p.beta, p.kappa_z, p.kappa_y, p.kappa_r, p.theta_r,
                   p.sigma_z, p.sigma_y, p.sigma_r, p.z0, p.y0, p.r0}) {
    if (!finite(f)) {
      v.push_back("all parameters must be finite");
      break;
    }
  }
  if (!(p.c >= 0.0)) v.push_back(describe("c >= 0", p.c));
  if (!(p.alpha >= 0.0)) v.push_back(describe("alpha >= 0", p.alpha));
  if (!(p.beta >= 0.0)) v.push_back(describe("beta >= 0", p.beta));
  if (!(p.sigma_z > 0.0)) v.push_back(describe("sigma_Z > 0", p.sigma_z));
  if (!(p.sigma_y > 0.0)) v.push_back(describe("sigma_Y > 0", p.sigma_y));
  if (!(p.kappa_r > 0.0)) v.push_back(describe("kappa_R > 0", p.kappa_r));
  if (!(p.sigma_r > 0.0)) v.push_back(describe("sigma_R > 0", p.sigma_r));
  if (!(p.theta_r > -1.0 && p.theta_r < 1.0))
    v.push_back(describe("theta_R in (-1,1)", p.theta_r));
  if (!(p.r0 > -1.0 && p.r0 < 1.0)) v.push_back(describe("r0 in (-1,1)", p.r0));
  // Boundary non-attainment of the Jacobi factor.
  const double s2 = p.sigma_r * p.sigma_r;
  if (!(p.kappa_r * (1.0 + p.theta_r) >= s2))
    v.push_back(describe2("kappa_R (1 + theta_R) >= sigma_R^2",
                          p.kappa_r * (1.0 + p.theta_r), s2));
  if (!(p.kappa_r * (1.0 - p.theta_r) >= s2))
    v.push_back(describe2("kappa_R (1 - theta_R) >= sigma_R^2",
                          p.kappa_r * (1.0 - p.theta_r), s2));
  return v;
}

std::vector<std::string> validate_params(const MarketPriceOfRisk& mpr) {
  std::vector<std::string> v;
  if (!finite(mpr.lambda_z) || !finite(mpr.lambda_y) || !finite(mpr.gamma_z) ||
      !finite(mpr.gamma_y)) {
    v.push_back("market price of risk parameters must be finite");
  }
  return v;
}

FlatParams to_flat(const TwoFactorParams& p) {
  return {{"c", p.c},           {"alpha", p.alpha},     {"beta", p.beta},
          {"kappa_Z", p.kappa_z}, {"kappa_Y", p.kappa_y}, {"sigma_Z", p.sigma_z},
          {"sigma_Y", p.sigma_y}, {"rho", p.rho},         {"z0", p.z0},
          {"y0", p.y0}};
}

FlatParams to_flat(const TwoFactorParams& p, const MarketPriceOfRisk& mpr) {
  FlatParams kv = to_flat(p);
  kv["lambda_Z"] = mpr.lambda_z;
  kv["lambda_Y"] = mpr.lambda_y;
  kv["gamma_Z"] = mpr.gamma_z;
  kv["gamma_Y"] = mpr.gamma_y;
  return kv;
}

FlatParams to_flat(const ThreeFactorParams& p) {
  return {{"c", p.c},             {"alpha", p.alpha},     {"beta", p.beta},
          {"kappa_Z", p.kappa_z}, {"kappa_Y", p.kappa_y}, {"kappa_R", p.kappa_r},
          {"theta_R", p.theta_r}, {"sigma_Z", p.sigma_z}, {"sigma_Y", p.sigma_y},
          {"sigma_R", p.sigma_r}, {"z0", p.z0},           {"y0", p.y0},
          {"r0", p.r0}};
}

TwoFactorParams two_factor_from_flat(const FlatParams& kv) {
  TwoFactorParams p;
  p.c = require_key(kv, "c");
  p.alpha = require_key(kv, "alpha");
  p.beta = require_key(kv, "beta");
  p.kappa_z = require_key(kv, "kappa_Z");
  p.kappa_y = require_key(kv, "kappa_Y");
  p.sigma_z = require_key(kv, "sigma_Z");
  p.sigma_y = require_key(kv, "sigma_Y");
  p.rho = require_key(kv, "rho");
  p.z0 = require_key(kv, "z0");
  p.y0 = require_key(kv, "y0");
  return p;
}

ThreeFactorParams three_factor_from_flat(const FlatParams& kv) {
  ThreeFactorParams p;
  p.c = require_key(kv, "c");
  p.alpha = require_key(kv, "alpha");
  p.beta = require_key(kv, "beta");
  p.kappa_z = require_key(kv, "kappa_Z");
  p.kappa_y = require_key(kv, "kappa_Y");
  p.kappa_r = require_key(kv, "kappa_R");
  p.theta_r = require_key(kv, "theta_R");
  p.sigma_z = require_key(kv, "sigma_Z");
  p.sigma_y = require_key(kv, "sigma_Y");
  p.sigma_r = require_key(kv, "sigma_R");
  p.z0 = require_key(kv, "z0");
  p.y0 = require_key(kv, "y0");
  p.r0 = require_key(kv, "r0");
  return p;
}

MarketPriceOfRisk mpr_from_flat(const FlatParams& kv) {
  const char* keys[] = {"lambda_Z", "lambda_Y", "gamma_Z", "gamma_Y"};
  int present = 0;
  for (const char* k : keys) present += kv.count(k) ? 1 : 0;
  if (present == 0) return {};
  if (present != 4) {
    throw std::invalid_argument(
        "market price of risk keys must be given all together or not at all "
        "(lambda_Z, lambda_Y, gamma_Z, gamma_Y)");
  }
  MarketPriceOfRisk mpr;
  mpr.lambda_z = kv.at("lambda_Z");
  mpr.lambda_y = kv.at("lambda_Y");
  mpr.gamma_z = kv.at("gamma_Z");
  mpr.gamma_y = kv.at("gamma_Y");
  return mpr;
}

}  // namespace polyfwd
