#include "polyfwd/pricing.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "polyfwd/errors.hpp"
#include "polyfwd/linalg.hpp"

namespace polyfwd {

namespace {

void check_time_order(double lo, double hi, const char* what) {
  if (!(lo <= hi)) {
    throw std::invalid_argument(std::string(what) + ": time arguments out of order");
  }
}

void check_leg(double t, double t1, double t2, const char* what) {
  if (!(t <= t1 && t1 < t2)) {
    throw std::invalid_argument(std::string(what) +
                                ": delivery period must satisfy t <= T1 < T2");
  }
}

void check_coeff_dim(const Eigen::VectorXd& coeffs, int dim, const char* what) {
  if (coeffs.size() != dim) {
    throw std::invalid_argument(std::string(what) +
                                ": coefficient vector has wrong basis dimension");
  }
}

double moment_impl(const Eigen::MatrixXd& g, const Eigen::VectorXd& h,
                   const Eigen::VectorXd& coeffs, double tau) {
  return h.dot(expm(g, tau) * coeffs);
}

// Average of the forward curve weight over one delivery of length `len`,
// maturing `shift` years ahead: exp(shift G) (integral_0^len exp(uG) du) p_S / len.
Eigen::VectorXd period_weight(const Eigen::MatrixXd& g, const Eigen::VectorXd& p_s,
                              double shift, double len) {
  const Eigen::VectorXd w = expm_and_integral(g, len).integral * p_s;
  return (expm(g, shift) * w) / len;
}

// RK4 integration of the quadratic moment ODE
//   phi' = psi . kappa_theta + a0(pi)
//   psi' = -kappa^T psi + 2 pi kappa_theta + a1(pi)
//   pi'  = -pi kappa - kappa^T pi + a2(pi)
// from (q0, q_lin, q_mat) over [0, tau], returning phi + psi.x + x'pi x.
struct TraceDecomposition {
  std::function<double(const Eigen::MatrixXd&)> a0;
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> a1;
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> a2;
};

double moment_ode_impl(const Eigen::MatrixXd& kappa, const Eigen::VectorXd& kappa_theta,
                       const TraceDecomposition& tr, const QuadraticPolynomial& q,
                       double tau, const Eigen::VectorXd& x) {
  const auto d = kappa.rows();
  if (q.q_lin.size() != d || q.q_mat.rows() != d || q.q_mat.cols() != d) {
    throw std::invalid_argument("moment_ode: polynomial dimension mismatch");
  }
  if (!q.q_mat.isApprox(q.q_mat.transpose(), 1e-12)) {
    throw std::invalid_argument("moment_ode: q_mat must be symmetric");
  }
  double phi = q.q0;
  Eigen::VectorXd psi = q.q_lin;
  Eigen::MatrixXd pi = q.q_mat;
  if (tau > 0.0) {
    const int n = static_cast<int>(std::ceil(tau / 1e-3));
    const double h = tau / n;
    const Eigen::MatrixXd kt = kappa.transpose();

    auto deriv = [&](const Eigen::VectorXd& ps, const Eigen::MatrixXd& pp, double& dphi,
                     Eigen::VectorXd& dpsi, Eigen::MatrixXd& dpi) {
      dphi = ps.dot(kappa_theta) + tr.a0(pp);
      dpsi = -kt * ps + 2.0 * (pp * kappa_theta) + tr.a1(pp);
      dpi = -(pp * kappa) - kt * pp + tr.a2(pp);
    };

    double k1p, k2p, k3p, k4p;
    Eigen::VectorXd k1s(d), k2s(d), k3s(d), k4s(d);
    Eigen::MatrixXd k1m(d, d), k2m(d, d), k3m(d, d), k4m(d, d);
    for (int i = 0; i < n; ++i) {
      deriv(psi, pi, k1p, k1s, k1m);
      deriv(psi + 0.5 * h * k1s, pi + 0.5 * h * k1m, k2p, k2s, k2m);
      deriv(psi + 0.5 * h * k2s, pi + 0.5 * h * k2m, k3p, k3s, k3m);
      deriv(psi + h * k3s, pi + h * k3m, k4p, k4s, k4m);
      phi += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      psi += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
      pi += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
    }
  }
  return phi + psi.dot(x) + x.dot(pi * x);
}

// Shared covariance core: u_a, u_b are the forward sensitivity vectors
// (already shifted and, for delivery legs, length-averaged); cross-pairing
// vectors va, vb carry the opposite leg's maturity shift for the symmetrized
// variant.
double covariance_core(const Eigen::MatrixXd& sig, const Eigen::VectorXd& u_a,
                       const Eigen::VectorXd& u_b, const Eigen::VectorXd& v_a,
                       const Eigen::VectorXd& v_b, bool symmetrized) {
  const double verbatim = u_b.dot(sig * u_a);
  if (!symmetrized) return verbatim;
  return 0.5 * (verbatim + v_b.dot(sig * v_a));
}

double correlation_core(const Eigen::MatrixXd& sig, const Eigen::VectorXd& u_a,
                        const Eigen::VectorXd& u_b, const Eigen::VectorXd& v_a,
                        const Eigen::VectorXd& v_b, bool symmetrized) {
  const Eigen::VectorXd sig_ua = sig * u_a;
  const Eigen::VectorXd sig_ub = sig * u_b;
  const double var_a = u_a.dot(sig_ua);
  const double var_b = u_b.dot(sig_ub);
  if (!(var_a > 0.0) || !(var_b > 0.0)) {
    throw degenerate_variance_error(
        "inst_correlation: a leg has zero instantaneous variance; correlation "
        "undefined");
  }
  double num = u_b.dot(sig_ua);
  if (symmetrized) num = 0.5 * (num + v_b.dot(sig * v_a));
  // Written as a ratio of ratios so that identical legs give exactly 1.
  return (num / var_a) / std::sqrt(var_b / var_a);
}

}  // namespace

double moment(const TwoFactorParams& p, Measure measure, const Eigen::VectorXd& coeffs,
              double t, double T, const Eigen::Vector2d& x, const MarketPriceOfRisk& mpr) {
  check_time_order(t, T, "moment");
  check_coeff_dim(coeffs, kBasisDim2, "moment");
  return moment_impl(generator_matrix(p, measure, mpr), basis_eval(x), coeffs, T - t);
}

double moment(const ThreeFactorParams& p, Measure measure, const Eigen::VectorXd& coeffs,
              double t, double T, const Eigen::Vector3d& x) {
  check_time_order(t, T, "moment");
  check_coeff_dim(coeffs, kBasisDim3, "moment");
  return moment_impl(generator_matrix(p, measure), basis_eval(x), coeffs, T - t);
}

double moment_ode(const TwoFactorParams& p, const QuadraticPolynomial& q, double t,
                  double T, const Eigen::Vector2d& x) {
  check_time_order(t, T, "moment_ode");
  Eigen::Matrix2d kappa;
  kappa << p.kappa_z, 0.0, -p.kappa_y, p.kappa_y;
  const Eigen::Vector2d kappa_theta = Eigen::Vector2d::Zero();
  const Eigen::MatrixXd a = diffusion_matrix(p);
  TraceDecomposition tr;
  tr.a0 = [a](const Eigen::MatrixXd& pi) { return (pi * a).trace(); };
  tr.a1 = [](const Eigen::MatrixXd&) { return Eigen::VectorXd::Zero(2).eval(); };
  tr.a2 = [](const Eigen::MatrixXd&) { return Eigen::MatrixXd::Zero(2, 2).eval(); };
  return moment_ode_impl(kappa, kappa_theta, tr, q, T - t, x);
}

double moment_ode(const ThreeFactorParams& p, const QuadraticPolynomial& q, double t,
                  double T, const Eigen::Vector3d& x) {
  check_time_order(t, T, "moment_ode");
  Eigen::Matrix3d kappa = Eigen::Matrix3d::Zero();
  kappa(0, 0) = p.kappa_z;
  kappa(1, 0) = -p.kappa_y;
  kappa(1, 1) = p.kappa_y;
  kappa(2, 2) = p.kappa_r;
  Eigen::Vector3d kappa_theta(0.0, 0.0, p.kappa_r * p.theta_r);
  const double sz2 = p.sigma_z * p.sigma_z;
  const double sy2 = p.sigma_y * p.sigma_y;
  const double sr2 = p.sigma_r * p.sigma_r;
  const double syz = p.sigma_y * p.sigma_z;
  TraceDecomposition tr;
  // tr(pi a(x)) for the Jacobi specification splits into
  //   constant: pi_11 s_Z^2 + pi_22 s_Y^2 + pi_33 s_R^2
  //   linear:   2 pi_12 s_Y s_Z in r
  //   quadratic: -pi_33 s_R^2 r^2.
  tr.a0 = [=](const Eigen::MatrixXd& pi) {
    return pi(0, 0) * sz2 + pi(1, 1) * sy2 + pi(2, 2) * sr2;
  };
  tr.a1 = [=](const Eigen::MatrixXd& pi) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(3);
    v[2] = 2.0 * pi(0, 1) * syz;
    return v;
  };
  tr.a2 = [=](const Eigen::MatrixXd& pi) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
    m(2, 2) = -pi(2, 2) * sr2;
    return m;
  };
  return moment_ode_impl(kappa, kappa_theta, tr, q, T - t, x);
}

Eigen::VectorXd weight_vector(const TwoFactorParams& p, Measure measure, double ti,
                              double tj, const MarketPriceOfRisk& mpr) {
  check_time_order(ti, tj, "weight_vector");
  const Eigen::MatrixXd g = generator_matrix(p, measure, mpr);
  const Eigen::VectorXd w = expm_and_integral(g, tj - ti).integral * spot_coordinates(p);
  return expm(g, ti) * w;
}

Eigen::VectorXd weight_vector(const ThreeFactorParams& p, Measure measure, double ti,
                              double tj) {
  check_time_order(ti, tj, "weight_vector");
  const Eigen::MatrixXd g = generator_matrix(p, measure);
  const Eigen::VectorXd w = expm_and_integral(g, tj - ti).integral * spot_coordinates(p);
  return expm(g, ti) * w;
}

double forward_instant(const TwoFactorParams& p, Measure measure, double t, double T,
                       const Eigen::Vector2d& x, const MarketPriceOfRisk& mpr) {
  check_time_order(t, T, "forward_instant");
  return moment_impl(generator_matrix(p, measure, mpr), basis_eval(x),
                     spot_coordinates(p), T - t);
}

double forward_instant(const ThreeFactorParams& p, Measure measure, double t, double T,
                       const Eigen::Vector3d& x) {
  check_time_order(t, T, "forward_instant");
  return moment_impl(generator_matrix(p, measure), basis_eval(x), spot_coordinates(p),
                     T - t);
}

double forward_period(const TwoFactorParams& p, Measure measure, double t, double t1,
                      double t2, const Eigen::Vector2d& x, const MarketPriceOfRisk& mpr) {
  check_leg(t, t1, t2, "forward_period");
  const Eigen::MatrixXd g = generator_matrix(p, measure, mpr);
  return basis_eval(x).dot(period_weight(g, spot_coordinates(p), t1 - t, t2 - t1));
}

double forward_period(const ThreeFactorParams& p, Measure measure, double t, double t1,
                      double t2, const Eigen::Vector3d& x) {
  check_leg(t, t1, t2, "forward_period");
  const Eigen::MatrixXd g = generator_matrix(p, measure);
  return basis_eval(x).dot(period_weight(g, spot_coordinates(p), t1 - t, t2 - t1));
}

namespace {

// Builders for the four sandwich vectors of the delivery-period covariance:
// u_* pair each leg's own maturity shift with its own averaged weight; v_*
// swap the shifts, which is what transposing the sandwich matrix does.
struct LegVectors {
  Eigen::VectorXd u_a, u_b, v_a, v_b;
};

LegVectors instant_legs(const Eigen::MatrixXd& g, const Eigen::VectorXd& p_s, double t,
                        double ta, double tb) {
  check_time_order(t, ta, "inst_covariance");
  check_time_order(t, tb, "inst_covariance");
  LegVectors lv;
  lv.u_a = expm(g, ta - t) * p_s;
  lv.u_b = expm(g, tb - t) * p_s;
  lv.v_a = lv.u_b;
  lv.v_b = lv.u_a;
  return lv;
}

LegVectors period_legs(const Eigen::MatrixXd& g, const Eigen::VectorXd& p_s, double t,
                       std::pair<double, double> leg_a, std::pair<double, double> leg_b) {
  check_leg(t, leg_a.first, leg_a.second, "inst_covariance");
  check_leg(t, leg_b.first, leg_b.second, "inst_covariance");
  const Eigen::MatrixXd shift_a = expm(g, leg_a.first - t);
  const Eigen::MatrixXd shift_b = expm(g, leg_b.first - t);
  const Eigen::VectorXd wbar_a =
      expm_and_integral(g, leg_a.second - leg_a.first).integral * p_s /
      (leg_a.second - leg_a.first);
  const Eigen::VectorXd wbar_b =
      expm_and_integral(g, leg_b.second - leg_b.first).integral * p_s /
      (leg_b.second - leg_b.first);
  LegVectors lv;
  lv.u_a = shift_a * wbar_a;
  lv.u_b = shift_b * wbar_b;
  lv.v_a = shift_b * wbar_a;
  lv.v_b = shift_a * wbar_b;
  return lv;
}

}  // namespace

double inst_covariance(const TwoFactorParams& p, double t, double ta, double tb,
                       const Eigen::Vector2d& x, bool symmetrized) {
  const auto lv = instant_legs(generator_matrix(p), spot_coordinates(p), t, ta, tb);
  return covariance_core(sigma_h(p, x), lv.u_a, lv.u_b, lv.v_a, lv.v_b, symmetrized);
}

double inst_covariance(const ThreeFactorParams& p, double t, double ta, double tb,
                       const Eigen::Vector3d& x, bool symmetrized) {
  const auto lv = instant_legs(generator_matrix(p), spot_coordinates(p), t, ta, tb);
  return covariance_core(sigma_h(p, x), lv.u_a, lv.u_b, lv.v_a, lv.v_b, symmetrized);
}

double inst_covariance(const TwoFactorParams& p, double t, std::pair<double, double> leg_a,
                       std::pair<double, double> leg_b, const Eigen::Vector2d& x,
                       bool symmetrized) {
  const auto lv = period_legs(generator_matrix(p), spot_coordinates(p), t, leg_a, leg_b);
  return covariance_core(sigma_h(p, x), lv.u_a, lv.u_b, lv.v_a, lv.v_b, symmetrized);
}

double inst_covariance(const ThreeFactorParams& p, double t, std::pair<double, double> leg_a,
                       std::pair<double, double> leg_b, const Eigen::Vector3d& x,
                       bool symmetrized) {
  const auto lv = period_legs(generator_matrix(p), spot_coordinates(p), t, leg_a, leg_b);
  return covariance_core(sigma_h(p, x), lv.u_a, lv.u_b, lv.v_a, lv.v_b, symmetrized);
}

double inst_correlation(const TwoFactorParams& p, double t, double ta, double tb,
                        const Eigen::Vector2d& x, bool symmetrized) {
  const auto lv = instant_legs(generator_matrix(p), spot_coordinates(p), t, ta, tb);
  return correlation_core(sigma_h(p, x), lv.u_a, lv.u_b, lv.v_a, lv.v_b, symmetrized);
}

double inst_correlation(const ThreeFactorParams& p, double t, double ta, double tb,
                        const Eigen::Vector3d& x, bool symmetrized) {
  const auto lv = instant_legs(generator_matrix(p), spot_coordinates(p), t, ta, tb);
  return correlation_core(sigma_h(p, x), lv.u_a, lv.u_b, lv.v_a, lv.v_b, symmetrized);
}

double inst_correlation(const TwoFactorParams& p, double t, std::pair<double, double> leg_a,
                        std::pair<double, double> leg_b, const Eigen::Vector2d& x,
                        bool symmetrized) {
  const auto lv = period_legs(generator_matrix(p), spot_coordinates(p), t, leg_a, leg_b);
  return correlation_core(sigma_h(p, x), lv.u_a, lv.u_b, lv.v_a, lv.v_b, symmetrized);
}

double inst_correlation(const ThreeFactorParams& p, double t, std::pair<double, double> leg_a,
                        std::pair<double, double> leg_b, const Eigen::Vector3d& x,
                        bool symmetrized) {
  const auto lv = period_legs(generator_matrix(p), spot_coordinates(p), t, leg_a, leg_b);
  return correlation_core(sigma_h(p, x), lv.u_a, lv.u_b, lv.v_a, lv.v_b, symmetrized);
}

double risk_premium(const TwoFactorParams& p, const MarketPriceOfRisk& mpr, double t,
                    double t1, const Eigen::Vector2d& x) {
  check_time_order(t, t1, "risk_premium");
  const Eigen::MatrixXd gq = generator_matrix(p, Measure::Q);
  const Eigen::MatrixXd gp = generator_matrix(p, Measure::P, mpr);
  const Eigen::VectorXd p_s = spot_coordinates(p);
  const double tau = t1 - t;
  return basis_eval(x).dot(expm(gq, tau) * p_s - expm(gp, tau) * p_s);
}

double risk_premium(const TwoFactorParams& p, const MarketPriceOfRisk& mpr, double t,
                    double t1, double t2, const Eigen::Vector2d& x) {
  check_leg(t, t1, t2, "risk_premium");
  const Eigen::MatrixXd gq = generator_matrix(p, Measure::Q);
  const Eigen::MatrixXd gp = generator_matrix(p, Measure::P, mpr);
  const Eigen::VectorXd p_s = spot_coordinates(p);
  const Eigen::VectorXd uq = period_weight(gq, p_s, t1 - t, t2 - t1);
  const Eigen::VectorXd up = period_weight(gp, p_s, t1 - t, t2 - t1);
  return basis_eval(x).dot(uq - up);
}

namespace {

template <typename Params, typename StateVec>
std::vector<double> forward_curve_impl(const Eigen::MatrixXd& g, const Params& p,
                                       double t, const StateVec& x,
                                       const std::vector<std::pair<double, double>>& mats) {
  const Eigen::VectorXd p_s = spot_coordinates(p);
  const Eigen::VectorXd h = basis_eval(x);
  // One delivery-length integral per distinct length; maturity shifts are
  // cheap by comparison and stay per-entry.
  std::map<double, Eigen::VectorXd> by_length;
  std::vector<double> out;
  out.reserve(mats.size());
  for (const auto& [t1, t2] : mats) {
    check_leg(t, t1, t2, "forward_curve");
    const double len = t2 - t1;
    auto it = by_length.find(len);
    if (it == by_length.end()) {
      it = by_length.emplace(len, (expm_and_integral(g, len).integral * p_s).eval()).first;
    }
    out.push_back(h.dot((expm(g, t1 - t) * it->second) / len));
  }
  return out;
}

}  // namespace

std::vector<double> forward_curve(const TwoFactorParams& p, Measure measure, double t,
                                  const Eigen::Vector2d& x,
                                  const std::vector<std::pair<double, double>>& maturities,
                                  const MarketPriceOfRisk& mpr) {
  return forward_curve_impl(generator_matrix(p, measure, mpr), p, t, x, maturities);
}

std::vector<double> forward_curve(const ThreeFactorParams& p, Measure measure, double t,
                                  const Eigen::Vector3d& x,
                                  const std::vector<std::pair<double, double>>& maturities) {
  return forward_curve_impl(generator_matrix(p, measure), p, t, x, maturities);
}

}  // namespace polyfwd
