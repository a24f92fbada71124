#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "polyfwd/model.hpp"

namespace polyfwd {

// q(x) = q0 + q_lin^T x + x^T q_mat x with q_mat symmetric.
struct QuadraticPolynomial {
  double q0 = 0.0;
  Eigen::VectorXd q_lin;
  Eigen::MatrixXd q_mat;
};

// A forward observation in model time: instantaneous delivery at t1 when t2
// is absent, delivery period [t1, t2) otherwise.
struct ForwardQuote {
  double t = 0.0;
  double t1 = 0.0;
  std::optional<double> t2;
  double price = 0.0;
};

// Conditional moment E[p(X_T) | X_t = x] = H(x)^T exp((T-t) G) p for a
// polynomial p given in basis coordinates. Production pricing path.
double moment(const TwoFactorParams& p, Measure measure, const Eigen::VectorXd& coeffs,
              double t, double T, const Eigen::Vector2d& x,
              const MarketPriceOfRisk& mpr = {});
double moment(const ThreeFactorParams& p, Measure measure, const Eigen::VectorXd& coeffs,
              double t, double T, const Eigen::Vector3d& x);

// Same conditional moment for a quadratic polynomial, computed instead by
// integrating the (phi, psi, pi) ODE system with fixed-step RK4 (step at most
// 1e-3 years). Exists as an independent cross-check of moment(); production
// code should prefer the matrix exponential. Q-measure only.
double moment_ode(const TwoFactorParams& p, const QuadraticPolynomial& q, double t,
                  double T, const Eigen::Vector2d& x);
double moment_ode(const ThreeFactorParams& p, const QuadraticPolynomial& q, double t,
                  double T, const Eigen::Vector3d& x);

// w_ij = integral_{Ti}^{Tj} exp(uG) du p_S = exp(Ti G) integral_0^{Tj-Ti}.
Eigen::VectorXd weight_vector(const TwoFactorParams& p, Measure measure, double ti,
                              double tj, const MarketPriceOfRisk& mpr = {});
Eigen::VectorXd weight_vector(const ThreeFactorParams& p, Measure measure, double ti,
                              double tj);

// Forward with instantaneous delivery: f(t,T,x) = H(x)^T exp((T-t)G) p_S.
double forward_instant(const TwoFactorParams& p, Measure measure, double t, double T,
                       const Eigen::Vector2d& x, const MarketPriceOfRisk& mpr = {});
double forward_instant(const ThreeFactorParams& p, Measure measure, double t, double T,
                       const Eigen::Vector3d& x);

// Forward with delivery period [T1, T2):
// F(t,T1,T2,x) = 1/(T2-T1) H(x)^T exp((T1-t)G) integral_0^{T2-T1} exp(uG) du p_S.
double forward_period(const TwoFactorParams& p, Measure measure, double t, double t1,
                      double t2, const Eigen::Vector2d& x,
                      const MarketPriceOfRisk& mpr = {});
double forward_period(const ThreeFactorParams& p, Measure measure, double t, double t1,
                      double t2, const Eigen::Vector3d& x);

// Instantaneous covariation d<f(.,Ta), f(.,Tb)>_t / dt of two forwards, per
// the sandwich p_S^T exp((Tb-t)G)^T Sigma(x) exp((Ta-t)G) p_S. The
// delivery-period overloads take legs (T1,T2), (T3,T4) and average the weight
// vectors over each leg's own delivery length, so the value is the quadratic
// covariation of the two normalized forward prices. `symmetrized` replaces
// the sandwich matrix A by (A + A^T)/2 for reporting; the two variants
// coincide whenever the legs have equal delivery lengths (and always for the
// instantaneous form).
double inst_covariance(const TwoFactorParams& p, double t, double ta, double tb,
                       const Eigen::Vector2d& x, bool symmetrized = false);
double inst_covariance(const ThreeFactorParams& p, double t, double ta, double tb,
                       const Eigen::Vector3d& x, bool symmetrized = false);
double inst_covariance(const TwoFactorParams& p, double t,
                       std::pair<double, double> leg_a, std::pair<double, double> leg_b,
                       const Eigen::Vector2d& x, bool symmetrized = false);
double inst_covariance(const ThreeFactorParams& p, double t,
                       std::pair<double, double> leg_a, std::pair<double, double> leg_b,
                       const Eigen::Vector3d& x, bool symmetrized = false);

// Correlation = covariance normalized by the two variances. Throws
// degenerate_variance_error when either leg has zero instantaneous variance.
double inst_correlation(const TwoFactorParams& p, double t, double ta, double tb,
                        const Eigen::Vector2d& x, bool symmetrized = false);
double inst_correlation(const ThreeFactorParams& p, double t, double ta, double tb,
                        const Eigen::Vector3d& x, bool symmetrized = false);
double inst_correlation(const TwoFactorParams& p, double t,
                        std::pair<double, double> leg_a, std::pair<double, double> leg_b,
                        const Eigen::Vector2d& x, bool symmetrized = false);
double inst_correlation(const ThreeFactorParams& p, double t,
                        std::pair<double, double> leg_a, std::pair<double, double> leg_b,
                        const Eigen::Vector3d& x, bool symmetrized = false);

// Forward risk premium R = E_Q[.] - E_P[.]:
//   instantaneous: H(x)^T [exp((T-t)G) - exp((T-t)G_lambda)] p_S
//   delivery:      1/(T2-T1) H(x)^T [exp((T1-t)G) I(G) - exp((T1-t)G_lambda)
//                  I(G_lambda)] p_S with I(M) = integral_0^{T2-T1} exp(uM) du.
// Identically zero when the market price of risk vanishes. Two-factor only.
double risk_premium(const TwoFactorParams& p, const MarketPriceOfRisk& mpr, double t,
                    double t1, const Eigen::Vector2d& x);
double risk_premium(const TwoFactorParams& p, const MarketPriceOfRisk& mpr, double t,
                    double t1, double t2, const Eigen::Vector2d& x);

// Vectorized forward_period over a list of (T1,T2) pairs; the delivery-length
// integral is computed once per distinct length.
std::vector<double> forward_curve(const TwoFactorParams& p, Measure measure, double t,
                                  const Eigen::Vector2d& x,
                                  const std::vector<std::pair<double, double>>& maturities,
                                  const MarketPriceOfRisk& mpr = {});
std::vector<double> forward_curve(const ThreeFactorParams& p, Measure measure, double t,
                                  const Eigen::Vector3d& x,
                                  const std::vector<std::pair<double, double>>& maturities);

}  // namespace polyfwd
