#pragma once

// Independent reference implementations used as test oracles. Everything in
// this header is deliberately written against the definitions, not against
// the production code paths: the matrix exponential is a plain scaled Taylor
// series, quadrature is composite Simpson, and Sigma(x) is the Jacobian
// sandwich. Production uses Pade scaling-and-squaring, closed forms, and
// transcribed matrices, so agreement is a genuine two-route check.

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "polyfwd/model.hpp"
#include "polyfwd/rng.hpp"

namespace oracles {

// e^{At} by scaled 128-term Taylor summation: scale so ||At/2^s||_1 <= 0.5,
// sum the series to machine saturation, square s times.
inline Eigen::MatrixXd taylor_expm(const Eigen::MatrixXd& a, double t) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd at = a * t;
  const double norm = at.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  while (norm / std::pow(2.0, s) > 0.5) ++s;
  at /= std::pow(2.0, s);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= 128; ++k) {
    term = (term * at) / static_cast<double>(k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-300) break;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

// Composite Simpson on [a, b] with n subintervals (n forced even).
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      int n) {
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Entrywise Simpson integral of a matrix-valued function.
inline Eigen::MatrixXd simpson_matrix(
    const std::function<Eigen::MatrixXd(double)>& f, double a, double b, int n) {
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  Eigen::MatrixXd acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * (h / 3.0);
}

// Analytic Jacobian of the monomial basis map H: first row zero, then the
// gradients of z, y, z^2, yz, y^2 (and r for the three-factor layout).
inline Eigen::MatrixXd basis_jacobian2(const Eigen::Vector2d& x) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(6, 2);
  const double z = x[0], y = x[1];
  j(1, 0) = 1.0;
  j(2, 1) = 1.0;
  j(3, 0) = 2.0 * z;
  j(4, 0) = y;
  j(4, 1) = z;
  j(5, 1) = 2.0 * y;
  return j;
}

inline Eigen::MatrixXd basis_jacobian3(const Eigen::Vector3d& x) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(7, 3);
  const double z = x[0], y = x[1];
  j(1, 0) = 1.0;
  j(2, 1) = 1.0;
  j(3, 2) = 1.0;
  j(4, 0) = 2.0 * z;
  j(5, 0) = y;
  j(5, 1) = z;
  j(6, 1) = 2.0 * y;
  return j;
}

// Jacobian-sandwich form of Sigma(x): J_H(x) a(x) J_H(x)^T.
inline Eigen::MatrixXd sigma_h_jacobian(const polyfwd::TwoFactorParams& p,
                                        const Eigen::Vector2d& x) {
  const Eigen::MatrixXd j = basis_jacobian2(x);
  return j * polyfwd::diffusion_matrix(p) * j.transpose();
}

inline Eigen::MatrixXd sigma_h_jacobian(const polyfwd::ThreeFactorParams& p,
                                        const Eigen::Vector3d& x) {
  const Eigen::MatrixXd j = basis_jacobian3(x);
  return j * polyfwd::diffusion_matrix(p, x) * j.transpose();
}

// Estimated parameter set used throughout the tests as a realistic anchor.
inline polyfwd::TwoFactorParams reference_params() {
  polyfwd::TwoFactorParams p;
  p.c = 0.239614;
  p.alpha = 10.250035;
  p.beta = 0.176807;
  p.kappa_z = 0.010022;
  p.kappa_y = 0.400207;
  p.sigma_z = 0.406479;
  p.sigma_y = 0.889130;
  p.rho = 0.112439;
  p.z0 = 2.358048;
  p.y0 = 2.007557;
  return p;
}

inline polyfwd::MarketPriceOfRisk reference_mpr() {
  polyfwd::MarketPriceOfRisk mpr;
  mpr.lambda_z = 0.089990;
  mpr.lambda_y = 0.111842;
  mpr.gamma_z = 0.086791;
  mpr.gamma_y = 0.127365;
  return mpr;
}

// Admissible three-factor parameter set (kappa_R (1 +- theta_R) >= sigma_R^2)
// reusing the two-factor scales.
inline polyfwd::ThreeFactorParams reference_params3() {
  polyfwd::ThreeFactorParams p;
  p.c = 0.239614;
  p.alpha = 10.250035;
  p.beta = 0.176807;
  p.kappa_z = 0.010022;
  p.kappa_y = 0.400207;
  p.kappa_r = 1.2;
  p.theta_r = 0.1;
  p.sigma_z = 0.406479;
  p.sigma_y = 0.889130;
  p.sigma_r = 0.9;
  p.z0 = 2.358048;
  p.y0 = 2.007557;
  p.r0 = 0.112439;
  return p;
}

inline Eigen::Vector2d reference_x0() {
  return {reference_params().z0, reference_params().y0};
}

// Uniform draw in [lo, hi) from the project RNG, for reproducible test data.
inline double uniform(polyfwd::rng::Xoshiro256pp& gen, double lo, double hi) {
  return lo + (hi - lo) * gen.uniform01();
}

}  // namespace oracles
