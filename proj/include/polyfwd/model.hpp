#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "polyfwd/errors.hpp"

namespace polyfwd {

// Q is the pricing measure, P the real-world measure obtained through the
// market price of risk.
enum class Measure { Q, P };

// Two-factor specification: spot S = c + alpha*Y^2 + beta*Z^2 with
//   dZ = -kappa_Z Z dt + sigma_Z dW1
//   dY = kappa_Y (Z - Y) dt + rho sigma_Y dW1 + sqrt(1-rho^2) sigma_Y dW2.
struct TwoFactorParams {
  double c = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double kappa_z = 0.0;
  double kappa_y = 0.0;
  double sigma_z = 0.0;
  double sigma_y = 0.0;
  double rho = 0.0;
  double z0 = 0.0;
  double y0 = 0.0;
};

// Three-factor specification: the correlation between the Z and Y noises is
// replaced by a Jacobi process R confined to (-1,1):
//   dR = kappa_R (theta_R - R) dt + sigma_R sqrt(1-R^2) dW3.
struct ThreeFactorParams {
  double c = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double kappa_z = 0.0;
  double kappa_y = 0.0;
  double kappa_r = 0.0;
  double theta_r = 0.0;
  double sigma_z = 0.0;
  double sigma_y = 0.0;
  double sigma_r = 0.0;
  double z0 = 0.0;
  double y0 = 0.0;
  double r0 = 0.0;
};

// Drift adjustment linking P and Q: lambda(x) = sigma(x)^{-1} (gamma + Lambda x)
// with Lambda = diag(lambda_Z, lambda_Y). Zero values mean P coincides with Q.
struct MarketPriceOfRisk {
  double lambda_z = 0.0;
  double lambda_y = 0.0;
  double gamma_z = 0.0;
  double gamma_y = 0.0;

  bool is_zero() const {
    return lambda_z == 0.0 && lambda_y == 0.0 && gamma_z == 0.0 && gamma_y == 0.0;
  }
};

// Monomial basis ordering, frozen across every module:
//   two-factor   (1, z, y, z^2, yz, y^2)
//   three-factor (1, z, y, r, z^2, yz, y^2).
inline constexpr int kBasisDim2 = 6;
inline constexpr int kBasisDim3 = 7;
namespace basis2 {
inline constexpr int one = 0, z = 1, y = 2, zz = 3, yz = 4, yy = 5;
}
namespace basis3 {
inline constexpr int one = 0, z = 1, y = 2, r = 3, zz = 4, yz = 5, yy = 6;
}

// H(x): monomials of the state in the frozen order. Dispatches on x.size()
// (2 or 3); any other length is an error.
Eigen::VectorXd basis_eval(const Eigen::VectorXd& x);

// Matrix representation of the extended generator on the basis: column j
// holds the basis coordinates of the generator applied to monomial j, so
// conditional moments are H(x)^T exp(tau G) p. Measure P applies the market
// price of risk; the three-factor overload supports Q only.
Eigen::MatrixXd generator_matrix(const TwoFactorParams& p, Measure measure = Measure::Q,
                                 const MarketPriceOfRisk& mpr = {});
Eigen::MatrixXd generator_matrix(const ThreeFactorParams& p, Measure measure = Measure::Q);

// Coordinates of the spot map S = c + alpha y^2 + beta z^2 in the basis.
Eigen::VectorXd spot_coordinates(const TwoFactorParams& p);
Eigen::VectorXd spot_coordinates(const ThreeFactorParams& p);

double spot_price(const TwoFactorParams& p, const Eigen::Vector2d& x);
double spot_price(const ThreeFactorParams& p, const Eigen::Vector3d& x);

// a(x) = sigma(x) sigma(x)^T on the state. Constant for the two-factor
// specification.
Eigen::MatrixXd diffusion_matrix(const TwoFactorParams& p);
Eigen::MatrixXd diffusion_matrix(const ThreeFactorParams& p, const Eigen::Vector3d& x);

// Sigma(x): quadratic covariation matrix of the basis process, defined by
// Sigma(X_t) dt = d<H(X), H(X)>_t. The closed-form transcription below is the
// production path; it must agree with the Jacobian product
// J_H(x) a(x) J_H(x)^T, which the tests use as an oracle.
Eigen::MatrixXd sigma_h(const TwoFactorParams& p, const Eigen::Vector2d& x);
Eigen::MatrixXd sigma_h(const ThreeFactorParams& p, const Eigen::Vector3d& x);

// Constraint check; returns human-readable violations instead of throwing,
// because the calibrator probes infeasible points and must penalize them.
// calibration_constraints additionally enforces 1 >= kappa_Y >= kappa_Z >= 0.
std::vector<std::string> validate_params(const TwoFactorParams& p,
                                         bool calibration_constraints = false);
std::vector<std::string> validate_params(const ThreeFactorParams& p);
std::vector<std::string> validate_params(const MarketPriceOfRisk& mpr);

// Flat key-value (de)serialization with the canonical field names
// (c, alpha, beta, kappa_Z, kappa_Y, sigma_Z, sigma_Y, rho, lambda_Z,
// lambda_Y, gamma_Z, gamma_Y, z0, y0; three-factor adds kappa_R, theta_R,
// sigma_R, r0 and drops rho). Round-trips are exact: values pass through
// untouched as doubles.
using FlatParams = std::map<std::string, double>;

FlatParams to_flat(const TwoFactorParams& p);
FlatParams to_flat(const TwoFactorParams& p, const MarketPriceOfRisk& mpr);
FlatParams to_flat(const ThreeFactorParams& p);

// Throws std::invalid_argument naming the first missing key. Keys beyond the
// model's own are ignored so that model parameters can live inside a larger
// run configuration.
TwoFactorParams two_factor_from_flat(const FlatParams& kv);
ThreeFactorParams three_factor_from_flat(const FlatParams& kv);
// Market-price-of-risk keys are optional as a group: absent means zero, but a
// partial set is an error.
MarketPriceOfRisk mpr_from_flat(const FlatParams& kv);

}  // namespace polyfwd
