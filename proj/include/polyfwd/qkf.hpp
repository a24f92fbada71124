#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "polyfwd/model.hpp"

namespace polyfwd {

// One observed forward quote: consensus price and (optionally) the
// high-minus-low price spread used to size the measurement noise.
struct Quote {
  double price = 0.0;
  std::optional<double> spread;
};

// Panel of nearby-contract quotes. dates are quotation times in years on the
// model clock (the CLI maps calendar dates here); rows[k] maps the nearby
// index j in {1..j_max} to the quote, and gaps are allowed.
struct QuoteSeries {
  std::vector<double> dates;
  std::vector<std::map<int, Quote>> rows;
  int j_max = 10;
};

// Throws data_error when the series violates its invariants (dates strictly
// increasing and aligned with rows, j within range, prices > 0, spreads >= 0).
void validate_quotes(const QuoteSeries& quotes);

// Measurement noise levels N^j_k (standard deviations, aligned with the quote
// rows), from (N^j_k)^2 = (d^j_k + d^j + d)/3 where d^j is the time-series
// average spread of contract j and d the overall average. A quote with a
// missing spread uses d^j in place of d^j_k; a contract with no spreads at
// all uses d for its d^j. No spreads anywhere is a configuration error.
struct NoiseModel {
  std::vector<std::map<int, double>> n;
};

NoiseModel noise_levels(const QuoteSeries& quotes);

// Euler discretization of the P-dynamics over one step dt:
//   X_k = b + D X_{k-1} + K eps_k.
// diagonal_warning reports a step so large that D has a negative diagonal;
// the matrices are still returned.
struct Discretization {
  Eigen::Vector2d b;
  Eigen::Matrix2d d;
  Eigen::Matrix2d k;
  bool diagonal_warning = false;
};

Discretization discretize(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                          double dt);

// Exact conditional dynamics of the augmented state
// (Z, Y, Z^2, YZ, Y^2) implied by the discretized linear step:
//   x_tilde_k = b_tilde + D_tilde x_tilde_{k-1} + noise,
//   Cov(noise | X_{k-1} = x_prev) = sigma_tilde.
struct AugmentedDynamics {
  Eigen::VectorXd b_tilde;
  Eigen::MatrixXd d_tilde;
  Eigen::MatrixXd sigma_tilde;
};

AugmentedDynamics augment_dynamics(const Eigen::Vector2d& b, const Eigen::Matrix2d& d,
                                   const Eigen::Matrix2d& k,
                                   const Eigen::Vector2d& x_prev);

// Affine measurement map for the present nearby contracts at a quotation date
// sitting quote_date_frac in [0,1) into its calendar year: the model price of
// nearby j is a[i] + b_tilde.row(i) . x_tilde with
//   (a^j; B^j) = exp((j - frac) G) integral_0^1 exp(uG) du p_S
// under the Q generator (mpr is accepted for call-site uniformity; forward
// prices do not depend on it). Computed as exp(jG) (exp(-frac G) w01), which
// equals the display up to rounding and lets filtering reuse the pieces.
struct MeasurementMap {
  std::vector<int> js;
  Eigen::VectorXd a;
  Eigen::MatrixXd b_tilde;
};

MeasurementMap measurement_map(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                               double quote_date_frac, const std::vector<int>& present_js);

// One date of the filtering pass. For a date with no quotes, the update block
// is skipped and innovation/innovation_cov/gain are empty.
struct FilterState {
  Eigen::VectorXd x_filt;
  Eigen::MatrixXd v_filt;
  Eigen::VectorXd x_pred;
  Eigen::MatrixXd v_pred;
  Eigen::VectorXd innovation;
  Eigen::MatrixXd innovation_cov;
  Eigen::MatrixXd gain;
};

// Single filter step: prediction from prev (the non-augmented state feeding
// b_tilde and sigma_tilde is the first two entries of prev.x_filt), then the
// measurement update for the quotes in obs_row. mm must carry rows for
// exactly the js present in obs_row; noise_row supplies N^j_k for them.
// Throws singular_innovation_error (tagged with date_index) when the
// innovation covariance cannot be factorized.
FilterState qkf_step(const FilterState& prev, const std::map<int, Quote>& obs_row,
                     const Discretization& disc, const MeasurementMap& mm,
                     const std::map<int, double>& noise_row, int date_index);

struct FilterOutput {
  std::vector<FilterState> states;
  // Fitted prices a + B x_tilde from the updated state (model_prices) and
  // from the one-step prediction (model_prices_pred), with the corresponding
  // relative errors |F_model - F_obs| / F_obs. Reported quantities default to
  // the updated variant.
  std::vector<std::map<int, double>> model_prices;
  std::vector<std::map<int, double>> model_prices_pred;
  std::vector<std::map<int, double>> relative_errors;
  std::vector<std::map<int, double>> relative_errors_pred;
  double log_likelihood = 0.0;
  double ls_error = 0.0;
};

// Full filtering pass. Anchoring treats the monomials of (z0, y0) and
// sigma_tilde(x0) as the first date's prediction and applies the measurement
// update there as well; the anchor covariance uses the first inter-date gap
// as its step (1/12 for a single-date series). Subsequent dates use the
// actual gaps. ls_spread_weighted switches the LS objective from the plain
// sum of squared innovations to innovations scaled by 1/N.
FilterOutput run_filter(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                        const QuoteSeries& quotes, bool ls_spread_weighted = false);

// Variant with externally supplied noise levels (aligned with quotes).
FilterOutput run_filter(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                        const QuoteSeries& quotes, const NoiseModel& noise,
                        bool ls_spread_weighted = false);

// Synthetic monthly quote panel generated from the model's own discretized
// P-dynamics started at (z0, y0): dates k/12 for k = 0..n_dates-1, all
// nearbys 1..j_max present, observation noise sqrt(spread) on every price and
// the given constant spread recorded on every quote. Deterministic in seed.
QuoteSeries synthetic_quotes(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                             int n_dates, int j_max, double spread, std::uint64_t seed);

}  // namespace polyfwd
