#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "polyfwd/model.hpp"
#include "polyfwd/qkf.hpp"

namespace polyfwd {

// ---------------------------------------------------------------------------
// Differential evolution (DE/rand/1/bin) over a box.
// ---------------------------------------------------------------------------

struct DEConfig {
  Eigen::VectorXd lower;  // box bounds; finite, lower < upper componentwise
  Eigen::VectorXd upper;
  int population = 0;  // 0 selects the default 10 x dimension
  int max_generations = 200;
  double cr = 0.9;  // crossover probability
  double f = 0.8;   // differential weight
  std::uint64_t seed = 1;
  // Convergence tolerance on the best objective: stop once the improvement of
  // the best value over a 25-generation window is <= tol. Negative disables.
  double tol = -1.0;
  // Optional seed members for the initial population (one column per point);
  // remaining slots are filled uniformly over the box.
  Eigen::MatrixXd initial;
};

struct DEResult {
  Eigen::VectorXd best;
  double best_objective = 0.0;
  std::vector<double> trajectory;  // best objective after each generation
  int generations = 0;             // generations actually run
};

// Classic DE/rand/1/bin: mutation v = x_a + F (x_b - x_c), binomial crossover
// with CR, greedy selection, box constraints enforced by reflection at the
// bounds. All trial vectors of a generation are built before any is
// evaluated, so the result is independent of evaluation order and fully
// determined by the seed. Candidates with non-finite objective never replace
// a finite incumbent. Throws numerical_error if the objective is non-finite
// on the entire initial population.
DEResult differential_evolution(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const DEConfig& config);

// ---------------------------------------------------------------------------
// Two-factor calibration on quote series.
// ---------------------------------------------------------------------------

// Flat order of the 14 calibrated parameters. Used for bounds vectors and the
// DE search space.
inline constexpr int kCalibrationDim = 14;
extern const char* const kCalibrationNames[kCalibrationDim];

Eigen::VectorXd calibration_vector(const TwoFactorParams& p, const MarketPriceOfRisk& mpr);
void calibration_unpack(const Eigen::VectorXd& v, TwoFactorParams& p, MarketPriceOfRisk& mpr);

struct CalibrationConfig {
  Eigen::VectorXd lower;  // dimension kCalibrationDim, see kCalibrationNames
  Eigen::VectorXd upper;
  int population = 0;       // 0 selects 10 x dimension
  int max_generations = 500;  // cap applied to each stage
  int ls_generations = 250;   // stage schedule
  int ml_generations = 50;
  double cr = 0.9;
  double f = 0.8;
  std::uint64_t seed = 1;
  double tol = -1.0;  // DE convergence tolerance (negative disables)
  bool ls_spread_weighted = false;

  // Wide default boxes; the data gives no tighter information a priori.
  static CalibrationConfig defaults();
};

void validate_config(const CalibrationConfig& config);

// Penalty added to the minimized objective: 0 when all parameter constraints
// hold, including the calibration ordering 1 >= kappa_Y >= kappa_Z >= 0,
// otherwise 1e6 * (1 + total violation magnitude).
double constraint_penalty(const TwoFactorParams& p, const MarketPriceOfRisk& mpr);

// Relative-error aggregation of a filter run against its quotes.
struct ContractErrorStats {
  double mean = 0.0;
  double stddev = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  long count = 0;
};

struct ErrorReport {
  double overall_mean = 0.0;
  std::vector<double> per_date_mean;  // aligned with quotes.dates; 0 when a date has no quotes
  std::map<int, ContractErrorStats> per_contract;
};

// Aggregates the filtered relative errors |model - obs| / obs: per-contract
// mean, standard deviation (n-1) and quartiles (linear interpolation),
// per-date means, and the overall mean across all quotes.
ErrorReport relative_errors(const FilterOutput& output, const QuoteSeries& quotes);

struct CalibrationResult {
  TwoFactorParams params;
  MarketPriceOfRisk mpr;
  std::vector<double> ls_trajectory;  // best LS + penalty per generation
  std::vector<double> ml_trajectory;  // best negative log-likelihood + penalty
  double final_ls = 0.0;              // LS error of the filter at the best point
  double final_log_likelihood = 0.0;
  ErrorReport errors;
  int generations = 0;  // total DE generations across stages
  std::uint64_t seed = 0;
};

// Staged calibration: stage 1 minimizes the least-squares criterion plus
// penalty; stage 2 re-seeds the population around the stage-1 best (Gaussian
// jitter, 10% of the box width) and minimizes the negative log-likelihood
// plus penalty. Candidates where the filter fails score +infinity; the run
// itself never aborts on a bad candidate. ml_generations = 0 skips stage 2.
// The returned parameters always satisfy the full constraint set (including
// the kappa ordering): if the raw optimizer best is infeasible, the best
// feasible candidate encountered takes its place, and a search that never
// touched the feasible region throws numerical_error.
CalibrationResult calibrate(const QuoteSeries& quotes, const CalibrationConfig& config);

}  // namespace polyfwd
