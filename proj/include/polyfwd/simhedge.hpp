#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "polyfwd/model.hpp"

namespace polyfwd {

// ---------------------------------------------------------------------------
// Monte Carlo forward surfaces and the rolling risk-minimizing hedge.
// ---------------------------------------------------------------------------

enum class SimMeasure { p_with_mpr, q };
enum class ModelSpec { two_factor, three_factor };
enum class Rebalance { monthly, every_step };

struct SimConfig {
  int horizon = 2;          // whole years
  int steps_per_year = 120;
  int n_paths = 5000;
  std::uint64_t seed = 1;
  SimMeasure measure = SimMeasure::p_with_mpr;
  ModelSpec spec = ModelSpec::two_factor;
  int nearby_count = 1;     // number of rolling contracts priced on the surface
};

void validate_config(const SimConfig& config);

// --- State simulation -------------------------------------------------------

// Euler scheme for the two-factor state. Each path uses an RNG stream derived
// from (seed, path index), so path i is the same no matter how or in what
// order paths are generated. Under SimMeasure::q the market price of risk is
// ignored (lambda = gamma = 0). The callback receives (path index, states),
// states being a (steps+1) x 2 matrix on the uniform grid.
void for_each_path(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                   const SimConfig& config,
                   const std::function<void(int, const Eigen::MatrixXd&)>& fn);

std::vector<Eigen::MatrixXd> simulate_paths(const TwoFactorParams& p,
                                            const MarketPriceOfRisk& mpr,
                                            const SimConfig& config);

// Clamp accounting for the three-factor correlation boundary.
struct ClampStats {
  long events = 0;
  long steps = 0;
  double rate() const { return steps > 0 ? static_cast<double>(events) / static_cast<double>(steps) : 0.0; }
};

// Three-factor Euler scheme under Q only (SimMeasure::p_with_mpr is
// rejected). R is clamped into [-1 + 1e-10, 1 - 1e-10] before each
// sqrt(1 - R^2); clamp events are counted per step.
ClampStats for_each_path(const ThreeFactorParams& p, const SimConfig& config,
                         const std::function<void(int, const Eigen::MatrixXd&)>& fn);

struct Sim3Result {
  std::vector<Eigen::MatrixXd> paths;
  ClampStats clamps;
};

Sim3Result simulate_paths(const ThreeFactorParams& p, const SimConfig& config);

// Streaming clamp-rate measurement that never stores paths.
ClampStats boundary_clamp_stats(const ThreeFactorParams& p, const SimConfig& config);

// --- Forward surfaces -------------------------------------------------------

// Cache of the vectors u[k] = exp((k / steps_per_year) G) w01 for
// k = 0 .. max_years * steps_per_year, where w01 is the unit-delivery weight
// vector. Every contract price on the uniform grid is H(x) . u[k] for some
// integer k, so this table is the whole surface machinery. Built once,
// read-only afterwards.
class SurfaceCache {
 public:
  SurfaceCache(const TwoFactorParams& p, int steps_per_year, int max_years);
  SurfaceCache(const ThreeFactorParams& p, int steps_per_year, int max_years);

  const Eigen::VectorXd& u(int k) const;
  int steps_per_year() const { return spy_; }
  int max_years() const { return years_; }
  ModelSpec spec() const { return spec_; }
  const TwoFactorParams& two_factor() const;

 private:
  void build(const Eigen::MatrixXd& g, const Eigen::VectorXd& p_s);
  ModelSpec spec_;
  int spy_ = 0;
  int years_ = 0;
  std::optional<TwoFactorParams> p2_;
  std::vector<Eigen::VectorXd> u_;
};

struct PathSurface {
  double dt = 0.0;
  Eigen::VectorXd times;   // (steps+1)
  Eigen::MatrixXd states;  // (steps+1) x d
  Eigen::MatrixXd nearby;  // (steps+1) x L rolling-contract prices
};

// Prices the rolling nearby contracts along one simulated path: at grid
// point m, the l-th nearby delivers over the l-th calendar year ahead and its
// price is H(x_m) . u[l * spy - (m mod spy)].
PathSurface forward_surface(const Eigen::MatrixXd& states, const SurfaceCache& cache,
                            int nearby_count);
PathSurface forward_surface(const Eigen::MatrixXd& states, const TwoFactorParams& p,
                            const SimConfig& config);
PathSurface forward_surface(const Eigen::MatrixXd& states, const ThreeFactorParams& p,
                            const SimConfig& config);

// Deterministic per-cell mean and standard deviation of the nearby prices
// across all simulated paths (fixed path order).
struct SurfaceSummary {
  Eigen::VectorXd times;
  Eigen::MatrixXd mean;    // (steps+1) x L
  Eigen::MatrixXd stddev;  // n-1 normalization
  int n_paths = 0;
};

SurfaceSummary summarize_surfaces(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                                  const SimConfig& config);
SurfaceSummary summarize_surfaces(const ThreeFactorParams& p, const SimConfig& config);

// --- Hedging ----------------------------------------------------------------

// Locally risk-minimizing hedge ratio for the claim delivering over
// [claim_year, claim_year + 1], traded through the contract delivering over
// [k, k+1], at time t in [k-1, k):
//
//   xi = w01' exp((claim_year - t) G') Sigma(x) exp((k - t) G) w01
//        / w01' exp((k - t) G') Sigma(x) exp((k - t) G) w01
//
// computed under the Q generator. Denominator below 1e-14 raises
// degenerate_variance_error.
double hedge_ratio(const TwoFactorParams& p, double t, const Eigen::Vector2d& x, int k,
                   int claim_year);

struct HedgeLeg {
  double time = 0.0;
  int contract = 0;            // active contract k, delivery [k, k+1]
  double xi = 0.0;
  double price = 0.0;          // instrument price at this rebalancing date
  double gain_increment = 0.0; // xi * (instrument price move to the next date)
};

struct HedgeRecord {
  std::vector<HedgeLeg> legs;
  std::vector<double> cost_path;  // claim value minus accumulated gain, per date + terminal
  double f_initial = 0.0;         // claim price at t = 0
  double f_terminal = 0.0;        // claim value at t = claim_year
  double cumulative_gain = 0.0;
  double hedged_exposure = 0.0;   // (F_T - F_0 - G_T) / F_0
  double unhedged_exposure = 0.0; // (F_T - F_0) / F_0
};

// Rolls the hedge through the yearly contracts: during year k the position
// sits in contract k, is marked at every rebalancing date, and is closed at
// the year boundary where the next contract is opened. Gains accrue as
// left-point increments xi_t (P_{t'} - P_t). In the final year the instrument
// equals the claim and xi is exactly 1. A degenerate 0/0 ratio (no variance
// anywhere) yields xi = 0.
HedgeRecord run_rolling_hedge(const PathSurface& surface, const SurfaceCache& cache,
                              int claim_year, Rebalance rebalance);
HedgeRecord run_rolling_hedge(const PathSurface& surface, const TwoFactorParams& p,
                              int claim_year, Rebalance rebalance);

// --- Exposure statistics ----------------------------------------------------

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<long> counts;  // 100 equal-width bins
};

struct ExposureStats {
  long m = 0;  // sample size
  double hedged_std = 0.0;
  double hedged_skew = 0.0;  // m3 / m2^(3/2)
  double unhedged_std = 0.0;
  double unhedged_skew = 0.0;
  bool hedged_degenerate = false;    // constant sample: std 0, skew reported 0
  bool unhedged_degenerate = false;
  Histogram hedged_hist;
  Histogram unhedged_hist;
};

ExposureStats exposure_stats(const std::vector<double>& hedged,
                             const std::vector<double>& unhedged);
ExposureStats exposure_stats(const std::vector<HedgeRecord>& records);

// Simulates n_paths states to the largest horizon once and hedges every
// requested horizon on each path. config.horizon is overridden by
// max(horizons); config.measure selects the path dynamics while the hedge
// ratio always uses the Q generator.
std::map<int, ExposureStats> run_hedge_study(const TwoFactorParams& p,
                                             const MarketPriceOfRisk& mpr,
                                             const SimConfig& config,
                                             const std::vector<int>& horizons,
                                             Rebalance rebalance);

}  // namespace polyfwd
