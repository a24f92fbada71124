#include "polyfwd/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "polyfwd/errors.hpp"
#include "polyfwd/rng.hpp"

namespace polyfwd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kConvergenceWindow = 25;

// Fold a point into the box by reflection at the violated bound; falls back
// to clamping if a degenerate box keeps bouncing.
void reflect_into_box(Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi) {
  for (Eigen::Index d = 0; d < v.size(); ++d) {
    double x = v[d];
    for (int iter = 0; iter < 64 && (x < lo[d] || x > hi[d]); ++iter) {
      if (x < lo[d]) x = lo[d] + (lo[d] - x);
      if (x > hi[d]) x = hi[d] - (x - hi[d]);
    }
    v[d] = std::clamp(x, lo[d], hi[d]);
  }
}

// Index of the best (smallest) objective; ties resolve to the lowest index so
// the result never depends on evaluation order.
int best_index(const std::vector<double>& f) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(f.size()); ++i) {
    if (f[i] < f[best]) best = i;
  }
  return best;
}

}  // namespace

DEResult differential_evolution(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const DEConfig& config) {
  const Eigen::Index dim = config.lower.size();
  if (dim < 1 || config.upper.size() != dim) {
    throw std::invalid_argument("differential_evolution: bounds must be nonempty and aligned");
  }
  for (Eigen::Index d = 0; d < dim; ++d) {
    if (!std::isfinite(config.lower[d]) || !std::isfinite(config.upper[d]) ||
        !(config.lower[d] < config.upper[d])) {
      throw std::invalid_argument(
          "differential_evolution: bounds must be finite with lower < upper");
    }
  }
  const int np = config.population > 0 ? config.population : 10 * static_cast<int>(dim);
  if (np < 10) throw std::invalid_argument("differential_evolution: population must be >= 10");
  if (config.max_generations < 0 || !(config.cr >= 0.0 && config.cr <= 1.0) ||
      !(config.f > 0.0 && config.f <= 2.0)) {
    throw std::invalid_argument("differential_evolution: bad CR, F, or generation count");
  }

  rng::Xoshiro256pp gen(config.seed);
  auto uniform_int = [&](int n) {  // unbiased draw from {0, ..., n-1}
    const std::uint64_t bound = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % static_cast<std::uint64_t>(n);
    std::uint64_t r;
    do {
      r = gen();
    } while (r >= bound);
    return static_cast<int>(r % static_cast<std::uint64_t>(n));
  };

  // Initial population: caller-provided columns first, uniform fill after.
  std::vector<Eigen::VectorXd> pop(static_cast<size_t>(np));
  const int provided = static_cast<int>(std::min<Eigen::Index>(config.initial.cols(), np));
  if (config.initial.cols() > 0 && config.initial.rows() != dim) {
    throw std::invalid_argument("differential_evolution: initial points have wrong dimension");
  }
  for (int i = 0; i < provided; ++i) {
    Eigen::VectorXd v = config.initial.col(i);
    reflect_into_box(v, config.lower, config.upper);
    pop[static_cast<size_t>(i)] = v;
  }
  for (int i = provided; i < np; ++i) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      v[d] = config.lower[d] + gen.uniform01() * (config.upper[d] - config.lower[d]);
    }
    pop[static_cast<size_t>(i)] = v;
  }

  std::vector<double> fitness(static_cast<size_t>(np));
  bool any_finite = false;
  for (int i = 0; i < np; ++i) {
    fitness[static_cast<size_t>(i)] = objective(pop[static_cast<size_t>(i)]);
    any_finite = any_finite || std::isfinite(fitness[static_cast<size_t>(i)]);
  }
  if (!any_finite) {
    throw numerical_error(
        "differential_evolution: objective non-finite on the entire initial population");
  }

  DEResult result;
  int best = best_index(fitness);
  result.trajectory.push_back(fitness[static_cast<size_t>(best)]);

  std::vector<Eigen::VectorXd> trials(static_cast<size_t>(np));
  for (int g = 0; g < config.max_generations; ++g) {
    // Build every trial before evaluating any of them.
    for (int i = 0; i < np; ++i) {
      int a, b, c;
      do { a = uniform_int(np); } while (a == i);
      do { b = uniform_int(np); } while (b == i || b == a);
      do { c = uniform_int(np); } while (c == i || c == a || c == b);
      Eigen::VectorXd v = pop[static_cast<size_t>(a)] +
                          config.f * (pop[static_cast<size_t>(b)] - pop[static_cast<size_t>(c)]);
      reflect_into_box(v, config.lower, config.upper);
      Eigen::VectorXd trial = pop[static_cast<size_t>(i)];
      const int jrand = uniform_int(static_cast<int>(dim));
      for (Eigen::Index d = 0; d < dim; ++d) {
        if (d == jrand || gen.uniform01() < config.cr) trial[d] = v[d];
      }
      trials[static_cast<size_t>(i)] = std::move(trial);
    }
    // Evaluations are independent of each other; greedy selection per index.
    for (int i = 0; i < np; ++i) {
      const double ft = objective(trials[static_cast<size_t>(i)]);
      if (ft <= fitness[static_cast<size_t>(i)]) {
        fitness[static_cast<size_t>(i)] = ft;
        pop[static_cast<size_t>(i)] = trials[static_cast<size_t>(i)];
      }
    }
    best = best_index(fitness);
    result.trajectory.push_back(fitness[static_cast<size_t>(best)]);
    result.generations = g + 1;

    if (config.tol >= 0.0 &&
        static_cast<int>(result.trajectory.size()) > kConvergenceWindow) {
      const double then =
          result.trajectory[result.trajectory.size() - 1 - kConvergenceWindow];
      if (then - result.trajectory.back() <= config.tol) break;
    }
  }

  result.best = pop[static_cast<size_t>(best)];
  result.best_objective = fitness[static_cast<size_t>(best)];
  return result;
}

const char* const kCalibrationNames[kCalibrationDim] = {
    "c",       "alpha",   "beta",     "kappa_Z",  "kappa_Y", "sigma_Z", "sigma_Y",
    "rho",     "lambda_Z", "lambda_Y", "gamma_Z", "gamma_Y", "z0",      "y0"};

Eigen::VectorXd calibration_vector(const TwoFactorParams& p, const MarketPriceOfRisk& mpr) {
  Eigen::VectorXd v(kCalibrationDim);
  v << p.c, p.alpha, p.beta, p.kappa_z, p.kappa_y, p.sigma_z, p.sigma_y, p.rho,
      mpr.lambda_z, mpr.lambda_y, mpr.gamma_z, mpr.gamma_y, p.z0, p.y0;
  return v;
}

void calibration_unpack(const Eigen::VectorXd& v, TwoFactorParams& p,
                        MarketPriceOfRisk& mpr) {
  if (v.size() != kCalibrationDim) {
    throw std::invalid_argument("calibration_unpack: expected 14 entries");
  }
  p.c = v[0];
  p.alpha = v[1];
  p.beta = v[2];
  p.kappa_z = v[3];
  p.kappa_y = v[4];
  p.sigma_z = v[5];
  p.sigma_y = v[6];
  p.rho = v[7];
  mpr.lambda_z = v[8];
  mpr.lambda_y = v[9];
  mpr.gamma_z = v[10];
  mpr.gamma_y = v[11];
  p.z0 = v[12];
  p.y0 = v[13];
}

CalibrationConfig CalibrationConfig::defaults() {
  CalibrationConfig cfg;
  cfg.lower.resize(kCalibrationDim);
  cfg.upper.resize(kCalibrationDim);
  // Order: c, alpha, beta, kappa_Z, kappa_Y, sigma_Z, sigma_Y, rho,
  //        lambda_Z, lambda_Y, gamma_Z, gamma_Y, z0, y0.
  cfg.lower << 1e-6, 1e-6, 0.0, 0.0, 0.0, 1e-4, 1e-4, -0.999,
      -0.999, -0.999, -0.999, -0.999, -10.0, -10.0;
  cfg.upper << 50.0, 50.0, 50.0, 1.0, 1.0, 5.0, 5.0, 0.999,
      0.999, 0.999, 0.999, 0.999, 10.0, 10.0;
  return cfg;
}

void validate_config(const CalibrationConfig& config) {
  if (config.lower.size() != kCalibrationDim || config.upper.size() != kCalibrationDim) {
    throw std::invalid_argument("calibration config: bounds must have 14 entries");
  }
  for (int d = 0; d < kCalibrationDim; ++d) {
    if (!std::isfinite(config.lower[d]) || !std::isfinite(config.upper[d]) ||
        !(config.lower[d] < config.upper[d])) {
      throw std::invalid_argument("calibration config: bounds must be finite, lower < upper");
    }
  }
  const int np = config.population > 0 ? config.population : 10 * kCalibrationDim;
  if (np < 10) throw std::invalid_argument("calibration config: population must be >= 10");
  if (config.ls_generations < 0 || config.ml_generations < 0 || config.max_generations < 0) {
    throw std::invalid_argument("calibration config: generation counts must be >= 0");
  }
}

double constraint_penalty(const TwoFactorParams& p, const MarketPriceOfRisk& mpr) {
  const bool ok = validate_params(p, /*calibration_constraints=*/true).empty() &&
                  validate_params(mpr).empty();
  if (ok) return 0.0;

  // Total violation magnitude, mirroring the validated constraint set.
  double viol = 0.0;
  for (double f : {p.c, p.alpha, p.beta, p.kappa_z, p.kappa_y, p.sigma_z, p.sigma_y,
                   p.rho, p.z0, p.y0, mpr.lambda_z, mpr.lambda_y, mpr.gamma_z,
                   mpr.gamma_y}) {
    if (!std::isfinite(f)) viol += 1.0;
  }
  auto shortfall = [](double lhs, double rhs) {  // how far lhs falls below rhs
    return std::max(0.0, rhs - lhs);
  };
  viol += shortfall(p.c, 0.0);
  viol += shortfall(p.alpha, 0.0);
  viol += shortfall(p.beta, 0.0);
  viol += shortfall(p.sigma_z, 0.0);
  viol += shortfall(p.sigma_y, 0.0);
  viol += std::max(0.0, std::abs(p.rho) - 1.0);
  viol += shortfall(p.kappa_z, 0.0);
  viol += shortfall(p.kappa_y, p.kappa_z);
  viol += std::max(0.0, p.kappa_y - 1.0);
  return 1e6 * (1.0 + viol);
}

ErrorReport relative_errors(const FilterOutput& output, const QuoteSeries& quotes) {
  if (output.relative_errors.size() != quotes.dates.size()) {
    throw std::invalid_argument("relative_errors: output and quotes are not aligned");
  }
  ErrorReport report;
  report.per_date_mean.assign(quotes.dates.size(), 0.0);

  std::map<int, std::vector<double>> per_contract;
  double total = 0.0;
  long total_n = 0;
  for (size_t k = 0; k < quotes.dates.size(); ++k) {
    double date_sum = 0.0;
    long date_n = 0;
    for (const auto& [j, err] : output.relative_errors[k]) {
      per_contract[j].push_back(err);
      date_sum += err;
      ++date_n;
      total += err;
      ++total_n;
    }
    if (date_n > 0) report.per_date_mean[k] = date_sum / static_cast<double>(date_n);
  }
  report.overall_mean = total_n > 0 ? total / static_cast<double>(total_n) : 0.0;

  auto quantile = [](const std::vector<double>& sorted, double q) {
    // Linear interpolation between order statistics (the common "type 7").
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<size_t>(std::floor(h));
    if (i + 1 >= sorted.size()) return sorted.back();
    return sorted[i] + (h - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);
  };

  for (auto& [j, errs] : per_contract) {
    ContractErrorStats stats;
    stats.count = static_cast<long>(errs.size());
    const double n = static_cast<double>(errs.size());
    const double mean = std::accumulate(errs.begin(), errs.end(), 0.0) / n;
    stats.mean = mean;
    if (errs.size() > 1) {
      double ss = 0.0;
      for (double e : errs) ss += (e - mean) * (e - mean);
      stats.stddev = std::sqrt(ss / (n - 1.0));
    }
    std::sort(errs.begin(), errs.end());
    stats.q25 = quantile(errs, 0.25);
    stats.median = quantile(errs, 0.5);
    stats.q75 = quantile(errs, 0.75);
    report.per_contract[j] = stats;
  }
  return report;
}

CalibrationResult calibrate(const QuoteSeries& quotes, const CalibrationConfig& config) {
  validate_config(config);
  validate_quotes(quotes);
  const NoiseModel noise = noise_levels(quotes);

  // Best feasible candidate seen during a stage. The DE best can in principle
  // sit at an infeasible point (the penalty is additive, and a wild feasible
  // point can score worse than a mildly infeasible one), but the returned
  // parameters must always satisfy the constraint set, so each stage tracks
  // its feasible incumbent as a fallback. Tracking the running minimum keeps
  // the result independent of evaluation order.
  struct FeasibleBest {
    double value = kInf;
    Eigen::VectorXd point;
  };
  FeasibleBest ls_feasible;
  FeasibleBest ml_feasible;

  enum class Criterion { ls, ml };
  auto objective = [&](Criterion crit, FeasibleBest* track) {
    return [&, crit, track](const Eigen::VectorXd& v) -> double {
      TwoFactorParams p;
      MarketPriceOfRisk mpr;
      calibration_unpack(v, p, mpr);
      const double pen = constraint_penalty(p, mpr);
      double base;
      try {
        const FilterOutput out =
            run_filter(p, mpr, quotes, noise, config.ls_spread_weighted);
        base = crit == Criterion::ls ? out.ls_error : -out.log_likelihood;
      } catch (const std::exception&) {
        return kInf;
      }
      if (pen == 0.0 && std::isfinite(base) && base < track->value) {
        track->value = base;
        track->point = v;
      }
      return base + pen;
    };
  };

  DEConfig de;
  de.lower = config.lower;
  de.upper = config.upper;
  de.population = config.population > 0 ? config.population : 10 * kCalibrationDim;
  de.cr = config.cr;
  de.f = config.f;
  de.tol = config.tol;

  // Stage 1: least squares.
  de.seed = rng::stream_seed(config.seed, 0);
  de.max_generations = std::min(config.ls_generations, config.max_generations);
  const DEResult ls = differential_evolution(objective(Criterion::ls, &ls_feasible), de);

  CalibrationResult result;
  result.seed = config.seed;
  result.ls_trajectory = ls.trajectory;
  result.generations = ls.generations;
  Eigen::VectorXd best = ls.best;

  // Stage 2: maximum likelihood, population re-seeded around the stage-1 best
  // with Gaussian jitter of 10% of the box width.
  if (config.ml_generations > 0) {
    rng::NormalSampler jitter(rng::stream_seed(config.seed, 2));
    Eigen::MatrixXd initial(kCalibrationDim, de.population);
    initial.col(0) = best;
    const Eigen::VectorXd width = 0.1 * (config.upper - config.lower);
    for (int i = 1; i < de.population; ++i) {
      Eigen::VectorXd v = best;
      for (int d = 0; d < kCalibrationDim; ++d) v[d] += width[d] * jitter();
      initial.col(i) = v;  // reflected into the box by the optimizer
    }
    de.initial = initial;
    de.seed = rng::stream_seed(config.seed, 1);
    de.max_generations = std::min(config.ml_generations, config.max_generations);
    const DEResult ml = differential_evolution(objective(Criterion::ml, &ml_feasible), de);
    result.ml_trajectory = ml.trajectory;
    result.generations += ml.generations;
    best = ml.best;
  }

  // Enforce feasibility of the returned point: prefer the final stage's best
  // feasible candidate, then stage 1's, and fail if the search never touched
  // the feasible region at all.
  {
    TwoFactorParams p;
    MarketPriceOfRisk mpr;
    calibration_unpack(best, p, mpr);
    if (constraint_penalty(p, mpr) > 0.0) {
      if (config.ml_generations > 0 && std::isfinite(ml_feasible.value)) {
        best = ml_feasible.point;
      } else if (std::isfinite(ls_feasible.value)) {
        best = ls_feasible.point;
      } else {
        throw numerical_error(
            "calibrate: no feasible candidate encountered; widen bounds or raise the budget");
      }
    }
  }

  calibration_unpack(best, result.params, result.mpr);
  const FilterOutput out =
      run_filter(result.params, result.mpr, quotes, noise, config.ls_spread_weighted);
  result.final_ls = out.ls_error;
  result.final_log_likelihood = out.log_likelihood;
  result.errors = relative_errors(out, quotes);
  return result;
}

}  // namespace polyfwd
