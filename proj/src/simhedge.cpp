#include "polyfwd/simhedge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "polyfwd/errors.hpp"
#include "polyfwd/linalg.hpp"
#include "polyfwd/qkf.hpp"
#include "polyfwd/rng.hpp"

namespace polyfwd {

namespace {

constexpr double kClampLo = -1.0 + 1e-10;
constexpr double kClampHi = 1.0 - 1e-10;
constexpr double kVarianceFloor = 1e-14;

int total_steps(const SimConfig& c) { return c.horizon * c.steps_per_year; }

}  // namespace

void validate_config(const SimConfig& config) {
  if (config.horizon < 1) throw std::invalid_argument("sim config: horizon must be >= 1 year");
  if (config.steps_per_year < 12) {
    throw std::invalid_argument("sim config: steps_per_year must be >= 12");
  }
  if (config.n_paths < 1) throw std::invalid_argument("sim config: n_paths must be >= 1");
  if (config.nearby_count < 1) {
    throw std::invalid_argument("sim config: nearby_count must be >= 1");
  }
  if (config.spec == ModelSpec::three_factor && config.measure == SimMeasure::p_with_mpr) {
    throw unsupported_measure_error(
        "sim config: the three-factor specification simulates under Q only");
  }
}

void for_each_path(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                   const SimConfig& config,
                   const std::function<void(int, const Eigen::MatrixXd&)>& fn) {
  validate_config(config);
  if (config.spec != ModelSpec::two_factor) {
    throw std::invalid_argument("for_each_path: config requests the three-factor spec");
  }
  const MarketPriceOfRisk effective =
      config.measure == SimMeasure::q ? MarketPriceOfRisk{} : mpr;
  const int n = total_steps(config);
  const Discretization disc = discretize(p, effective, 1.0 / config.steps_per_year);

  Eigen::MatrixXd states(n + 1, 2);
  for (int path = 0; path < config.n_paths; ++path) {
    rng::NormalSampler draw(config.seed, static_cast<std::uint64_t>(path));
    Eigen::Vector2d x(p.z0, p.y0);
    states.row(0) = x;
    for (int j = 1; j <= n; ++j) {
      const Eigen::Vector2d eps(draw(), draw());
      x = disc.b + disc.d * x + disc.k * eps;
      states.row(j) = x;
    }
    fn(path, states);
  }
}

std::vector<Eigen::MatrixXd> simulate_paths(const TwoFactorParams& p,
                                            const MarketPriceOfRisk& mpr,
                                            const SimConfig& config) {
  std::vector<Eigen::MatrixXd> paths;
  paths.reserve(static_cast<size_t>(config.n_paths));
  for_each_path(p, mpr, config,
                [&paths](int, const Eigen::MatrixXd& s) { paths.push_back(s); });
  return paths;
}

ClampStats for_each_path(const ThreeFactorParams& p, const SimConfig& config,
                         const std::function<void(int, const Eigen::MatrixXd&)>& fn) {
  validate_config(config);
  if (config.spec != ModelSpec::three_factor) {
    throw std::invalid_argument("for_each_path: config requests the two-factor spec");
  }
  const int n = total_steps(config);
  const double dt = 1.0 / config.steps_per_year;
  const double sqdt = std::sqrt(dt);

  ClampStats clamps;
  Eigen::MatrixXd states(n + 1, 3);
  for (int path = 0; path < config.n_paths; ++path) {
    rng::NormalSampler draw(config.seed, static_cast<std::uint64_t>(path));
    double z = p.z0, y = p.y0, r = p.r0;
    states.row(0) << z, y, r;
    for (int j = 1; j <= n; ++j) {
      const double e1 = draw(), e2 = draw(), e3 = draw();
      // The clamped value feeds the correlation mixing and both sqrt(1 - R^2)
      // factors; the drift sees the raw state, which mean-reverts inward.
      double rb = r;
      if (rb < kClampLo || rb > kClampHi) {
        rb = std::clamp(rb, kClampLo, kClampHi);
        ++clamps.events;
      }
      const double sq = std::sqrt(1.0 - rb * rb);
      const double zn = z - p.kappa_z * z * dt + p.sigma_z * sqdt * e1;
      const double yn = y + p.kappa_y * (z - y) * dt + p.sigma_y * sqdt * (rb * e1 + sq * e2);
      const double rn = r + p.kappa_r * (p.theta_r - r) * dt + p.sigma_r * sq * sqdt * e3;
      z = zn;
      y = yn;
      r = rn;
      states.row(j) << z, y, r;
      ++clamps.steps;
    }
    fn(path, states);
  }
  return clamps;
}

Sim3Result simulate_paths(const ThreeFactorParams& p, const SimConfig& config) {
  Sim3Result result;
  result.paths.reserve(static_cast<size_t>(config.n_paths));
  result.clamps = for_each_path(
      p, config, [&result](int, const Eigen::MatrixXd& s) { result.paths.push_back(s); });
  return result;
}

ClampStats boundary_clamp_stats(const ThreeFactorParams& p, const SimConfig& config) {
  return for_each_path(p, config, [](int, const Eigen::MatrixXd&) {});
}

// --- SurfaceCache -----------------------------------------------------------

SurfaceCache::SurfaceCache(const TwoFactorParams& p, int steps_per_year, int max_years)
    : spec_(ModelSpec::two_factor), spy_(steps_per_year), years_(max_years), p2_(p) {
  if (steps_per_year < 1 || max_years < 1) {
    throw std::invalid_argument("surface cache: steps_per_year and max_years must be >= 1");
  }
  build(generator_matrix(p), spot_coordinates(p));
}

SurfaceCache::SurfaceCache(const ThreeFactorParams& p, int steps_per_year, int max_years)
    : spec_(ModelSpec::three_factor), spy_(steps_per_year), years_(max_years) {
  if (steps_per_year < 1 || max_years < 1) {
    throw std::invalid_argument("surface cache: steps_per_year and max_years must be >= 1");
  }
  build(generator_matrix(p), spot_coordinates(p));
}

void SurfaceCache::build(const Eigen::MatrixXd& g, const Eigen::VectorXd& p_s) {
  const Eigen::VectorXd w01 = expm_and_integral(g, 1.0).integral * p_s;
  const int k_max = years_ * spy_;
  u_.resize(static_cast<size_t>(k_max) + 1);
  for (int k = 0; k <= k_max; ++k) {
    u_[static_cast<size_t>(k)] =
        expm(g, static_cast<double>(k) / static_cast<double>(spy_)) * w01;
  }
}

const Eigen::VectorXd& SurfaceCache::u(int k) const {
  if (k < 0 || k >= static_cast<int>(u_.size())) {
    throw std::invalid_argument("surface cache: maturity index out of range");
  }
  return u_[static_cast<size_t>(k)];
}

const TwoFactorParams& SurfaceCache::two_factor() const {
  if (!p2_) throw std::invalid_argument("surface cache: built for the three-factor spec");
  return *p2_;
}

// --- Surfaces ---------------------------------------------------------------

PathSurface forward_surface(const Eigen::MatrixXd& states, const SurfaceCache& cache,
                            int nearby_count) {
  if (nearby_count < 1) throw std::invalid_argument("forward_surface: nearby_count >= 1");
  if (nearby_count > cache.max_years()) {
    throw std::invalid_argument("forward_surface: cache too short for nearby_count");
  }
  const int spy = cache.steps_per_year();
  const auto rows = static_cast<int>(states.rows());
  PathSurface surf;
  surf.dt = 1.0 / spy;
  surf.times.resize(rows);
  surf.states = states;
  surf.nearby.resize(rows, nearby_count);
  for (int m = 0; m < rows; ++m) {
    surf.times[m] = static_cast<double>(m) / static_cast<double>(spy);
    const Eigen::VectorXd h = basis_eval(states.row(m).transpose());
    const int frac_steps = m % spy;
    for (int l = 1; l <= nearby_count; ++l) {
      surf.nearby(m, l - 1) = h.dot(cache.u(l * spy - frac_steps));
    }
  }
  return surf;
}

PathSurface forward_surface(const Eigen::MatrixXd& states, const TwoFactorParams& p,
                            const SimConfig& config) {
  const SurfaceCache cache(p, config.steps_per_year, config.nearby_count);
  return forward_surface(states, cache, config.nearby_count);
}

PathSurface forward_surface(const Eigen::MatrixXd& states, const ThreeFactorParams& p,
                            const SimConfig& config) {
  const SurfaceCache cache(p, config.steps_per_year, config.nearby_count);
  return forward_surface(states, cache, config.nearby_count);
}

namespace {

template <typename Params>
SurfaceSummary summarize_impl(const Params& p, const MarketPriceOfRisk& mpr,
                              const SimConfig& config) {
  const SurfaceCache cache(p, config.steps_per_year, config.nearby_count);
  const int rows = total_steps(config) + 1;
  SurfaceSummary summary;
  summary.mean = Eigen::MatrixXd::Zero(rows, config.nearby_count);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(rows, config.nearby_count);
  int count = 0;

  auto accumulate = [&](int, const Eigen::MatrixXd& states) {
    const PathSurface surf = forward_surface(states, cache, config.nearby_count);
    ++count;
    // Welford update per cell; path order is fixed, so the reduction is
    // deterministic.
    const Eigen::MatrixXd delta = surf.nearby - summary.mean;
    summary.mean += delta / static_cast<double>(count);
    m2.array() += delta.array() * (surf.nearby - summary.mean).array();
    if (count == 1) summary.times = surf.times;
  };

  if constexpr (std::is_same_v<Params, TwoFactorParams>) {
    for_each_path(p, mpr, config, accumulate);
  } else {
    for_each_path(p, config, accumulate);
  }

  summary.n_paths = count;
  summary.stddev = count > 1
                       ? (m2 / static_cast<double>(count - 1)).array().sqrt().matrix().eval()
                       : Eigen::MatrixXd::Zero(rows, config.nearby_count).eval();
  return summary;
}

}  // namespace

SurfaceSummary summarize_surfaces(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                                  const SimConfig& config) {
  return summarize_impl(p, mpr, config);
}

SurfaceSummary summarize_surfaces(const ThreeFactorParams& p, const SimConfig& config) {
  return summarize_impl(p, MarketPriceOfRisk{}, config);
}

// --- Hedging ----------------------------------------------------------------

double hedge_ratio(const TwoFactorParams& p, double t, const Eigen::Vector2d& x, int k,
                   int claim_year) {
  if (k < 1 || claim_year < 1 || k > claim_year) {
    throw std::invalid_argument("hedge_ratio: need 1 <= k <= claim_year");
  }
  if (!(t >= k - 1 && t < k)) {
    throw std::invalid_argument("hedge_ratio: t must lie in [k-1, k)");
  }
  const Eigen::MatrixXd g = generator_matrix(p);
  const Eigen::VectorXd w01 = expm_and_integral(g, 1.0).integral * spot_coordinates(p);
  const Eigen::VectorXd vi = expm(g, k - t) * w01;
  const Eigen::VectorXd vc = k == claim_year ? vi : (expm(g, claim_year - t) * w01).eval();
  const Eigen::MatrixXd sig = sigma_h(p, x);
  const Eigen::VectorXd svi = sig * vi;
  const double den = vi.dot(svi);
  if (den < kVarianceFloor) {
    throw degenerate_variance_error("hedge_ratio: instrument variance below tolerance");
  }
  return vc.dot(svi) / den;
}

HedgeRecord run_rolling_hedge(const PathSurface& surface, const SurfaceCache& cache,
                              int claim_year, Rebalance rebalance) {
  const TwoFactorParams& p = cache.two_factor();
  const int spy = cache.steps_per_year();
  const int steps = static_cast<int>(surface.states.rows()) - 1;
  if (claim_year < 1) throw std::invalid_argument("run_rolling_hedge: claim_year >= 1");
  if (claim_year * spy > steps) {
    throw std::invalid_argument("run_rolling_hedge: surface horizon shorter than the claim");
  }
  if (claim_year > cache.max_years()) {
    throw std::invalid_argument("run_rolling_hedge: cache too short for the claim");
  }
  int stride = 1;
  if (rebalance == Rebalance::monthly) {
    if (spy % 12 != 0) {
      throw std::invalid_argument(
          "run_rolling_hedge: monthly rebalancing needs steps_per_year divisible by 12");
    }
    stride = spy / 12;
  }

  HedgeRecord rec;
  rec.f_initial = basis_eval(surface.states.row(0).transpose()).dot(cache.u(claim_year * spy));
  if (!(rec.f_initial > 0.0)) {
    throw numerical_error("run_rolling_hedge: non-positive initial claim price");
  }

  double gain = 0.0;
  for (int m = 0; m < claim_year * spy; m += stride) {
    const int k = m / spy + 1;  // active contract: delivery [k, k+1]
    const Eigen::VectorXd h = basis_eval(surface.states.row(m).transpose());
    const Eigen::VectorXd& vi = cache.u(k * spy - m);
    const Eigen::VectorXd& vc = cache.u(claim_year * spy - m);
    const double claim_value = h.dot(vc);

    double xi;
    if (k == claim_year) {
      xi = 1.0;  // the instrument is the claim
    } else {
      const Eigen::MatrixXd sig = sigma_h(p, surface.states.row(m).transpose());
      const Eigen::VectorXd svi = sig * vi;
      const double den = vi.dot(svi);
      const double num = vc.dot(svi);
      if (den < kVarianceFloor) {
        if (std::abs(num) <= kVarianceFloor) {
          xi = 0.0;  // nothing to hedge: claim and instrument are both frozen
        } else {
          throw degenerate_variance_error(
              "run_rolling_hedge: instrument variance below tolerance");
        }
      } else {
        xi = num / den;
      }
    }

    const int m2 = m + stride;
    const double p_open = h.dot(vi);
    const double p_close =
        basis_eval(surface.states.row(m2).transpose()).dot(cache.u(k * spy - m2));
    const double increment = xi * (p_close - p_open);

    rec.legs.push_back({surface.times[m], k, xi, p_open, increment});
    rec.cost_path.push_back(claim_value - gain);
    gain += increment;
  }

  rec.f_terminal =
      basis_eval(surface.states.row(claim_year * spy).transpose()).dot(cache.u(0));
  rec.cost_path.push_back(rec.f_terminal - gain);
  rec.cumulative_gain = gain;
  rec.unhedged_exposure = (rec.f_terminal - rec.f_initial) / rec.f_initial;
  rec.hedged_exposure = (rec.f_terminal - rec.f_initial - gain) / rec.f_initial;
  return rec;
}

HedgeRecord run_rolling_hedge(const PathSurface& surface, const TwoFactorParams& p,
                              int claim_year, Rebalance rebalance) {
  const int spy = static_cast<int>(std::lround(1.0 / surface.dt));
  const SurfaceCache cache(p, spy, claim_year);
  return run_rolling_hedge(surface, cache, claim_year, rebalance);
}

// --- Exposure statistics ----------------------------------------------------

namespace {

void fill_moments(const std::vector<double>& sample, double& stddev, double& skew,
                  bool& degenerate, Histogram& hist) {
  const auto n = static_cast<double>(sample.size());
  double mean = 0.0;
  for (double v : sample) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, ss = 0.0;
  for (double v : sample) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    ss += d * d;
  }
  m2 /= n;
  m3 /= n;
  stddev = sample.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  if (m2 > 0.0) {
    skew = m3 / std::pow(m2, 1.5);
    degenerate = false;
  } else {
    skew = 0.0;
    degenerate = true;
  }

  const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
  hist.lo = *lo_it;
  hist.hi = *hi_it;
  hist.counts.assign(100, 0);
  const double width = hist.hi - hist.lo;
  for (double v : sample) {
    int bin = width > 0.0 ? static_cast<int>((v - hist.lo) / width * 100.0) : 0;
    bin = std::clamp(bin, 0, 99);
    ++hist.counts[static_cast<size_t>(bin)];
  }
}

}  // namespace

ExposureStats exposure_stats(const std::vector<double>& hedged,
                             const std::vector<double>& unhedged) {
  if (hedged.size() != unhedged.size() || hedged.size() < 2) {
    throw std::invalid_argument("exposure_stats: need M >= 2 aligned samples");
  }
  ExposureStats stats;
  stats.m = static_cast<long>(hedged.size());
  fill_moments(hedged, stats.hedged_std, stats.hedged_skew, stats.hedged_degenerate,
               stats.hedged_hist);
  fill_moments(unhedged, stats.unhedged_std, stats.unhedged_skew,
               stats.unhedged_degenerate, stats.unhedged_hist);
  return stats;
}

ExposureStats exposure_stats(const std::vector<HedgeRecord>& records) {
  std::vector<double> hedged, unhedged;
  hedged.reserve(records.size());
  unhedged.reserve(records.size());
  for (const auto& rec : records) {
    hedged.push_back(rec.hedged_exposure);
    unhedged.push_back(rec.unhedged_exposure);
  }
  return exposure_stats(hedged, unhedged);
}

std::map<int, ExposureStats> run_hedge_study(const TwoFactorParams& p,
                                             const MarketPriceOfRisk& mpr,
                                             const SimConfig& config,
                                             const std::vector<int>& horizons,
                                             Rebalance rebalance) {
  if (horizons.empty()) throw std::invalid_argument("run_hedge_study: no horizons");
  int max_h = 0;
  for (int h : horizons) {
    if (h < 1) throw std::invalid_argument("run_hedge_study: horizons must be >= 1");
    max_h = std::max(max_h, h);
  }
  SimConfig cfg = config;
  cfg.horizon = max_h;
  cfg.spec = ModelSpec::two_factor;
  validate_config(cfg);

  const SurfaceCache cache(p, cfg.steps_per_year, std::max(max_h, cfg.nearby_count));
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> exposures;
  for (int h : horizons) {
    exposures[h].first.reserve(static_cast<size_t>(cfg.n_paths));
    exposures[h].second.reserve(static_cast<size_t>(cfg.n_paths));
  }

  for_each_path(p, mpr, cfg, [&](int, const Eigen::MatrixXd& states) {
    const PathSurface surf = forward_surface(states, cache, cfg.nearby_count);
    for (int h : horizons) {
      const HedgeRecord rec = run_rolling_hedge(surf, cache, h, rebalance);
      exposures[h].first.push_back(rec.hedged_exposure);
      exposures[h].second.push_back(rec.unhedged_exposure);
    }
  });

  std::map<int, ExposureStats> out;
  for (const auto& [h, samples] : exposures) {
    out[h] = exposure_stats(samples.first, samples.second);
  }
  return out;
}

}  // namespace polyfwd
