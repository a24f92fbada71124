#include "polyfwd/qkf.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "polyfwd/errors.hpp"
#include "polyfwd/linalg.hpp"
#include "polyfwd/rng.hpp"

namespace polyfwd {

namespace {

const StructuralMatrices& sm2() {
  static const StructuralMatrices s = structural_matrices(2);
  return s;
}

constexpr double kDefaultAnchorDt = 1.0 / 12.0;

// Pieces of the augmented dynamics that depend only on (b, D, K), shared by
// every date of a regular grid.
struct AugmentedCore {
  Eigen::Vector2d b;
  Eigen::Matrix2d d;
  Eigen::Matrix2d sigma;     // K K^T
  Eigen::VectorXd b_tilde;   // 5
  Eigen::MatrixXd d_tilde;   // 5x5
  Eigen::MatrixXd fourth;    // 3x3 Gaussian fourth-moment block
};

AugmentedCore make_core(const Eigen::Vector2d& b, const Eigen::Matrix2d& d,
                        const Eigen::Matrix2d& k) {
  const auto& s = sm2();
  const Eigen::MatrixXd& h2 = s.selection;
  const Eigen::MatrixXd& g2 = s.duplication;
  const Eigen::MatrixXd& l2 = s.commutation;

  AugmentedCore core;
  core.b = b;
  core.d = d;
  core.sigma = k * k.transpose();

  core.b_tilde = Eigen::VectorXd::Zero(5);
  core.b_tilde.head(2) = b;
  core.b_tilde.tail(3) = h2 * vec(b * b.transpose() + core.sigma);

  core.d_tilde = Eigen::MatrixXd::Zero(5, 5);
  core.d_tilde.block(0, 0, 2, 2) = d;
  core.d_tilde.block(2, 0, 3, 2) =
      h2 * (Eigen::kroneckerProduct(b, d) + Eigen::kroneckerProduct(d, b));
  core.d_tilde.block(2, 2, 3, 3) = h2 * Eigen::kroneckerProduct(d, d) * g2;

  const Eigen::MatrixXd ss = Eigen::kroneckerProduct(core.sigma, core.sigma);
  core.fourth = h2 * ((Eigen::MatrixXd::Identity(4, 4) + l2) * ss) * h2.transpose();
  return core;
}

AugmentedDynamics dynamics_at(const AugmentedCore& core, const Eigen::Vector2d& x_prev) {
  const auto& h2 = sm2().selection;
  const Eigen::Vector2d mu = core.b + core.d * x_prev;
  const Eigen::MatrixXd gamma =
      Eigen::kroneckerProduct(Eigen::Matrix2d::Identity(), mu) +
      Eigen::kroneckerProduct(mu, Eigen::Matrix2d::Identity());

  AugmentedDynamics dyn;
  dyn.b_tilde = core.b_tilde;
  dyn.d_tilde = core.d_tilde;

  const Eigen::MatrixXd gs = gamma * core.sigma;        // 4x2
  const Eigen::MatrixXd bl = h2 * gs;                   // 3x2
  dyn.sigma_tilde = Eigen::MatrixXd::Zero(5, 5);
  dyn.sigma_tilde.block(0, 0, 2, 2) = core.sigma;
  dyn.sigma_tilde.block(0, 2, 2, 3) = bl.transpose();
  dyn.sigma_tilde.block(2, 0, 3, 2) = bl;
  dyn.sigma_tilde.block(2, 2, 3, 3) =
      h2 * (gs * gamma.transpose()) * h2.transpose() + core.fourth;
  return dyn;
}

Eigen::VectorXd monomials5(const Eigen::Vector2d& x) {
  Eigen::VectorXd m(5);
  m << x[0], x[1], x[0] * x[0], x[1] * x[0], x[1] * x[1];
  return m;
}

// Measurement pieces for one parameter vector: the Q generator, the unit
// delivery weight w01, the yearly shifts exp(jG), and per-fraction vectors
// exp(-frac G) w01, memoized because calendar grids repeat fractions.
class MeasurementCache {
 public:
  MeasurementCache(const TwoFactorParams& p, int j_max)
      : g_(generator_matrix(p)),
        w01_(expm_and_integral(g_, 1.0).integral * spot_coordinates(p)),
        e_j_(static_cast<size_t>(j_max) + 1) {
    e_j_[0] = Eigen::MatrixXd::Identity(kBasisDim2, kBasisDim2);
    for (size_t j = 1; j < e_j_.size(); ++j) {
      e_j_[j] = expm(g_, static_cast<double>(j));
    }
  }

  Eigen::VectorXd v(int j, double frac) {
    auto it = u_frac_.find(frac);
    if (it == u_frac_.end()) {
      it = u_frac_.emplace(frac, (expm(g_, -frac) * w01_).eval()).first;
    }
    return e_j_[static_cast<size_t>(j)] * it->second;
  }

  MeasurementMap map_for(double frac, const std::vector<int>& js) {
    MeasurementMap mm;
    mm.js = js;
    const auto n = static_cast<Eigen::Index>(js.size());
    mm.a.resize(n);
    mm.b_tilde.resize(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd row = v(js[static_cast<size_t>(i)], frac);
      mm.a[i] = row[0];
      mm.b_tilde.row(i) = row.tail(5);
    }
    return mm;
  }

 private:
  Eigen::MatrixXd g_;
  Eigen::VectorXd w01_;
  std::vector<Eigen::MatrixXd> e_j_;
  std::map<double, Eigen::VectorXd> u_frac_;
};

// Symmetrize and re-establish positive semidefiniteness the same way
// cholesky_psd does: fast LLT probe, eigenvalue floor at -1e-8 ||V||, then the
// smallest power-of-ten jitter that restores positive pivots.
Eigen::MatrixXd repair_covariance(const Eigen::MatrixXd& v_in, const char* what) {
  Eigen::MatrixXd v = 0.5 * (v_in + v_in.transpose());
  if (Eigen::LLT<Eigen::MatrixXd>(v).info() == Eigen::Success) return v;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -1e-8 * v.norm()) {
    throw not_psd_error(min_eig, std::string(what) +
                                     ": covariance indefinite beyond tolerance");
  }
  for (double eps = 1e-16; eps <= 1e2; eps *= 10.0) {
    Eigen::MatrixXd cand =
        v + eps * Eigen::MatrixXd::Identity(v.rows(), v.cols());
    if (Eigen::LLT<Eigen::MatrixXd>(cand).info() == Eigen::Success) return cand;
  }
  throw not_psd_error(min_eig, std::string(what) + ": jitter repair failed");
}

struct UpdateExtras {
  Eigen::MatrixXd chol_l;    // Cholesky factor of the innovation covariance
  Eigen::VectorXd minv_c;    // M^{-1} innovation
};

// Measurement update block of the filtering algorithm, applied in place to a
// state whose x_pred / v_pred are already set. Empty rows leave the
// prediction as the filtered value.
void apply_update(FilterState& st, const std::map<int, Quote>& obs_row,
                  const MeasurementMap& mm, const std::map<int, double>& noise_row,
                  int date_index, UpdateExtras* extras) {
  if (obs_row.empty()) {
    st.x_filt = st.x_pred;
    st.v_filt = repair_covariance(st.v_pred, "qkf_step");
    st.innovation.resize(0);
    st.innovation_cov.resize(0, 0);
    st.gain.resize(5, 0);
    return;
  }

  const auto n = static_cast<Eigen::Index>(obs_row.size());
  if (static_cast<Eigen::Index>(mm.js.size()) != n || mm.a.size() != n ||
      mm.b_tilde.rows() != n) {
    throw std::invalid_argument("qkf_step: measurement map does not match the quote row");
  }
  Eigen::VectorXd f_obs(n), n2(n);
  {
    Eigen::Index i = 0;
    for (const auto& [j, quote] : obs_row) {
      if (mm.js[static_cast<size_t>(i)] != j) {
        throw std::invalid_argument(
            "qkf_step: measurement map rows must follow the quote row's nearby order");
      }
      auto nit = noise_row.find(j);
      if (nit == noise_row.end()) {
        throw std::invalid_argument("qkf_step: missing noise level for a quoted contract");
      }
      f_obs[i] = quote.price;
      n2[i] = nit->second * nit->second;
      ++i;
    }
  }

  const Eigen::VectorXd f_pred = mm.a + mm.b_tilde * st.x_pred;
  Eigen::MatrixXd m = mm.b_tilde * st.v_pred * mm.b_tilde.transpose();
  m.diagonal() += n2;
  m = 0.5 * (m + m.transpose()).eval();

  Eigen::MatrixXd l;
  try {
    l = cholesky_psd(m);
  } catch (const not_psd_error&) {
    throw singular_innovation_error(
        date_index, "qkf_step: innovation covariance not invertible at date index " +
                        std::to_string(date_index));
  }
  if (!(l.diagonal().minCoeff() > 0.0) || !l.allFinite()) {
    throw singular_innovation_error(
        date_index, "qkf_step: innovation covariance singular at date index " +
                        std::to_string(date_index));
  }

  st.innovation = f_obs - f_pred;
  st.innovation_cov = m;

  // Gain = V_pred B^T M^{-1}, via two triangular solves of M X = B V_pred.
  Eigen::MatrixXd bv = mm.b_tilde * st.v_pred;
  Eigen::MatrixXd x = l.triangularView<Eigen::Lower>().solve(bv);
  l.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  st.gain = x.transpose();

  st.x_filt = st.x_pred + st.gain * st.innovation;
  st.v_filt = repair_covariance(
      st.v_pred - st.gain * m * st.gain.transpose(), "qkf_step");

  if (extras != nullptr) {
    extras->chol_l = l;
    Eigen::VectorXd y = l.triangularView<Eigen::Lower>().solve(st.innovation);
    extras->minv_c = l.transpose().triangularView<Eigen::Upper>().solve(y);
  }
}

FilterState step_core(const FilterState& prev, const std::map<int, Quote>& obs_row,
                      const AugmentedCore& core, const MeasurementMap& mm,
                      const std::map<int, double>& noise_row, int date_index,
                      UpdateExtras* extras) {
  if (prev.x_filt.size() != 5 || prev.v_filt.rows() != 5 || prev.v_filt.cols() != 5) {
    throw std::invalid_argument("qkf_step: previous state has wrong dimensions");
  }
  const AugmentedDynamics dyn = dynamics_at(core, prev.x_filt.head<2>());
  FilterState st;
  st.x_pred = dyn.b_tilde + dyn.d_tilde * prev.x_filt;
  st.v_pred = dyn.d_tilde * prev.v_filt * dyn.d_tilde.transpose() + dyn.sigma_tilde;
  st.v_pred = 0.5 * (st.v_pred + st.v_pred.transpose()).eval();
  apply_update(st, obs_row, mm, noise_row, date_index, extras);
  return st;
}

std::vector<int> row_js(const std::map<int, Quote>& row) {
  std::vector<int> js;
  js.reserve(row.size());
  for (const auto& [j, q] : row) js.push_back(j);
  return js;
}

double year_fraction(double t) { return t - std::floor(t); }

}  // namespace

void validate_quotes(const QuoteSeries& quotes) {
  if (quotes.dates.empty()) throw data_error("quote series is empty");
  if (quotes.rows.size() != quotes.dates.size()) {
    throw data_error("quote series has mismatched dates and rows");
  }
  if (quotes.j_max < 1) throw data_error("quote series j_max must be >= 1");
  for (size_t k = 0; k < quotes.dates.size(); ++k) {
    if (!std::isfinite(quotes.dates[k])) throw data_error("non-finite quote date");
    if (k > 0 && !(quotes.dates[k] > quotes.dates[k - 1])) {
      throw data_error("quote dates must be strictly increasing");
    }
    for (const auto& [j, quote] : quotes.rows[k]) {
      std::ostringstream where;
      where << "date index " << k << ", nearby " << j;
      if (j < 1 || j > quotes.j_max) {
        throw data_error("nearby index out of range at " + where.str());
      }
      if (!std::isfinite(quote.price) || !(quote.price > 0.0)) {
        throw data_error("quote price must be positive at " + where.str());
      }
      if (quote.spread &&
          (!std::isfinite(*quote.spread) || *quote.spread < 0.0)) {
        throw data_error("quote spread must be >= 0 at " + where.str());
      }
    }
  }
}

NoiseModel noise_levels(const QuoteSeries& quotes) {
  validate_quotes(quotes);

  double total = 0.0;
  long total_n = 0;
  std::map<int, std::pair<double, long>> per_j;
  for (const auto& row : quotes.rows) {
    for (const auto& [j, quote] : row) {
      if (quote.spread) {
        total += *quote.spread;
        ++total_n;
        auto& acc = per_j[j];
        acc.first += *quote.spread;
        ++acc.second;
      }
    }
  }
  if (total_n == 0) {
    throw std::invalid_argument(
        "noise_levels: no spreads present in the quote series; supply spreads or "
        "configure a noise floor");
  }
  const double overall = total / static_cast<double>(total_n);

  NoiseModel nm;
  nm.n.resize(quotes.rows.size());
  for (size_t k = 0; k < quotes.rows.size(); ++k) {
    for (const auto& [j, quote] : quotes.rows[k]) {
      auto it = per_j.find(j);
      // A contract with no recorded spreads falls back to the overall average.
      const double dj =
          (it != per_j.end()) ? it->second.first / static_cast<double>(it->second.second)
                              : overall;
      const double djk = quote.spread ? *quote.spread : dj;
      const double n2 = (djk + dj + overall) / 3.0;
      if (!(n2 > 0.0)) {
        throw std::invalid_argument(
            "noise_levels: zero noise level computed; spreads are all zero, supply a "
            "noise floor");
      }
      nm.n[k][j] = std::sqrt(n2);
    }
  }
  return nm;
}

Discretization discretize(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                          double dt) {
  if (!std::isfinite(dt) || !(dt > 0.0)) {
    throw std::invalid_argument("discretize: dt must be positive");
  }
  Discretization out;
  out.b << mpr.gamma_z * dt, mpr.gamma_y * dt;
  out.d << 1.0 - (p.kappa_z - mpr.lambda_z) * dt, 0.0,
           p.kappa_y * dt, 1.0 - (p.kappa_y - mpr.lambda_y) * dt;
  out.k << p.sigma_z * std::sqrt(dt), 0.0,
           p.rho * p.sigma_y * std::sqrt(dt),
           p.sigma_y * std::sqrt((1.0 - p.rho * p.rho) * dt);
  out.diagonal_warning = out.d(0, 0) < 0.0 || out.d(1, 1) < 0.0;
  return out;
}

AugmentedDynamics augment_dynamics(const Eigen::Vector2d& b, const Eigen::Matrix2d& d,
                                   const Eigen::Matrix2d& k,
                                   const Eigen::Vector2d& x_prev) {
  return dynamics_at(make_core(b, d, k), x_prev);
}

MeasurementMap measurement_map(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                               double quote_date_frac, const std::vector<int>& present_js) {
  (void)mpr;  // forward prices are Q-measure objects; see header.
  if (present_js.empty()) {
    throw std::invalid_argument("measurement_map: present_js must be nonempty");
  }
  if (!(quote_date_frac >= 0.0 && quote_date_frac < 1.0)) {
    throw std::invalid_argument("measurement_map: quote_date_frac must lie in [0,1)");
  }
  int j_max = 0;
  for (int j : present_js) {
    if (j < 1) throw std::invalid_argument("measurement_map: nearby indices start at 1");
    j_max = std::max(j_max, j);
  }
  MeasurementCache cache(p, j_max);
  return cache.map_for(quote_date_frac, present_js);
}

FilterState qkf_step(const FilterState& prev, const std::map<int, Quote>& obs_row,
                     const Discretization& disc, const MeasurementMap& mm,
                     const std::map<int, double>& noise_row, int date_index) {
  return step_core(prev, obs_row, make_core(disc.b, disc.d, disc.k), mm, noise_row,
                   date_index, nullptr);
}

FilterOutput run_filter(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                        const QuoteSeries& quotes, const NoiseModel& noise,
                        bool ls_spread_weighted) {
  validate_quotes(quotes);
  if (noise.n.size() != quotes.rows.size()) {
    throw std::invalid_argument("run_filter: noise model does not match the quote series");
  }
  const size_t n_dates = quotes.dates.size();

  MeasurementCache cache(p, quotes.j_max);

  FilterOutput out;
  out.states.reserve(n_dates);
  out.model_prices.resize(n_dates);
  out.model_prices_pred.resize(n_dates);
  out.relative_errors.resize(n_dates);
  out.relative_errors_pred.resize(n_dates);

  const double anchor_dt =
      n_dates >= 2 ? quotes.dates[1] - quotes.dates[0] : kDefaultAnchorDt;
  const Eigen::Vector2d x0(p.z0, p.y0);

  double ls = 0.0;
  double loglik = 0.0;

  for (size_t k = 0; k < n_dates; ++k) {
    const auto& row = quotes.rows[k];
    const std::vector<int> js = row_js(row);
    MeasurementMap mm;
    if (!js.empty()) mm = cache.map_for(year_fraction(quotes.dates[k]), js);

    FilterState st;
    UpdateExtras extras;
    const bool has_obs = !row.empty();
    if (k == 0) {
      // Anchoring: the monomials of x0 with one step of state noise serve as
      // the first date's prediction, then the usual update block runs.
      const Discretization disc0 = discretize(p, mpr, anchor_dt);
      st.x_pred = monomials5(x0);
      st.v_pred = augment_dynamics(disc0.b, disc0.d, disc0.k, x0).sigma_tilde;
      apply_update(st, row, mm, noise.n[k], static_cast<int>(k),
                   has_obs ? &extras : nullptr);
    } else {
      const Discretization disc = discretize(p, mpr, quotes.dates[k] - quotes.dates[k - 1]);
      st = step_core(out.states.back(), row, make_core(disc.b, disc.d, disc.k), mm,
                     noise.n[k], static_cast<int>(k), has_obs ? &extras : nullptr);
    }

    if (has_obs) {
      const Eigen::VectorXd f_filt = mm.a + mm.b_tilde * st.x_filt;
      const Eigen::VectorXd f_pred = mm.a + mm.b_tilde * st.x_pred;
      for (size_t i = 0; i < js.size(); ++i) {
        const int j = js[i];
        const double observed = row.at(j).price;
        const auto ii = static_cast<Eigen::Index>(i);
        out.model_prices[k][j] = f_filt[ii];
        out.model_prices_pred[k][j] = f_pred[ii];
        out.relative_errors[k][j] = std::abs(f_filt[ii] - observed) / observed;
        out.relative_errors_pred[k][j] = std::abs(f_pred[ii] - observed) / observed;
      }

      const auto n_k = static_cast<double>(js.size());
      if (ls_spread_weighted) {
        Eigen::Index i = 0;
        for (int j : js) {
          const double nj = noise.n[k].at(j);
          const double c = st.innovation[i++] / nj;
          ls += c * c;
        }
      } else {
        ls += st.innovation.squaredNorm();
      }
      const double logdet = 2.0 * extras.chol_l.diagonal().array().log().sum();
      loglik -= 0.5 * (logdet + st.innovation.dot(extras.minv_c) +
                       n_k * std::log(2.0 * M_PI));
    }

    out.states.push_back(std::move(st));
  }

  if (!std::isfinite(ls) || !std::isfinite(loglik)) {
    throw numerical_error("run_filter: objective not finite");
  }
  out.ls_error = ls;
  out.log_likelihood = loglik;
  return out;
}

FilterOutput run_filter(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                        const QuoteSeries& quotes, bool ls_spread_weighted) {
  return run_filter(p, mpr, quotes, noise_levels(quotes), ls_spread_weighted);
}

QuoteSeries synthetic_quotes(const TwoFactorParams& p, const MarketPriceOfRisk& mpr,
                             int n_dates, int j_max, double spread, std::uint64_t seed) {
  if (n_dates < 1 || j_max < 1) {
    throw std::invalid_argument("synthetic_quotes: n_dates and j_max must be >= 1");
  }
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw std::invalid_argument("synthetic_quotes: spread must be positive");
  }

  const Discretization disc = discretize(p, mpr, 1.0 / 12.0);
  MeasurementCache cache(p, j_max);
  rng::NormalSampler draw(seed);
  const double noise_sd = std::sqrt(spread);

  QuoteSeries qs;
  qs.j_max = j_max;
  qs.dates.reserve(static_cast<size_t>(n_dates));
  qs.rows.resize(static_cast<size_t>(n_dates));

  Eigen::Vector2d x(p.z0, p.y0);
  for (int k = 0; k < n_dates; ++k) {
    if (k > 0) {
      const Eigen::Vector2d eps(draw(), draw());
      x = disc.b + disc.d * x + disc.k * eps;
    }
    const double t = static_cast<double>(k) / 12.0;
    qs.dates.push_back(t);
    const double frac = year_fraction(t);
    const Eigen::VectorXd xt = monomials5(x);
    for (int j = 1; j <= j_max; ++j) {
      const Eigen::VectorXd v = cache.v(j, frac);
      const double model_price = v[0] + v.tail(5).dot(xt);
      const double price = model_price + noise_sd * draw();
      if (!(price > 0.0)) {
        throw numerical_error(
            "synthetic_quotes: generated a non-positive price; parameters sit too "
            "close to zero prices for this noise level");
      }
      qs.rows[static_cast<size_t>(k)][j] = Quote{price, spread};
    }
  }
  return qs;
}

}  // namespace polyfwd
