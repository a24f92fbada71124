#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "polyfwd/errors.hpp"
#include "polyfwd/linalg.hpp"
#include "polyfwd/pricing.hpp"
#include "polyfwd/rng.hpp"

using namespace polyfwd;

namespace {

// Random two-factor parameter set with nonnegative spot-map coefficients.
TwoFactorParams random_params(rng::Xoshiro256pp& gen) {
  TwoFactorParams p;
  p.c = oracles::uniform(gen, 0.1, 5.0);
  p.alpha = oracles::uniform(gen, 0.1, 5.0);
  p.beta = oracles::uniform(gen, 0.1, 5.0);
  p.kappa_z = oracles::uniform(gen, 0.01, 0.5);
  p.kappa_y = oracles::uniform(gen, p.kappa_z, 1.0);
  p.sigma_z = oracles::uniform(gen, 0.05, 1.0);
  p.sigma_y = oracles::uniform(gen, 0.05, 1.0);
  p.rho = oracles::uniform(gen, -0.9, 0.9);
  return p;
}

QuadraticPolynomial random_quadratic(rng::Xoshiro256pp& gen, int d,
                                     bool restrict_to_basis) {
  QuadraticPolynomial q;
  q.q0 = oracles::uniform(gen, -2.0, 2.0);
  q.q_lin = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) q.q_lin[i] = oracles::uniform(gen, -2.0, 2.0);
  q.q_mat = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < 2; ++i)
    for (int j = i; j < 2; ++j) {
      const double v = oracles::uniform(gen, -2.0, 2.0);
      q.q_mat(i, j) = v;
      q.q_mat(j, i) = v;
    }
  if (!restrict_to_basis && d == 3) {
    // rz, ry, r^2 terms have no home in the three-factor basis; keep zero.
  }
  return q;
}

// Basis coordinates of a quadratic polynomial in the frozen monomial order.
Eigen::VectorXd quadratic_coords(const QuadraticPolynomial& q, int d) {
  if (d == 2) {
    Eigen::VectorXd c(6);
    c << q.q0, q.q_lin[0], q.q_lin[1], q.q_mat(0, 0), 2.0 * q.q_mat(0, 1),
        q.q_mat(1, 1);
    return c;
  }
  Eigen::VectorXd c(7);
  c << q.q0, q.q_lin[0], q.q_lin[1], q.q_lin[2], q.q_mat(0, 0), 2.0 * q.q_mat(0, 1),
      q.q_mat(1, 1);
  return c;
}

double eval_quadratic(const QuadraticPolynomial& q, const Eigen::VectorXd& x) {
  return q.q0 + q.q_lin.dot(x) + x.dot(q.q_mat * x);
}

}  // namespace

TEST_CASE("moment: constant polynomial returns one exactly") {
  const auto p = oracles::reference_params();
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(6);
  e1[0] = 1.0;
  for (double tau : {0.0, 0.5, 4.0, 10.0}) {
    CHECK(moment(p, Measure::Q, e1, 0.0, tau, Eigen::Vector2d(1.3, -0.4)) == 1.0);
    CHECK(moment(p, Measure::P, e1, 0.0, tau, Eigen::Vector2d(1.3, -0.4),
                 oracles::reference_mpr()) == 1.0);
  }
}

TEST_CASE("moment: zero horizon evaluates the polynomial at x") {
  const auto p = oracles::reference_params();
  rng::Xoshiro256pp gen(41);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd coeffs(6);
    for (int i = 0; i < 6; ++i) coeffs[i] = oracles::uniform(gen, -2.0, 2.0);
    const Eigen::Vector2d x(oracles::uniform(gen, -2.0, 2.0),
                            oracles::uniform(gen, -2.0, 2.0));
    const double direct = basis_eval(x).dot(coeffs);
    CHECK(moment(p, Measure::Q, coeffs, 1.5, 1.5, x) ==
          doctest::Approx(direct).epsilon(1e-14));
  }
}

TEST_CASE("moment: rejects reversed time ordering") {
  const auto p = oracles::reference_params();
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(6);
  e1[0] = 1.0;
  CHECK_THROWS_AS(moment(p, Measure::Q, e1, 2.0, 1.0, Eigen::Vector2d(0, 0)),
                  std::invalid_argument);
}

TEST_CASE("moment: OU second moment in closed form") {
  TwoFactorParams p;
  p.kappa_z = 0.5;
  p.sigma_z = 0.3;
  p.kappa_y = 0.7;
  p.sigma_y = 0.4;
  p.rho = 0.2;
  Eigen::VectorXd e_zz = Eigen::VectorXd::Zero(6);
  e_zz[basis2::zz] = 1.0;
  const double tau = 2.0;
  const double z = 1.0;
  const double want = z * z * std::exp(-2.0 * p.kappa_z * tau) +
                      p.sigma_z * p.sigma_z *
                          (1.0 - std::exp(-2.0 * p.kappa_z * tau)) /
                          (2.0 * p.kappa_z);
  const double got = moment(p, Measure::Q, e_zz, 0.0, tau, Eigen::Vector2d(z, 0.7));
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("moment_ode: constants and zero horizon") {
  const auto p = oracles::reference_params();
  QuadraticPolynomial q;
  q.q0 = 3.25;
  q.q_lin = Eigen::VectorXd::Zero(2);
  q.q_mat = Eigen::MatrixXd::Zero(2, 2);
  for (double tau : {0.5, 3.0}) {
    CHECK(moment_ode(p, q, 0.0, tau, Eigen::Vector2d(1.0, -1.0)) ==
          doctest::Approx(3.25).epsilon(1e-12));
  }

  rng::Xoshiro256pp gen(42);
  const QuadraticPolynomial qr = random_quadratic(gen, 2, true);
  const Eigen::Vector2d x(0.9, -1.2);
  CHECK(moment_ode(p, qr, 1.0, 1.0, x) ==
        doctest::Approx(eval_quadratic(qr, x)).epsilon(1e-13));
}

TEST_CASE("moment_ode: cross-agreement with the matrix exponential") {
  const auto p = oracles::reference_params();
  const auto p3 = oracles::reference_params3();
  rng::Xoshiro256pp gen(43);
  for (int rep = 0; rep < 20; ++rep) {
    const double tau = oracles::uniform(gen, 0.1, 10.0);
    const Eigen::Vector2d x(oracles::uniform(gen, -2.0, 2.0),
                            oracles::uniform(gen, -2.0, 2.0));
    const QuadraticPolynomial q = random_quadratic(gen, 2, true);
    const double via_ode = moment_ode(p, q, 0.0, tau, x);
    const double via_exp = moment(p, Measure::Q, quadratic_coords(q, 2), 0.0, tau, x);
    CHECK(via_ode == doctest::Approx(via_exp).epsilon(1e-6));

    const QuadraticPolynomial q3 = random_quadratic(gen, 3, true);
    const Eigen::Vector3d x3(x[0], x[1], oracles::uniform(gen, -0.9, 0.9));
    const double via_ode3 = moment_ode(p3, q3, 0.0, tau, x3);
    const double via_exp3 = moment(p3, Measure::Q, quadratic_coords(q3, 3), 0.0, tau, x3);
    CHECK(via_ode3 == doctest::Approx(via_exp3).epsilon(1e-6));
  }
}

TEST_CASE("weight_vector: empty interval and zero generator") {
  const auto p = oracles::reference_params();
  const Eigen::VectorXd w0 = weight_vector(p, Measure::Q, 2.0, 2.0);
  CHECK(w0.cwiseAbs().maxCoeff() <= 1e-15);

  TwoFactorParams flat;  // all rates and vols zero -> G = 0
  flat.c = 1.5;
  flat.alpha = 2.5;
  flat.beta = 0.5;
  const Eigen::VectorXd wg = weight_vector(flat, Measure::Q, 1.0, 4.0);
  const Eigen::VectorXd want = 3.0 * spot_coordinates(flat);
  CHECK((wg - want).cwiseAbs().maxCoeff() <= 1e-13);

  CHECK_THROWS_AS(weight_vector(p, Measure::Q, 3.0, 1.0), std::invalid_argument);
}

TEST_CASE("weight_vector: Simpson quadrature oracle on [0,1]") {
  const auto p = oracles::reference_params();
  const Eigen::MatrixXd g = generator_matrix(p, Measure::Q);
  const Eigen::VectorXd ps = spot_coordinates(p);
  const Eigen::VectorXd got = weight_vector(p, Measure::Q, 0.0, 1.0);
  const Eigen::MatrixXd want = oracles::simpson_matrix(
      [&](double u) -> Eigen::MatrixXd { return expm(g, u) * ps; }, 0.0, 1.0, 10000);
  CHECK(std::abs(got[0] - want(0, 0)) <= 1e-8);
  CHECK((got - want.col(0)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("forward_instant: zero horizon returns the spot") {
  const auto p = oracles::reference_params();
  const Eigen::Vector2d x = oracles::reference_x0();
  CHECK(forward_instant(p, Measure::Q, 2.0, 2.0, x) == spot_price(p, x));
}

TEST_CASE("forward_instant: frozen deterministic state stays at c") {
  auto p = oracles::reference_params();
  p.sigma_z = 0.0;
  p.sigma_y = 0.0;
  for (double tau : {0.5, 2.0, 9.0}) {
    CHECK(forward_instant(p, Measure::Q, 0.0, tau, Eigen::Vector2d(0.0, 0.0)) ==
          doctest::Approx(p.c).epsilon(1e-12));
  }
}

TEST_CASE("forward_instant: Monte Carlo expectation oracle at one year") {
  const auto p = oracles::reference_params();
  const Eigen::Vector2d x0 = oracles::reference_x0();
  const double closed = forward_instant(p, Measure::Q, 0.0, 1.0, x0);

  const int n_paths = 1000000;
  const int n_steps = 1000;
  const double h = 1.0 / n_steps;
  const double sqh = std::sqrt(h);
  const double rho_c = std::sqrt(1.0 - p.rho * p.rho);
  rng::NormalSampler draw(51);
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n_paths; ++i) {
    double z = x0[0], y = x0[1];
    for (int k = 0; k < n_steps; ++k) {
      const double e1 = draw();
      const double e2 = draw();
      const double zn = z - p.kappa_z * z * h + p.sigma_z * sqh * e1;
      y += p.kappa_y * (z - y) * h + p.sigma_y * sqh * (p.rho * e1 + rho_c * e2);
      z = zn;
    }
    const double s = p.c + p.alpha * y * y + p.beta * z * z;
    sum += s;
    sumsq += s * s;
  }
  const double mean = sum / n_paths;
  const double var = std::max(0.0, sumsq / n_paths - mean * mean);
  const double se = std::sqrt(var / n_paths);
  CHECK(std::abs(mean - closed) <= 3.0 * se);
}

TEST_CASE("forward_period: instantaneous limit and zero generator") {
  const auto p = oracles::reference_params();
  const Eigen::Vector2d x = oracles::reference_x0();
  const double inst = forward_instant(p, Measure::Q, 0.0, 2.0, x);
  const double tiny = forward_period(p, Measure::Q, 0.0, 2.0, 2.0 + 1e-6, x);
  CHECK(tiny == doctest::Approx(inst).epsilon(1e-5));

  TwoFactorParams flat;
  flat.c = 1.5;
  flat.alpha = 2.5;
  flat.beta = 0.5;
  const Eigen::Vector2d xf(0.7, -0.3);
  CHECK(forward_period(flat, Measure::Q, 0.0, 1.0, 2.0, xf) ==
        doctest::Approx(spot_price(flat, xf)).epsilon(1e-13));

  CHECK_THROWS_AS(forward_period(p, Measure::Q, 0.0, 2.0, 2.0, x),
                  std::invalid_argument);
  CHECK_THROWS_AS(forward_period(p, Measure::Q, 3.0, 2.0, 4.0, x),
                  std::invalid_argument);
}

TEST_CASE("forward_period: Simpson average of forward_instant") {
  const auto p = oracles::reference_params();
  const Eigen::Vector2d x = oracles::reference_x0();
  const double got = forward_period(p, Measure::Q, 0.0, 1.0, 2.0, x);
  const double avg = oracles::simpson(
      [&](double u) { return forward_instant(p, Measure::Q, 0.0, u, x); }, 1.0, 2.0,
      2000);
  CHECK(got == doctest::Approx(avg).epsilon(1e-8));
}

TEST_CASE("forward_period: quadrature identity across random parameter draws") {
  rng::Xoshiro256pp gen(52);
  for (int rep = 0; rep < 50; ++rep) {
    const TwoFactorParams p = random_params(gen);
    const Eigen::Vector2d x(oracles::uniform(gen, -2.0, 2.0),
                            oracles::uniform(gen, -2.0, 2.0));
    const double t1 = oracles::uniform(gen, 0.2, 6.0);
    const double t2 = t1 + oracles::uniform(gen, 0.1, 2.0);
    const double got = forward_period(p, Measure::Q, 0.0, t1, t2, x);
    const double avg = oracles::simpson(
                           [&](double u) { return forward_instant(p, Measure::Q, 0.0, u, x); },
                           t1, t2, 2000) /
                       (t2 - t1);
    CHECK(got == doctest::Approx(avg).epsilon(1e-8));
  }
}

TEST_CASE("inst_correlation: identical legs give exactly one") {
  const auto p = oracles::reference_params();
  const Eigen::Vector2d x = oracles::reference_x0();
  CHECK(inst_correlation(p, 0.0, {1.0, 2.0}, {1.0, 2.0}, x) == 1.0);
  CHECK(inst_correlation(p, 0.5, 3.0, 3.0, x) == 1.0);

  const auto p3 = oracles::reference_params3();
  const Eigen::Vector3d x3(p3.z0, p3.y0, p3.r0);
  CHECK(inst_correlation(p3, 0.0, {2.0, 3.0}, {2.0, 3.0}, x3) == 1.0);
}

TEST_CASE("inst_correlation: bounded by Cauchy-Schwarz at random leg pairs") {
  const auto p = oracles::reference_params();
  rng::Xoshiro256pp gen(53);
  for (int rep = 0; rep < 1000; ++rep) {
    const Eigen::Vector2d x(oracles::uniform(gen, -3.0, 3.0),
                            oracles::uniform(gen, -3.0, 3.0));
    const double a1 = oracles::uniform(gen, 0.1, 9.0);
    const double b1 = oracles::uniform(gen, 0.1, 9.0);
    const double corr = inst_correlation(p, 0.0, {a1, a1 + oracles::uniform(gen, 0.2, 2.0)},
                                         {b1, b1 + oracles::uniform(gen, 0.2, 2.0)}, x);
    CHECK(std::abs(corr) <= 1.0 + 1e-12);
  }
}

TEST_CASE("inst_covariance: simulated quadratic covariation oracle") {
  const auto p = oracles::reference_params();
  const Eigen::Vector2d x = oracles::reference_x0();
  const std::pair<double, double> leg_a{1.0, 2.0};
  const std::pair<double, double> leg_b{3.0, 4.0};
  const double closed = inst_covariance(p, 0.0, leg_a, leg_b, x);

  const double h = 1e-4;
  const int n = 1000000;
  const Eigen::MatrixXd g = generator_matrix(p, Measure::Q);
  const Eigen::VectorXd w01 = expm_and_integral(g, 1.0).integral * spot_coordinates(p);
  const Eigen::VectorXd va0 = expm(g, leg_a.first) * w01;
  const Eigen::VectorXd vb0 = expm(g, leg_b.first) * w01;
  const Eigen::VectorXd vah = expm(g, leg_a.first - h) * w01;
  const Eigen::VectorXd vbh = expm(g, leg_b.first - h) * w01;
  const double f_a0 = basis_eval(x).dot(va0);
  const double f_b0 = basis_eval(x).dot(vb0);

  const Eigen::MatrixXd a = diffusion_matrix(p);
  Eigen::Matrix2d k;
  k << p.sigma_z, 0.0, p.rho * p.sigma_y, std::sqrt(1.0 - p.rho * p.rho) * p.sigma_y;
  const double sqh = std::sqrt(h);
  rng::NormalSampler draw(54);
  std::vector<double> prod(n);
  double m1 = 0.0, m2 = 0.0;
  std::vector<double> da(n), db(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d eps(draw(), draw());
    Eigen::Vector2d xn = x;
    xn[0] += -p.kappa_z * x[0] * h;
    xn[1] += p.kappa_y * (x[0] - x[1]) * h;
    xn += k * eps * sqh;
    const Eigen::VectorXd hb = basis_eval(xn);
    da[i] = hb.dot(vah) - f_a0;
    db[i] = hb.dot(vbh) - f_b0;
    m1 += da[i];
    m2 += db[i];
  }
  m1 /= n;
  m2 /= n;
  double cov = 0.0, var_prod = 0.0;
  for (int i = 0; i < n; ++i) {
    const double pr = (da[i] - m1) * (db[i] - m2);
    cov += pr;
    var_prod += pr * pr;
  }
  cov /= n;
  var_prod = std::max(0.0, var_prod / n - cov * cov);
  const double se = std::sqrt(var_prod / n) / h;
  CHECK(std::abs(cov / h - closed) <= 4.0 * se);
}

TEST_CASE("inst_correlation: zero variance is a detected error") {
  TwoFactorParams p;
  p.c = 1.0;
  p.alpha = 1.0;
  p.beta = 1.0;  // sigma = 0 -> Sigma(x) = 0 -> degenerate legs
  CHECK_THROWS_AS(inst_correlation(p, 0.0, {1.0, 2.0}, {2.0, 3.0},
                                   Eigen::Vector2d(1.0, 1.0)),
                  degenerate_variance_error);
}

TEST_CASE("inst_covariance: symmetrized variant coincides for equal-length legs") {
  const auto p = oracles::reference_params();
  const Eigen::Vector2d x = oracles::reference_x0();
  const double plain = inst_covariance(p, 0.0, {1.0, 2.0}, {4.0, 5.0}, x, false);
  const double sym = inst_covariance(p, 0.0, {1.0, 2.0}, {4.0, 5.0}, x, true);
  CHECK(plain == doctest::Approx(sym).epsilon(1e-12));
}

TEST_CASE("risk_premium: zero market price of risk vanishes identically") {
  const auto p = oracles::reference_params();
  const MarketPriceOfRisk none;
  const Eigen::Vector2d x = oracles::reference_x0();
  CHECK(risk_premium(p, none, 0.0, 4.0, x) == 0.0);
  CHECK(risk_premium(p, none, 0.5, 2.0, 3.0, x) == 0.0);
  CHECK(risk_premium(p, oracles::reference_mpr(), 1.0, 1.0, x) ==
        doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("risk_premium: equals the difference of the two pricers") {
  const auto p = oracles::reference_params();
  const auto mpr = oracles::reference_mpr();
  const Eigen::Vector2d x = oracles::reference_x0();

  const double inst = risk_premium(p, mpr, 0.0, 5.0, x);
  const double diff = forward_instant(p, Measure::Q, 0.0, 5.0, x) -
                      forward_instant(p, Measure::P, 0.0, 5.0, x, mpr);
  CHECK(inst == doctest::Approx(diff).epsilon(1e-12));

  const double period = risk_premium(p, mpr, 0.0, 5.0, 6.0, x);
  const double diff_p = forward_period(p, Measure::Q, 0.0, 5.0, 6.0, x) -
                        forward_period(p, Measure::P, 0.0, 5.0, 6.0, x, mpr);
  CHECK(period == doctest::Approx(diff_p).epsilon(1e-12));
}

TEST_CASE("forward_curve: matches scalar calls and shape contract") {
  const auto p = oracles::reference_params();
  const Eigen::Vector2d x = oracles::reference_x0();
  std::vector<std::pair<double, double>> maturities;
  for (int i = 1; i <= 10; ++i) maturities.emplace_back(i, i + 1.0);

  const std::vector<double> curve = forward_curve(p, Measure::Q, 0.0, x, maturities);
  REQUIRE(curve.size() == 10);
  for (size_t i = 0; i < maturities.size(); ++i) {
    CHECK(std::isfinite(curve[i]));
    const double scalar = forward_period(p, Measure::Q, 0.0, maturities[i].first,
                                         maturities[i].second, x);
    CHECK(curve[i] == doctest::Approx(scalar).epsilon(1e-14));
  }

  const std::vector<double> single =
      forward_curve(p, Measure::Q, 0.0, x, {{2.0, 3.0}});
  CHECK(single.size() == 1);
  CHECK(single[0] == doctest::Approx(forward_period(p, Measure::Q, 0.0, 2.0, 3.0, x))
                         .epsilon(1e-14));
}

TEST_CASE("invariant: tower property through the semigroup") {
  const auto p = oracles::reference_params();
  const Eigen::MatrixXd g = generator_matrix(p, Measure::Q);
  rng::Xoshiro256pp gen(55);
  for (int rep = 0; rep < 25; ++rep) {
    Eigen::VectorXd coeffs(6);
    for (int i = 0; i < 6; ++i) coeffs[i] = oracles::uniform(gen, -2.0, 2.0);
    const Eigen::Vector2d x(oracles::uniform(gen, -2.0, 2.0),
                            oracles::uniform(gen, -2.0, 2.0));
    const double t = oracles::uniform(gen, 0.0, 2.0);
    const double s = t + oracles::uniform(gen, 0.1, 3.0);
    const double T = s + oracles::uniform(gen, 0.1, 5.0);
    const Eigen::VectorXd inner = expm(g, T - s) * coeffs;
    const double composed = moment(p, Measure::Q, inner, t, s, x);
    const double direct = moment(p, Measure::Q, coeffs, t, T, x);
    CHECK(composed ==
          doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("invariant: forward prices stay above c under both measures") {
  rng::Xoshiro256pp gen(56);
  const auto mpr = oracles::reference_mpr();
  for (int rep = 0; rep < 200; ++rep) {
    const TwoFactorParams p = random_params(gen);
    const Eigen::Vector2d x(oracles::uniform(gen, -3.0, 3.0),
                            oracles::uniform(gen, -3.0, 3.0));
    const double t1 = oracles::uniform(gen, 0.1, 8.0);
    const double t2 = t1 + oracles::uniform(gen, 0.1, 2.0);
    CHECK(forward_instant(p, Measure::Q, 0.0, t1, x) >= p.c - 1e-10);
    CHECK(forward_period(p, Measure::Q, 0.0, t1, t2, x) >= p.c - 1e-10);
    CHECK(forward_instant(p, Measure::P, 0.0, t1, x, mpr) >= p.c - 1e-10);
    CHECK(forward_period(p, Measure::P, 0.0, t1, t2, x, mpr) >= p.c - 1e-10);
  }
}
