#include "polyfwd/linalg.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

namespace polyfwd {

namespace {

void require_square_finite(const Eigen::MatrixXd& A, const char* who) {
  if (A.rows() == 0 || A.rows() != A.cols())
    throw std::invalid_argument(std::string(who) + ": matrix must be square and nonempty");
  if (!A.allFinite())
    throw std::invalid_argument(std::string(who) + ": non-finite entries");
}

// First column zero, trailing block upper-triangular. Entries are compared
// to exact zero: the generator matrices are constructed with literal zeros,
// and a perturbed matrix genuinely falls outside the closed form.
bool block_triangular_shape(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  if (n < 2) return false;
  for (Eigen::Index i = 0; i < n; ++i)
    if (A(i, 0) != 0.0) return false;
  for (Eigen::Index j = 1; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i)
      if (A(i, j) != 0.0) return false;
  return true;
}

}  // namespace

namespace {

// When the first column of A is exactly zero, e^{At} e_1 = e_1 is an exact
// identity (A^k e_1 = 0 for k >= 1); the Pade solve can smear it by an ulp,
// so restore it. Keeps moment(constant) == 1 bitwise.
void restore_first_column(const Eigen::MatrixXd& A, Eigen::MatrixXd& E) {
  if (A.col(0).cwiseAbs().maxCoeff() != 0.0) return;
  E.col(0).setZero();
  E(0, 0) = 1.0;
}

}  // namespace

Eigen::MatrixXd expm(const Eigen::MatrixXd& A, double t) {
  require_square_finite(A, "expm");
  if (!std::isfinite(t)) throw std::invalid_argument("expm: non-finite time");
  Eigen::MatrixXd e = (A * t).exp();
  restore_first_column(A, e);
  return e;
}

StructuredExpResult expm_and_integral(const Eigen::MatrixXd& A, double t) {
  require_square_finite(A, "expm_and_integral");
  if (!std::isfinite(t) || t < 0.0)
    throw std::invalid_argument("expm_and_integral: time must be finite and >= 0");

  const Eigen::Index n = A.rows();

  bool closed = block_triangular_shape(A);
  if (closed) {
    for (Eigen::Index i = 1; i < n; ++i)
      if (std::fabs(A(i, i)) < kClosedFormDiagTol) { closed = false; break; }
  }

  StructuredExpResult out;
  if (closed) {
    const Eigen::Index m = n - 1;
    const Eigen::RowVectorXd b = A.row(0).tail(m);
    const Eigen::MatrixXd c = A.bottomRightCorner(m, m);
    const Eigen::MatrixXd cinv =
        c.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::MatrixXd ect = (c * t).exp();
    const Eigen::MatrixXd em1 = ect - Eigen::MatrixXd::Identity(m, m);
    const Eigen::MatrixXd cinv_em1 = cinv * em1;

    out.exp = Eigen::MatrixXd::Zero(n, n);
    out.exp(0, 0) = 1.0;
    out.exp.row(0).tail(m) = b * cinv_em1;
    out.exp.bottomRightCorner(m, m) = ect;

    out.integral = Eigen::MatrixXd::Zero(n, n);
    out.integral(0, 0) = t;
    out.integral.row(0).tail(m) = b * (cinv * cinv_em1) - t * (b * cinv);
    out.integral.bottomRightCorner(m, m) = cinv_em1;
    out.method = ExpmMethod::closed_form;
  } else {
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    aug.topLeftCorner(n, n) = A;
    aug.topRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd e = (aug * t).exp();
    out.exp = e.topLeftCorner(n, n);
    out.integral = e.topRightCorner(n, n);
    out.method = ExpmMethod::augmented_generic;
    if (A.col(0).cwiseAbs().maxCoeff() == 0.0) {
      restore_first_column(A, out.exp);
      // Same structural identity for the integral: column 1 is t e_1.
      out.integral.col(0).setZero();
      out.integral(0, 0) = t;
    }
  }
  return out;
}

Eigen::VectorXd vec(const Eigen::MatrixXd& M) {
  return Eigen::Map<const Eigen::VectorXd>(M.data(), M.size());
}

Eigen::VectorXd vech(const Eigen::MatrixXd& S) {
  require_square_finite(S, "vech");
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("vech: matrix not symmetric within 1e-12");
  const Eigen::Index d = S.rows();
  Eigen::VectorXd out(d * (d + 1) / 2);
  Eigen::Index h = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) out(h++) = S(i, j);
  return out;
}

StructuralMatrices structural_matrices(int d) {
  if (d < 1) throw std::invalid_argument("structural_matrices: d must be >= 1");
  const int m = d * (d + 1) / 2;
  StructuralMatrices s;
  s.duplication = Eigen::MatrixXd::Zero(d * d, m);
  s.selection = Eigen::MatrixXd::Zero(m, d * d);
  s.commutation = Eigen::MatrixXd::Zero(d * d, d * d);

  auto vech_index = [d](int i, int j) {
    // index of (i,j), i >= j, in lower-triangular column order
    return j * d - j * (j - 1) / 2 + (i - j);
  };

  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) {
      const int r = i + j * d;  // vec index of (i,j)
      const int h = (i >= j) ? vech_index(i, j) : vech_index(j, i);
      s.duplication(r, h) = 1.0;
      s.commutation(j + i * d, r) = 1.0;
      if (i >= j) s.selection(vech_index(i, j), r) = 1.0;
    }
  }
  return s;
}

Eigen::MatrixXd cholesky_psd(const Eigen::MatrixXd& S) {
  require_square_finite(S, "cholesky_psd");
  const Eigen::Index d = S.rows();
  const double scale = S.norm();
  if (scale == 0.0) return Eigen::MatrixXd::Zero(d, d);
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::invalid_argument("cholesky_psd: matrix not symmetric");

  const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  // Pivots failed: decide between repairable (tiny negative eigenvalue) and
  // genuinely indefinite input.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -1e-8 * scale)
    throw not_psd_error(min_eig, "cholesky_psd: matrix indefinite beyond tolerance (min eigenvalue " +
                                     std::to_string(min_eig) + ")");

  for (double eps = 1e-16; eps <= 1e2; eps *= 10.0) {
    Eigen::LLT<Eigen::MatrixXd> jit(sym + eps * Eigen::MatrixXd::Identity(d, d));
    if (jit.info() == Eigen::Success) return jit.matrixL();
  }
  throw not_psd_error(min_eig, "cholesky_psd: jitter repair failed");
}

}  // namespace polyfwd
