#pragma once

#include <Eigen/Dense>

#include "polyfwd/errors.hpp"

namespace polyfwd {

enum class ExpmMethod { closed_form, augmented_generic };

// Result of expm_and_integral: exp = e^{At}, integral = int_0^t e^{As} ds,
// and the path that produced them.
struct StructuredExpResult {
  Eigen::MatrixXd exp;
  Eigen::MatrixXd integral;
  ExpmMethod method;
};

// e^{At} by scaling-and-squaring. Relative accuracy 1e-12 or better for
// ||At|| <= 20, far beyond the generator norms that occur here.
Eigen::MatrixXd expm(const Eigen::MatrixXd& A, double t);

// e^{At} together with int_0^t e^{As} ds, t >= 0.
//
// When A has the block-triangular shape (first column zero, first row
// (0, b^T), trailing block C upper-triangular with every |c_ii| >=
// kClosedFormDiagTol) both results come from the closed forms
//   e^{At} = [[1, b^T C^-1 (e^{Ct} - I)], [0, e^{Ct}]]
//   int    = [[t, b^T C^-2 (e^{Ct} - I) - t b^T C^-1], [0, C^-1 (e^{Ct} - I)]].
// Otherwise both come from one exponential of the augmented matrix
// [[A, I], [0, 0]] whose top-right block is the integral. Tiny diagonals
// route to the augmented path silently (recorded in `method`): C^-1 entries
// scale like 1/c_ii, so conditioning wins over speed there.
StructuredExpResult expm_and_integral(const Eigen::MatrixXd& A, double t);

// Gate for the closed form. The hard invertibility floor is 1e-10, but any
// diagonal entry below 1e-6 already makes C^-1 badly scaled, so the generic
// path is the default below that.
inline constexpr double kClosedFormDiagTol = 1e-6;

// Column-stacking operator.
Eigen::VectorXd vec(const Eigen::MatrixXd& M);

// Half-vectorization: lower-triangular entries in column order. Requires
// symmetry within 1e-12 (relative to the largest entry).
Eigen::VectorXd vech(const Eigen::MatrixXd& S);

// Duplication G_d (vec(S) = G_d vech(S) for symmetric S), selection H_d
// (vech-ordered entries of any M), and commutation L_d (vec(M^T) = L_d
// vec(M)). All are 0/1 integer matrices satisfying H_d G_d = I.
struct StructuralMatrices {
  Eigen::MatrixXd duplication;
  Eigen::MatrixXd selection;
  Eigen::MatrixXd commutation;
};
StructuralMatrices structural_matrices(int d);

// Cholesky factor L (lower) with L L^T = S for symmetric positive
// semidefinite S. Indefiniteness within -1e-8*||S|| is repaired by adding
// eps*I with eps the smallest power of ten that restores positive pivots;
// anything below that tolerance throws not_psd_error with the offending
// eigenvalue.
Eigen::MatrixXd cholesky_psd(const Eigen::MatrixXd& S);

}  // namespace polyfwd
