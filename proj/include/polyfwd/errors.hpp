#pragma once

#include <stdexcept>
#include <string>

namespace polyfwd {

// Error taxonomy shared across the library. The CLI maps exception classes to
// exit codes: configuration problems (std::invalid_argument and subclasses)
// exit 2, data ingestion problems (data_error) exit 3, numerical failures
// (numerical_error and subclasses) exit 4.

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Matrix failed the positive-semidefiniteness tolerance; carries the
// offending eigenvalue.
struct not_psd_error : numerical_error {
  double min_eigenvalue;
  not_psd_error(double eig, const std::string& what)
      : numerical_error(what), min_eigenvalue(eig) {}
};

// Innovation covariance not invertible at a filter step; carries the
// zero-based date index.
struct singular_innovation_error : numerical_error {
  int date_index;
  singular_innovation_error(int index, const std::string& what)
      : numerical_error(what), date_index(index) {}
};

// Hedge-ratio denominator (instrument variance) below tolerance.
struct degenerate_variance_error : numerical_error {
  using numerical_error::numerical_error;
};

// A measure was requested that the given specification does not support.
struct unsupported_measure_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (CSV rows, quote series).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace polyfwd
