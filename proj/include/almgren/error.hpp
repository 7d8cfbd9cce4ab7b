#pragma once

#include <stdexcept>
#include <string>

namespace almgren {

enum class ErrorKind {
  unsupported_configuration,
  invalid_coefficients,
  numerical_failure,
  indefinite_form,
  degenerate_indicial,
  forcing_too_singular,
  grid_mismatch,
  aliasing,
  degenerate_solution,
  degenerate_exponent,
  no_eigenvalue_match,
  tail_fit_failure,
  missing_gradient,
  support_violation,
  out_of_range,
  non_convergence,
  parse_error,
  validation_error,
  usage_error,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::unsupported_configuration: return "unsupported-configuration";
    case ErrorKind::invalid_coefficients: return "invalid-coefficients";
    case ErrorKind::numerical_failure: return "numerical-failure";
    case ErrorKind::indefinite_form: return "indefinite-form";
    case ErrorKind::degenerate_indicial: return "degenerate-indicial";
    case ErrorKind::forcing_too_singular: return "forcing-too-singular";
    case ErrorKind::grid_mismatch: return "grid-mismatch";
    case ErrorKind::aliasing: return "aliasing";
    case ErrorKind::degenerate_solution: return "degenerate-solution";
    case ErrorKind::degenerate_exponent: return "degenerate-exponent";
    case ErrorKind::no_eigenvalue_match: return "no-eigenvalue-match";
    case ErrorKind::tail_fit_failure: return "tail-fit-failure";
    case ErrorKind::missing_gradient: return "missing-gradient";
    case ErrorKind::support_violation: return "support-violation";
    case ErrorKind::out_of_range: return "out-of-range";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::validation_error: return "validation-error";
    case ErrorKind::usage_error: return "usage-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace almgren
