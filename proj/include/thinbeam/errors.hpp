#pragma once

#include <stdexcept>
#include <string>

namespace thinbeam {

/// A function was evaluated outside its domain (e.g. polar factor at det F <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid parameters or configuration; maps to exit code 2 in the CLI.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Nonlinear solver did not converge.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string &what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// A proof object could not be formed from a solution (e.g. projection onto
/// SO(2) undefined).
class DiagnosticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lipschitz truncation found no admissible good set.
class TruncationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Determinant guard tripped at a quadrature point during assembly; the
/// caller is expected to reject the step.
class StepRejected : public std::runtime_error {
 public:
  StepRejected(int element, int qp, double det_value)
      : std::runtime_error("det grad_h y = " + std::to_string(det_value) + " at element " +
                           std::to_string(element) + ", quadrature point " + std::to_string(qp)),
        element_(element),
        qp_(qp),
        det_(det_value) {}
  int element() const { return element_; }
  int qp() const { return qp_; }
  double det_value() const { return det_; }

 private:
  int element_;
  int qp_;
  double det_;
};

}  // namespace thinbeam
