#pragma once

#include <stdexcept>
#include <string>

namespace dcopf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed case file or a violated case invariant.
class CaseError : public Error {
 public:
  CaseError(const std::string& message, std::string element = {})
      : Error(element.empty() ? message : message + " [" + element + "]"),
        element_(std::move(element)) {}

  /// Id of the offending element, empty when the error is not element-specific.
  const std::string& element() const { return element_; }

 private:
  std::string element_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A load voltage is too close to zero for the constant-power current p/v.
class SingularStateError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double last_residual)
      : Error(message), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// A linear system that must be solved is singular.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Optimization problem has no feasible point (as detected by the solver).
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& message, std::string binding)
      : Error(message + (binding.empty() ? "" : " (binding: " + binding + ")")),
        binding_(std::move(binding)) {}
  const std::string& binding_constraint() const { return binding_; }

 private:
  std::string binding_;
};

/// Caller asked for something outside a documented size limit.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Linear part of the network model is not Hurwitz.
class NotHurwitzError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcopf
