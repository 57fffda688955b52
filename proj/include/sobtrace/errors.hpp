#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sobtrace {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (Gamma poles,
/// invalid (N, p), nonpositive measures, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An improper integral that does not converge for the requested exponents.
class DivergentIntegralError : public Error {
 public:
  using Error::Error;
};

/// The requested quantity is not defined in the regime selected by (N, p).
class RegimeError : public Error {
 public:
  using Error::Error;
};

/// Adaptive integration ran out of cells before reaching its tolerance.
/// The partial result is kept so callers can still inspect it.
class BudgetError : public Error {
 public:
  BudgetError(const std::string& what, double value, double error_estimate,
              long cells)
      : Error(what), value_(value), error_estimate_(error_estimate),
        cells_(cells) {}

  double value() const { return value_; }
  double error_estimate() const { return error_estimate_; }
  long cells() const { return cells_; }

 private:
  double value_;
  double error_estimate_;
  long cells_;
};

/// Least-squares design matrix too ill-conditioned to trust.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, double condition_number)
      : Error(what), condition_number_(condition_number) {}
  double condition_number() const { return condition_number_; }

 private:
  double condition_number_;
};

/// Iterative solver hit max_iters. Carries the best iterate found.
class IterationError : public Error {
 public:
  IterationError(const std::string& what, double best_value,
                 std::vector<double> best_dofs)
      : Error(what), best_value_(best_value), best_dofs_(std::move(best_dofs)) {}
  double best_value() const { return best_value_; }
  const std::vector<double>& best_dofs() const { return best_dofs_; }

 private:
  double best_value_;
  std::vector<double> best_dofs_;
};

/// Constraint set leaves nothing to optimize over (e.g. a hole that covers
/// every boundary vertex).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration or input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sobtrace
