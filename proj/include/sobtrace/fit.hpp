#pragma once

// Least-squares extraction of expansion coefficients from (eps, value) data:
//   value ~ sum_k c_k eps^{e_k} [+ c_log eps^{e_log} ln(1/eps)].

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sobtrace/errors.hpp"

namespace sobtrace {

struct FitSample {
  double epsilon = 0.0;
  double value = 0.0;
};

struct FitOptions {
  bool include_log = false;
  double log_exponent = 1.0;
  /// Weight each row by 1/|value| so that data spanning decades is fit in
  /// relative terms.
  bool relative = false;
  double max_condition = 1e12;
};

struct FitResult {
  std::vector<double> coefficients;  // one per exponent, same order
  std::optional<double> log_coefficient;
  double residual = 0.0;             // RMS of the unweighted residuals
  double max_residual = 0.0;
  double condition_number = 0.0;     // of the column-scaled design matrix
};

inline FitResult fit_expansion(std::span<const FitSample> samples,
                               std::span<const double> exponents,
                               const FitOptions& opts = {}) {
  const std::size_t unknowns = exponents.size() + (opts.include_log ? 1 : 0);
  if (unknowns == 0) throw DomainError("fit_expansion: no unknowns");
  if (samples.size() < unknowns + 2) {
    throw DomainError("fit_expansion: need at least " + std::to_string(unknowns + 2) +
                      " samples, got " + std::to_string(samples.size()));
  }
  for (std::size_t i = 0; i < exponents.size(); ++i)
    for (std::size_t j = i + 1; j < exponents.size(); ++j)
      if (exponents[i] == exponents[j])
        throw DomainError("fit_expansion: exponents must be distinct");
  for (const FitSample& s : samples) {
    if (!(s.epsilon > 0.0) || !std::isfinite(s.value)) {
      throw DomainError("fit_expansion: samples need eps > 0 and finite values");
    }
    if (opts.relative && s.value == 0.0) {
      throw DomainError("fit_expansion: relative weighting needs nonzero values");
    }
  }

  const Eigen::Index rows = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(unknowns);
  Eigen::MatrixXd A(rows, cols);
  Eigen::VectorXd b(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const FitSample& s = samples[static_cast<std::size_t>(i)];
    const double w = opts.relative ? 1.0 / std::abs(s.value) : 1.0;
    for (std::size_t k = 0; k < exponents.size(); ++k) {
      A(i, static_cast<Eigen::Index>(k)) = w * std::pow(s.epsilon, exponents[k]);
    }
    if (opts.include_log) {
      A(i, cols - 1) =
          w * std::pow(s.epsilon, opts.log_exponent) * std::log(1.0 / s.epsilon);
    }
    b(i) = w * s.value;
  }

  Eigen::VectorXd scale = A.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < cols; ++k) {
    if (scale(k) == 0.0) throw ConditioningError("fit_expansion: zero column", INFINITY);
    A.col(k) /= scale(k);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
  if (!(cond <= opts.max_condition)) {
    throw ConditioningError("fit_expansion: design matrix condition number " +
                                std::to_string(cond) + " exceeds limit",
                            cond);
  }

  const Eigen::VectorXd scaled = A.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd x = scaled.cwiseQuotient(scale);

  FitResult out;
  out.condition_number = cond;
  out.coefficients.assign(x.data(), x.data() + exponents.size());
  if (opts.include_log) out.log_coefficient = x(cols - 1);

  double sum_sq = 0.0;
  for (const FitSample& s : samples) {
    double model = 0.0;
    for (std::size_t k = 0; k < exponents.size(); ++k)
      model += out.coefficients[k] * std::pow(s.epsilon, exponents[k]);
    if (opts.include_log)
      model += *out.log_coefficient * std::pow(s.epsilon, opts.log_exponent) *
               std::log(1.0 / s.epsilon);
    const double res = s.value - model;
    sum_sq += res * res;
    out.max_residual = std::max(out.max_residual, std::abs(res));
  }
  out.residual = std::sqrt(sum_sq / static_cast<double>(samples.size()));
  return out;
}

inline FitResult fit_expansion(std::span<const FitSample> samples,
                               std::span<const double> exponents, bool include_log) {
  FitOptions opts;
  opts.include_log = include_log;
  return fit_expansion(samples, exponents, opts);
}

}  // namespace sobtrace
