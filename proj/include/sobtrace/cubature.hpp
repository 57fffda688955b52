#pragma once

// Globally adaptive cubature over hyper-rectangles.
//
// Dim == 1 uses the 7/15-point Gauss-Kronrod pair, Dim >= 2 the degree-7/5
// Genz-Malik pair. The region with the largest error estimate is bisected
// along the coordinate with the largest fourth difference until the summed
// error estimate meets the tolerance or the cell budget runs out.
//
// Runs are deterministic: the heap breaks ties by region id and the final
// value is a pairwise sum over regions in id order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "sobtrace/errors.hpp"

namespace sobtrace {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  long cells = 0;
};

struct CubatureOptions {
  double rel_tol = 1e-10;
  double abs_tol = 0.0;
  long max_cells = 400000;
  /// Equal initial subdivisions per coordinate.
  int initial_splits = 1;
};

/// Sum in a fixed binary-tree order; independent of how values were produced.
inline double pairwise_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t mid = v.size() / 2;
  return pairwise_sum(v.first(mid)) + pairwise_sum(v.subspan(mid));
}

template <std::size_t Dim>
using Point = std::array<double, Dim>;

namespace detail {

template <std::size_t Dim>
struct Region {
  Point<Dim> center{};
  Point<Dim> half_width{};
  double value = 0.0;
  double error = 0.0;
  std::size_t split_dim = 0;
  long id = 0;
};

struct RuleOutput {
  double value;
  double error;
  std::size_t split_dim;
};

template <class F>
RuleOutput gauss_kronrod15(F& f, const Region<1>& r) {
  static constexpr double xgk[8] = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr double wgk[8] = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr double wg[4] = {
      0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
      0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

  const double c = r.center[0];
  const double h = r.half_width[0];
  const double fc = f(Point<1>{c});
  double kronrod = wgk[7] * fc;
  double gauss = wg[3] * fc;
  for (int j = 0; j < 7; ++j) {
    const double dx = h * xgk[j];
    const double fsum = f(Point<1>{c - dx}) + f(Point<1>{c + dx});
    kronrod += wgk[j] * fsum;
    if (j % 2 == 1) gauss += wg[j / 2] * fsum;
  }
  return {kronrod * h, std::abs((kronrod - gauss) * h), 0};
}

template <std::size_t Dim, class F>
RuleOutput genz_malik(F& f, const Region<Dim>& r) {
  static_assert(Dim >= 2);
  constexpr double n = static_cast<double>(Dim);
  constexpr double lambda2 = 0.35856858280031809199064515390793749545406372969943;
  constexpr double lambda4 = 0.94868329805051379959966806332981556011586654179756;
  constexpr double lambda5 = 0.68824720161168529772162873429362352512689535661564;
  constexpr double weight1 = (12824.0 - (9120.0 - 400.0 * n) * n) / 19683.0;
  constexpr double weight2 = 980.0 / 6561.0;
  constexpr double weight3 = (1820.0 - 400.0 * n) / 19683.0;
  constexpr double weight4 = 200.0 / 19683.0;
  constexpr double weight5 = 6859.0 / 19683.0 / static_cast<double>(1u << Dim);
  constexpr double weightE1 = (729.0 - 50.0 * (19.0 - n) * n) / 729.0;
  constexpr double weightE2 = 245.0 / 486.0;
  constexpr double weightE3 = (265.0 - 100.0 * n) / 1458.0;
  constexpr double weightE4 = 25.0 / 729.0;
  constexpr double ratio = (lambda2 * lambda2) / (lambda4 * lambda4);

  double volume = 1.0;
  for (double hw : r.half_width) volume *= 2.0 * hw;

  Point<Dim> x = r.center;
  const double f0 = f(x);
  double sum2 = 0.0, sum3 = 0.0, sum4 = 0.0, sum5 = 0.0;
  std::array<double, Dim> diff{};

  for (std::size_t i = 0; i < Dim; ++i) {
    const double c = r.center[i];
    x[i] = c - lambda2 * r.half_width[i];
    const double a1 = f(x);
    x[i] = c + lambda2 * r.half_width[i];
    const double a2 = f(x);
    x[i] = c - lambda4 * r.half_width[i];
    const double b1 = f(x);
    x[i] = c + lambda4 * r.half_width[i];
    const double b2 = f(x);
    x[i] = c;
    sum2 += a1 + a2;
    sum3 += b1 + b2;
    diff[i] = std::abs(a1 + a2 - 2.0 * f0 - ratio * (b1 + b2 - 2.0 * f0));
  }

  for (std::size_t i = 0; i < Dim; ++i) {
    for (std::size_t j = i + 1; j < Dim; ++j) {
      for (int si = -1; si <= 1; si += 2) {
        for (int sj = -1; sj <= 1; sj += 2) {
          x[i] = r.center[i] + si * lambda4 * r.half_width[i];
          x[j] = r.center[j] + sj * lambda4 * r.half_width[j];
          sum4 += f(x);
        }
      }
      x[i] = r.center[i];
      x[j] = r.center[j];
    }
  }

  for (unsigned mask = 0; mask < (1u << Dim); ++mask) {
    for (std::size_t i = 0; i < Dim; ++i) {
      const double s = (mask >> i) & 1u ? 1.0 : -1.0;
      x[i] = r.center[i] + s * lambda5 * r.half_width[i];
    }
    sum5 += f(x);
  }

  const double result = volume * (weight1 * f0 + weight2 * sum2 + weight3 * sum3 +
                                   weight4 * sum4 + weight5 * sum5);
  const double res5 =
      volume * (weightE1 * f0 + weightE2 * sum2 + weightE3 * sum3 + weightE4 * sum4);

  // Split along the largest fourth difference; near-ties go to the widest side.
  std::size_t split = 0;
  double best = diff[0];
  for (std::size_t i = 1; i < Dim; ++i) {
    if (diff[i] > best * (1.0 + 1e-10)) {
      best = diff[i];
      split = i;
    } else if (std::abs(diff[i] - best) <= best * 1e-10 &&
               r.half_width[i] > r.half_width[split]) {
      split = i;
    }
  }
  return {result, std::abs(result - res5), split};
}

template <std::size_t Dim, class F>
void evaluate(F& f, Region<Dim>& r) {
  RuleOutput out;
  if constexpr (Dim == 1) {
    out = gauss_kronrod15(f, r);
  } else {
    out = genz_malik<Dim>(f, r);
  }
  if (!std::isfinite(out.value) || !std::isfinite(out.error)) {
    throw DomainError("adaptive_integrate: integrand is not finite on a cell");
  }
  r.value = out.value;
  r.error = out.error;
  r.split_dim = out.split_dim;
}

}  // namespace detail

/// Integrate f over the box [lo, hi]. f takes a Point<Dim> and returns double.
/// Throws BudgetError (with the partial result) if the tolerance is not met
/// within opts.max_cells regions.
template <std::size_t Dim, class F>
QuadratureResult adaptive_integrate(F&& f, const Point<Dim>& lo,
                                    const Point<Dim>& hi,
                                    const CubatureOptions& opts = {}) {
  static_assert(Dim >= 1 && Dim <= 6, "adaptive_integrate: 1 <= Dim <= 6");
  using Region = detail::Region<Dim>;

  std::vector<Region> regions;
  long next_id = 0;

  // Tensor initial partition.
  const int k = std::max(1, opts.initial_splits);
  std::size_t total = 1;
  for (std::size_t d = 0; d < Dim; ++d) total *= static_cast<std::size_t>(k);
  regions.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Region r;
    std::size_t rem = idx;
    for (std::size_t d = 0; d < Dim; ++d) {
      const std::size_t cell = rem % static_cast<std::size_t>(k);
      rem /= static_cast<std::size_t>(k);
      const double width = (hi[d] - lo[d]) / k;
      r.center[d] = lo[d] + (static_cast<double>(cell) + 0.5) * width;
      r.half_width[d] = 0.5 * width;
    }
    r.id = next_id++;
    detail::evaluate<Dim>(f, r);
    regions.push_back(r);
  }

  auto worse = [&regions](std::size_t a, std::size_t b) {
    if (regions[a].error != regions[b].error) return regions[a].error < regions[b].error;
    return regions[a].id > regions[b].id;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(worse)> heap(worse);
  double value = 0.0, error = 0.0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    heap.push(i);
    value += regions[i].value;
    error += regions[i].error;
  }

  auto converged = [&](double v, double e) {
    return e <= std::max(opts.abs_tol, opts.rel_tol * std::abs(v));
  };

  auto resum = [&] {
    value = 0.0;
    error = 0.0;
    for (const Region& r : regions) {
      value += r.value;
      error += r.error;
    }
  };

  long iterations = 0;
  bool met = false;
  for (;;) {
    if (converged(value, error)) {
      // Confirm against fresh sums before stopping.
      resum();
      if (converged(value, error)) {
        met = true;
        break;
      }
    }
    if (static_cast<long>(regions.size()) + 1 > opts.max_cells) break;
    const std::size_t worst = heap.top();
    heap.pop();
    Region parent = regions[worst];
    const std::size_t d = parent.split_dim;

    Region left = parent;
    Region right = parent;
    left.half_width[d] = right.half_width[d] = 0.5 * parent.half_width[d];
    left.center[d] = parent.center[d] - left.half_width[d];
    right.center[d] = parent.center[d] + right.half_width[d];
    left.id = next_id++;
    right.id = next_id++;
    detail::evaluate<Dim>(f, left);
    detail::evaluate<Dim>(f, right);
    // The rule pair can agree by accident on an unresolved feature; the change
    // against the parent value is a second, independent error indicator.
    const double jump = 0.5 * std::abs(left.value + right.value - parent.value);
    left.error = std::max(left.error, jump);
    right.error = std::max(right.error, jump);

    value += left.value + right.value - parent.value;
    error += left.error + right.error - parent.error;

    regions[worst] = left;
    heap.push(worst);
    regions.push_back(right);
    heap.push(regions.size() - 1);

    // Resum now and then so the running totals do not drift.
    if (++iterations % 4096 == 0) resum();
  }

  std::sort(regions.begin(), regions.end(),
            [](const Region& a, const Region& b) { return a.id < b.id; });
  std::vector<double> values(regions.size()), errors(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    values[i] = regions[i].value;
    errors[i] = regions[i].error;
  }
  QuadratureResult result{pairwise_sum(values), pairwise_sum(errors),
                          static_cast<long>(regions.size())};
  if (!met) {
    throw BudgetError("adaptive_integrate: cell budget of " +
                          std::to_string(opts.max_cells) +
                          " exhausted before reaching tolerance",
                      result.value, result.error_estimate, result.cells);
  }
  return result;
}

}  // namespace sobtrace
