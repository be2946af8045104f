#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include "stackel/error.hpp"

namespace stackel {

struct BisectResult {
  double root;        // midpoint (function mode) or the satisfying end (predicate mode)
  double lo;          // final bracket
  double hi;
  std::size_t iterations;
};

inline std::size_t bisect_iteration_bound(double lo, double hi, double tol) {
  return static_cast<std::size_t>(std::ceil(std::log2((hi - lo) / tol)));
}

/// Root of a scalar function that changes sign on [lo, hi].
inline BisectResult find_root_bisect(const std::function<double(double)>& f, double lo, double hi,
                                     double tol) {
  if (!(hi > lo) || !(tol > 0)) throw ParameterError("bisection needs lo < hi and tol > 0");
  double flo = f(lo), fhi = f(hi);
  if (!std::isfinite(flo) || !std::isfinite(fhi))
    throw BracketError("non-finite function value at bracket end");
  if (flo == 0) return {lo, lo, lo, 0};
  if (fhi == 0) return {hi, hi, hi, 0};
  if ((flo < 0) == (fhi < 0))
    throw BracketError("no sign change on [" + std::to_string(lo) + ", " + std::to_string(hi) +
                       "]: f = " + std::to_string(flo) + ", " + std::to_string(fhi));
  std::size_t it = 0;
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    double fm = f(mid);
    ++it;
    if (fm == 0) return {mid, mid, mid, it};
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return {0.5 * (lo + hi), lo, hi, it};
}

/// Threshold of a monotone predicate on [lo, hi]. The predicate must differ at
/// the two ends; the returned root is the end of the final bracket on the side
/// where the predicate holds.
inline BisectResult find_threshold_bisect(const std::function<bool(double)>& pred, double lo,
                                          double hi, double tol) {
  if (!(hi > lo) || !(tol > 0)) throw ParameterError("bisection needs lo < hi and tol > 0");
  const bool plo = pred(lo), phi = pred(hi);
  if (plo == phi)
    throw BracketError("predicate does not change on [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
  std::size_t it = 0;
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    ++it;
    if (pred(mid) == plo)
      lo = mid;
    else
      hi = mid;
  }
  return {phi ? hi : lo, lo, hi, it};
}

}  // namespace stackel
