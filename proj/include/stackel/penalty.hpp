#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace stackel {

/// One probe of a penalty search: equilibrium payoff vs punished defection
/// payoff at rate k.
struct SweepPoint {
  double k;
  double j_star;
  double j_tilde;
  bool satisfied;
};

struct PenaltySearchResult {
  double k_min = 0;
  double lo = 0;  // final bracket
  double hi = 0;
  double tol = 0;
  std::size_t iterations = 0;
  // certificate at k_min: j_tilde <= j_star (plus any statistical margin)
  double j_star = 0;
  double j_tilde = 0;
  bool certified = false;
  std::vector<SweepPoint> trace;
  std::vector<std::string> notes;
};

}  // namespace stackel
