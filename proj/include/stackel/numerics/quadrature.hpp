#pragma once

#include <cstddef>
#include <vector>

#include "stackel/error.hpp"
#include "stackel/numerics/time_grid.hpp"

namespace stackel {

/// Composite Simpson rule over equally spaced samples (odd sample count).
inline double quad_simpson(const std::vector<double>& f, double h) {
  if (f.size() < 3 || f.size() % 2 == 0)
    throw ConfigError("Simpson quadrature needs an even number of steps, got " +
                      std::to_string(f.size() == 0 ? 0 : f.size() - 1));
  double odd = 0, even = 0;
  const std::size_t n = f.size() - 1;
  for (std::size_t i = 1; i < n; i += 2) odd += f[i];
  for (std::size_t i = 2; i < n; i += 2) even += f[i];
  return h / 3 * (f.front() + 4 * odd + 2 * even + f.back());
}

inline double quad_simpson(const TrajectoryGrid& traj, const std::string& name) {
  return quad_simpson(traj[name], traj.grid().h());
}

inline double quad_trapezoid(const std::vector<double>& f, double h) {
  if (f.size() < 2) throw ConfigError("trapezoid rule needs at least 2 samples");
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return h * s;
}

/// Simpson weights for n_steps (even) intervals of width h.
inline std::vector<double> simpson_weights(std::size_t n_steps, double h) {
  if (n_steps % 2 != 0)
    throw ConfigError("Simpson quadrature needs an even number of steps, got " +
                      std::to_string(n_steps));
  std::vector<double> w(n_steps + 1);
  for (std::size_t i = 0; i <= n_steps; ++i)
    w[i] = (i == 0 || i == n_steps) ? h / 3 : (i % 2 ? 4 * h / 3 : 2 * h / 3);
  return w;
}

inline std::vector<double> trapezoid_weights(std::size_t n_steps, double h) {
  std::vector<double> w(n_steps + 1, h);
  w.front() = w.back() = h / 2;
  return w;
}

}  // namespace stackel
