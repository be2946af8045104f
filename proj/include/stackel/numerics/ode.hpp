#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackel/error.hpp"
#include "stackel/numerics/time_grid.hpp"

namespace stackel {

enum class Endpoint { start, end };

struct BoundaryCondition {
  std::size_t index;
  Endpoint at;
  double value;
};

/// y' = M(t) y + v(t) with d boundary constraints.
struct AffineSystem {
  std::size_t dim = 0;
  std::function<Eigen::MatrixXd(double)> matrix;
  std::function<Eigen::VectorXd(double)> offset;
  std::vector<BoundaryCondition> boundary;
  std::vector<std::string> names;

  void validate() const {
    if (dim == 0) throw ConfigError("affine system has dimension 0");
    if (!matrix || !offset) throw ConfigError("affine system is missing coefficient functions");
    if (boundary.size() != dim)
      throw ConfigError("affine system of dimension " + std::to_string(dim) + " has " +
                        std::to_string(boundary.size()) + " boundary constraints");
    std::vector<bool> seen(2 * dim, false);
    for (const auto& bc : boundary) {
      if (bc.index >= dim)
        throw ConfigError("boundary constraint on variable " + std::to_string(bc.index) +
                          " of a " + std::to_string(dim) + "-dimensional system");
      auto slot = bc.index * 2 + (bc.at == Endpoint::end ? 1 : 0);
      if (seen[slot]) throw ConfigError("duplicate boundary constraint");
      seen[slot] = true;
    }
    if (!names.empty() && names.size() != dim)
      throw ConfigError("affine system names do not match its dimension");
  }

  std::string name(std::size_t i) const { return names.empty() ? "y" + std::to_string(i) : names[i]; }
};

namespace detail {

inline void check_finite(const Eigen::MatrixXd& y, std::size_t step, double t) {
  if (!y.allFinite()) throw IntegrationBlowup(step, t);
}

// Z' = M Z + v * e^T, where e selects the columns that carry the offset.
inline std::vector<Eigen::MatrixXd> rk4_affine_columns(const AffineSystem& sys, const TimeGrid& grid,
                                                       Eigen::MatrixXd z, const Eigen::RowVectorXd& e) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(grid.size());
  out.push_back(z);
  const double h = grid.h();
  auto rhs = [&](double t, const Eigen::MatrixXd& y) -> Eigen::MatrixXd {
    return sys.matrix(t) * y + sys.offset(t) * e;
  };
  for (std::size_t i = 0; i < grid.n_steps(); ++i) {
    const double t = grid.t(i);
    Eigen::MatrixXd k1 = rhs(t, z);
    Eigen::MatrixXd k2 = rhs(t + h / 2, z + h / 2 * k1);
    Eigen::MatrixXd k3 = rhs(t + h / 2, z + h / 2 * k2);
    Eigen::MatrixXd k4 = rhs(t + h, z + h * k3);
    z += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    check_finite(z, i + 1, grid.t(i + 1));
    out.push_back(z);
  }
  return out;
}

inline TrajectoryGrid to_trajectory(const AffineSystem& sys, const TimeGrid& grid,
                                    const std::vector<Eigen::VectorXd>& ys) {
  TrajectoryGrid traj(grid);
  for (std::size_t j = 0; j < sys.dim; ++j) {
    std::vector<double> v(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) v[i] = ys[i](static_cast<Eigen::Index>(j));
    traj.add(sys.name(j), std::move(v));
  }
  return traj;
}

}  // namespace detail

/// Classical RK4 for an affine system whose constraints all sit at t0.
inline TrajectoryGrid rk4_solve(const AffineSystem& sys, const TimeGrid& grid) {
  sys.validate();
  const auto d = static_cast<Eigen::Index>(sys.dim);
  Eigen::VectorXd y0(d);
  for (const auto& bc : sys.boundary) {
    if (bc.at != Endpoint::start)
      throw ConfigError("rk4_solve needs every boundary constraint at the initial time");
    y0(static_cast<Eigen::Index>(bc.index)) = bc.value;
  }
  Eigen::RowVectorXd e = Eigen::RowVectorXd::Ones(1);
  auto zs = detail::rk4_affine_columns(sys, grid, y0, e);
  std::vector<Eigen::VectorXd> ys(zs.begin(), zs.end());
  return detail::to_trajectory(sys, grid, ys);
}

struct BvpDiagnostics {
  double condition = 0;
  double boundary_residual = 0;
};

/// Two-point affine boundary problem by superposition: integrate the
/// fundamental matrix and one particular solution, then solve the d x d
/// boundary system.
inline TrajectoryGrid solve_affine_bvp(const AffineSystem& sys, const TimeGrid& grid,
                                       BvpDiagnostics* diag = nullptr) {
  sys.validate();
  const auto d = static_cast<Eigen::Index>(sys.dim);
  Eigen::MatrixXd z0 = Eigen::MatrixXd::Zero(d, d + 1);
  z0.leftCols(d).setIdentity();
  Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(d + 1);
  e(d) = 1;
  auto zs = detail::rk4_affine_columns(sys, grid, z0, e);

  Eigen::MatrixXd bm(d, d);
  Eigen::VectorXd rhs(d);
  for (Eigen::Index r = 0; r < d; ++r) {
    const auto& bc = sys.boundary[static_cast<std::size_t>(r)];
    const auto& z = bc.at == Endpoint::start ? zs.front() : zs.back();
    auto j = static_cast<Eigen::Index>(bc.index);
    bm.row(r) = z.row(j).leftCols(d);
    rhs(r) = bc.value - z(j, d);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(bm);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  const double cond = smin > 0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  if (!(cond < 1e12)) throw IllPosedBvp(cond);
  Eigen::VectorXd c = bm.fullPivLu().solve(rhs);

  std::vector<Eigen::VectorXd> ys;
  ys.reserve(zs.size());
  for (const auto& z : zs) ys.push_back(z.leftCols(d) * c + z.col(d));

  if (diag) {
    diag->condition = cond;
    double res = 0;
    for (const auto& bc : sys.boundary) {
      const auto& y = bc.at == Endpoint::start ? ys.front() : ys.back();
      res = std::max(res, std::abs(y(static_cast<Eigen::Index>(bc.index)) - bc.value));
    }
    diag->boundary_residual = res;
  }
  return detail::to_trajectory(sys, grid, ys);
}

/// Fourth-order finite-difference derivative of grid samples.
inline std::vector<double> fd_derivative(const std::vector<double>& v, double h) {
  const std::size_t n = v.size();
  std::vector<double> d(n);
  if (n < 5) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t a = i == 0 ? 0 : i - 1, b = i + 1 == n ? i : i + 1;
      d[i] = (v[b] - v[a]) / (h * static_cast<double>(b - a));
    }
    return d;
  }
  for (std::size_t i = 2; i + 2 < n; ++i)
    d[i] = (v[i - 2] - 8 * v[i - 1] + 8 * v[i + 1] - v[i + 2]) / (12 * h);
  auto fwd = [&](std::size_t i) {
    return (-25 * v[i] + 48 * v[i + 1] - 36 * v[i + 2] + 16 * v[i + 3] - 3 * v[i + 4]) / (12 * h);
  };
  auto bwd = [&](std::size_t i) {
    return (25 * v[i] - 48 * v[i - 1] + 36 * v[i - 2] - 16 * v[i - 3] + 3 * v[i - 4]) / (12 * h);
  };
  d[0] = fwd(0);
  d[1] = fwd(1);
  d[n - 1] = bwd(n - 1);
  d[n - 2] = bwd(n - 2);
  return d;
}

/// Max over nodes of |y' - M y - v| with y' from fd_derivative.
inline double affine_residual(const AffineSystem& sys, const TrajectoryGrid& traj) {
  const auto& grid = traj.grid();
  const auto d = static_cast<Eigen::Index>(sys.dim);
  std::vector<std::vector<double>> der;
  for (std::size_t j = 0; j < sys.dim; ++j) der.push_back(fd_derivative(traj.channel(j), grid.h()));
  double worst = 0;
  Eigen::VectorXd y(d);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) y(j) = traj.channel(static_cast<std::size_t>(j))[i];
    Eigen::VectorXd f = sys.matrix(grid.t(i)) * y + sys.offset(grid.t(i));
    for (Eigen::Index j = 0; j < d; ++j)
      worst = std::max(worst, std::abs(der[static_cast<std::size_t>(j)][i] - f(j)));
  }
  return worst;
}

/// RK4 for a general system y' = f(t, y). Forward from t0 or backward from t1;
/// the result is indexed like the grid either way.
template <class F>
std::vector<Eigen::VectorXd> rk4_integrate(F&& f, Eigen::VectorXd y, const TimeGrid& grid,
                                           Endpoint from, double blowup = 1e12) {
  const std::size_t n = grid.n_steps();
  std::vector<Eigen::VectorXd> out(n + 1);
  const bool back = from == Endpoint::end;
  const double h = back ? -grid.h() : grid.h();
  std::size_t idx = back ? n : 0;
  out[idx] = y;
  for (std::size_t s = 0; s < n; ++s) {
    const double t = grid.t(idx);
    Eigen::VectorXd k1 = f(t, y);
    Eigen::VectorXd k2 = f(t + h / 2, Eigen::VectorXd(y + h / 2 * k1));
    Eigen::VectorXd k3 = f(t + h / 2, Eigen::VectorXd(y + h / 2 * k2));
    Eigen::VectorXd k4 = f(t + h, Eigen::VectorXd(y + h * k3));
    y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    idx = back ? idx - 1 : idx + 1;
    if (!y.allFinite() || y.cwiseAbs().maxCoeff() > blowup) throw IntegrationBlowup(s + 1, grid.t(idx));
    out[idx] = y;
  }
  return out;
}

}  // namespace stackel
