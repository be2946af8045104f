#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stackel/error.hpp"

namespace stackel {

/// Uniform grid t0 < t1 with n_steps intervals.
class TimeGrid {
 public:
  TimeGrid(double t0, double t1, std::size_t n_steps) : t0_(t0), t1_(t1), n_(n_steps) {
    if (!(t1 > t0) || !std::isfinite(t0) || !std::isfinite(t1))
      throw ParameterError("time grid needs t1 > t0", "T");
    if (n_steps < 2) throw ParameterError("time grid needs at least 2 steps", "n_steps");
  }

  double t0() const noexcept { return t0_; }
  double t1() const noexcept { return t1_; }
  std::size_t n_steps() const noexcept { return n_; }
  std::size_t size() const noexcept { return n_ + 1; }
  double h() const noexcept { return (t1_ - t0_) / static_cast<double>(n_); }
  double t(std::size_t i) const noexcept {
    return i == n_ ? t1_ : t0_ + static_cast<double>(i) * h();
  }
  std::vector<double> times() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = t(i);
    return out;
  }

 private:
  double t0_;
  double t1_;
  std::size_t n_;
};

/// Named channels sampled on a TimeGrid.
class TrajectoryGrid {
 public:
  explicit TrajectoryGrid(TimeGrid grid) : grid_(grid) {}

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t n_channels() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  void add(const std::string& name, std::vector<double> values) {
    if (values.size() != grid_.size())
      throw ConfigError("channel '" + name + "' has " + std::to_string(values.size()) +
                        " samples, grid has " + std::to_string(grid_.size()));
    if (has(name)) throw ConfigError("duplicate channel '" + name + "'");
    names_.push_back(name);
    values_.push_back(std::move(values));
  }

  bool has(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
  }

  const std::vector<double>& operator[](const std::string& name) const {
    return values_[index_of(name)];
  }
  std::vector<double>& operator[](const std::string& name) { return values_[index_of(name)]; }
  const std::vector<double>& channel(std::size_t i) const { return values_.at(i); }

  double front(const std::string& name) const { return (*this)[name].front(); }
  double back(const std::string& name) const { return (*this)[name].back(); }

  /// Cubic Lagrange interpolation on the four nearest nodes.
  double at(const std::string& name, double t) const { return interpolate(values_[index_of(name)], t); }

  double interpolate(const std::vector<double>& v, double t) const {
    const double h = grid_.h();
    const std::size_t n = grid_.n_steps();
    double s = (t - grid_.t0()) / h;
    s = std::clamp(s, 0.0, static_cast<double>(n));
    if (n < 3) {
      auto i = std::min<std::size_t>(static_cast<std::size_t>(s), n - 1);
      double w = s - static_cast<double>(i);
      return (1 - w) * v[i] + w * v[i + 1];
    }
    auto i = static_cast<std::ptrdiff_t>(std::floor(s)) - 1;
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 3);
    double x = s - static_cast<double>(i);  // nodes sit at 0,1,2,3
    double out = 0;
    for (int j = 0; j < 4; ++j) {
      double w = 1;
      for (int m = 0; m < 4; ++m)
        if (m != j) w *= (x - m) / static_cast<double>(j - m);
      out += w * v[static_cast<std::size_t>(i + j)];
    }
    return out;
  }

 private:
  std::size_t index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ConfigError("unknown channel '" + name + "'");
    return static_cast<std::size_t>(it - names_.begin());
  }

  TimeGrid grid_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> values_;
};

}  // namespace stackel
