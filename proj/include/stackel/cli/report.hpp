#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stackel/error.hpp"
#include "stackel/numerics/time_grid.hpp"
#include "stackel/penalty.hpp"

namespace stackel::cli {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

/// An inequality lhs <relation> rhs checked with a tolerance.
struct Certificate {
  std::string name;
  double lhs;
  std::string relation;  // "<=", "<", ">=", "|diff|<="
  double rhs;
  double tolerance;
  bool holds;
};

/// Flat key/value report. Keys keep insertion order.
class Report {
 public:
  void set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void set(const std::string& key, double value) { set(key, format_number(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  template <class I>
    requires std::is_integral_v<I>
  void set(const std::string& key, I value) {
    set(key, std::to_string(value));
  }

  void warn(const std::string& text) { warnings_.push_back(text); }
  void warn_all(const std::vector<std::string>& texts) {
    for (auto& t : texts) warn(t);
  }

  /// Records lhs <= rhs + tol.
  bool at_most(const std::string& name, double lhs, double rhs, double tol) {
    return add({name, lhs, "<=", rhs, tol, lhs <= rhs + tol});
  }
  /// Records lhs < rhs (strict, tolerance shown as 0 unless given).
  bool below(const std::string& name, double lhs, double rhs, double tol = 0) {
    return add({name, lhs, "<", rhs, tol, lhs < rhs - tol});
  }
  bool at_least(const std::string& name, double lhs, double rhs, double tol) {
    return add({name, lhs, ">=", rhs, tol, lhs >= rhs - tol});
  }
  /// Records |lhs - rhs| <= tol.
  bool close(const std::string& name, double lhs, double rhs, double tol) {
    return add({name, lhs, "|diff|<=", rhs, tol, std::abs(lhs - rhs) <= tol});
  }
  bool add(Certificate c) {
    certificates_.push_back(c);
    return c.holds;
  }

  void flatten(const std::string& prefix, const nlohmann::json& j) {
    if (j.is_object()) {
      for (auto it = j.begin(); it != j.end(); ++it) flatten(prefix + "." + it.key(), it.value());
    } else if (j.is_string()) {
      set(prefix, j.get<std::string>());
    } else if (j.is_number_float()) {
      set(prefix, j.get<double>());
    } else {
      set(prefix, j.dump());
    }
  }

  const std::vector<Certificate>& certificates() const { return certificates_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  bool all_hold() const {
    for (auto& c : certificates_)
      if (!c.holds) return false;
    return true;
  }

  std::string value(const std::string& key) const {
    for (auto& [k, v] : entries_)
      if (k == key) return v;
    throw ConfigError("report has no key '" + key + "'");
  }

  std::string str() const {
    std::string out;
    for (auto& [k, v] : entries_) out += k + " = " + v + "\n";
    for (auto& c : certificates_) {
      const std::string p = "certificate." + c.name;
      out += p + ".lhs = " + format_number(c.lhs) + "\n";
      out += p + ".relation = " + c.relation + "\n";
      out += p + ".rhs = " + format_number(c.rhs) + "\n";
      out += p + ".tolerance = " + format_number(c.tolerance) + "\n";
      out += p + ".holds = " + (c.holds ? "true" : "false") + "\n";
    }
    out += "warnings.count = " + std::to_string(warnings_.size()) + "\n";
    for (std::size_t i = 0; i < warnings_.size(); ++i)
      out += "warning." + std::to_string(i + 1) + " = " + warnings_[i] + "\n";
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<Certificate> certificates_;
  std::vector<std::string> warnings_;
};

/// Comma-separated table with header `t,channel1,...`.
inline std::string trajectory_csv(const TrajectoryGrid& traj) {
  std::string out = "t";
  for (auto& n : traj.names()) out += "," + n;
  out += "\n";
  const auto& g = traj.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    out += format_number(g.t(i));
    for (std::size_t c = 0; c < traj.n_channels(); ++c) out += "," + format_number(traj.channel(c)[i]);
    out += "\n";
  }
  return out;
}

/// Per-period table for the discrete model; the period index stands in for t.
struct PeriodTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;  // first entry of each row is t
};

inline std::string period_csv(const PeriodTable& t) {
  std::string out = "t";
  for (auto& n : t.names) out += "," + n;
  out += "\n";
  for (auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_number(row[i]);
    out += "\n";
  }
  return out;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& trace) {
  std::string out = "k,J_star,J_tilde,satisfied\n";
  for (auto& s : trace)
    out += format_number(s.k) + "," + format_number(s.j_star) + "," + format_number(s.j_tilde) + "," +
           (s.satisfied ? "true" : "false") + "\n";
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

}  // namespace stackel::cli
