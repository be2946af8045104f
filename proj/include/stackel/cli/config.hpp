#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>

#include <json.hpp>

#include "stackel/discrete.hpp"
#include "stackel/dynamic.hpp"
#include "stackel/error.hpp"
#include "stackel/meanfield.hpp"

namespace stackel::cli {

enum class Model { discrete, dynamic, meanfield };
enum class Action { equilibrium, defect, threshold_k, verify };

inline std::string to_string(Model m) {
  switch (m) {
    case Model::discrete: return "discrete";
    case Model::dynamic: return "dynamic";
    case Model::meanfield: return "meanfield";
  }
  return "?";
}

inline std::string to_string(Action a) {
  switch (a) {
    case Action::equilibrium: return "equilibrium";
    case Action::defect: return "defect";
    case Action::threshold_k: return "threshold-k";
    case Action::verify: return "verify";
  }
  return "?";
}

inline Model parse_model(const std::string& s) {
  if (s == "discrete") return Model::discrete;
  if (s == "dynamic") return Model::dynamic;
  if (s == "meanfield") return Model::meanfield;
  throw ConfigError("unknown model '" + s + "' (expected discrete, dynamic or meanfield)");
}

inline Action parse_action(const std::string& s) {
  if (s == "equilibrium") return Action::equilibrium;
  if (s == "defect") return Action::defect;
  if (s == "threshold-k") return Action::threshold_k;
  if (s == "verify") return Action::verify;
  throw ConfigError("unknown action '" + s + "' (expected equilibrium, defect, threshold-k or verify)");
}

struct GridSettings {
  std::size_t steps = 2000;
  bool operator==(const GridSettings&) const = default;
};

struct McSettings {
  std::size_t paths = 10000;
  std::uint64_t seed = 42;
  std::size_t steps = 1000;
  bool zero_noise = false;
  meanfield::DiffusionReading diffusion = meanfield::DiffusionReading::own_state;
  meanfield::EulerCoupling euler_coupling = meanfield::EulerCoupling::frozen;
  bool operator==(const McSettings&) const = default;
};

/// Penalty rate and defection time for the `defect` action.
struct DefectSettings {
  double k = 0.1;
  double t0 = 0;
  std::size_t m = 1;  // discrete: first defection period
  bool operator==(const DefectSettings&) const = default;
};

struct DiscreteSettings {
  std::size_t periods = 10;
  discrete::DefectionStart defection_start = discrete::DefectionStart::worst_case;
  std::size_t m = 1;  // used with a fixed defection start
  bool operator==(const DiscreteSettings&) const = default;
};

struct ModelOptions {
  meanfield::SystemForm form = meanfield::SystemForm::derived;
  dynamic::RateReading rate_reading = dynamic::RateReading::original;
  bool operator==(const ModelOptions&) const = default;
};

using Params = std::variant<discrete::DuopolyParams, dynamic::DynamicParams, meanfield::MfgParams>;

struct RunConfig {
  Model model = Model::discrete;
  Action action = Action::equilibrium;
  Params params = discrete::DuopolyParams{};
  GridSettings grid;
  McSettings monte_carlo;
  DefectSettings defect;
  DiscreteSettings search;
  ModelOptions options;
  bool operator==(const RunConfig&) const = default;
};

inline Params default_params(Model m) {
  switch (m) {
    case Model::discrete: return discrete::DuopolyParams{};
    case Model::dynamic: return dynamic::DynamicParams{};
    case Model::meanfield: return meanfield::MfgParams{};
  }
  return discrete::DuopolyParams{};
}

namespace detail {

using nlohmann::json;

// Parameter fields by model, in emit order.
template <class P>
struct Fields;

template <>
struct Fields<discrete::DuopolyParams> {
  static auto list() {
    using P = discrete::DuopolyParams;
    return std::vector<std::pair<const char*, double P::*>>{
        {"a", &P::a}, {"b", &P::b}, {"c0", &P::c0}, {"c1", &P::c1}, {"delta", &P::depreciation}, {"x1_0", &P::x1_0}};
  }
};

template <>
struct Fields<dynamic::DynamicParams> {
  static auto list() {
    using P = dynamic::DynamicParams;
    return std::vector<std::pair<const char*, double P::*>>{
        {"a", &P::a},         {"b", &P::b},         {"cbar1", &P::cbar1}, {"c0", &P::c0}, {"gamma", &P::gamma},
        {"delta", &P::delta}, {"r", &P::r},         {"T", &P::T},         {"x1_0", &P::x1_0}};
  }
};

template <>
struct Fields<meanfield::MfgParams> {
  static auto list() {
    using P = meanfield::MfgParams;
    return std::vector<std::pair<const char*, double P::*>>{
        {"A0", &P::A0}, {"B0", &P::B0}, {"C0", &P::C0}, {"A", &P::A},         {"B", &P::B},
        {"C", &P::C},   {"D", &P::D},   {"a0", &P::a0}, {"a", &P::a},         {"l0", &P::l0},
        {"l", &P::l},   {"b0", &P::b0}, {"b", &P::b},   {"sigma", &P::sigma}, {"r", &P::r},
        {"T", &P::T},   {"x0_init", &P::x0_init},       {"xbar_init", &P::xbar_init}};
  }
};

inline void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + (where.empty() ? it.key() : where + "." + it.key()) + "'");
}

inline std::string path_of(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

inline void read(const json& obj, const std::string& where, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("'" + path_of(where, key) + "' must be a number");
  out = v.get<double>();
}

template <class U>
  requires std::is_unsigned_v<U>
void read(const json& obj, const std::string& where, const char* key, U& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned()) throw ConfigError("'" + path_of(where, key) + "' must be a non-negative integer");
  out = v.get<U>();
}

inline void read(const json& obj, const std::string& where, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("'" + path_of(where, key) + "' must be true or false");
  out = v.get<bool>();
}

template <class E>
void read_enum(const json& obj, const std::string& where, const char* key, E& out,
               const std::vector<std::pair<const char*, E>>& names) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  std::string opts;
  for (auto& [n, e] : names) opts += (opts.empty() ? "" : ", ") + std::string(n);
  if (!v.is_string()) throw ConfigError("'" + path_of(where, key) + "' must be one of: " + opts);
  for (auto& [n, e] : names)
    if (v.get<std::string>() == n) {
      out = e;
      return;
    }
  throw ConfigError("'" + path_of(where, key) + "' has unknown value '" + v.get<std::string>() +
                    "' (expected one of: " + opts + ")");
}

template <class E>
std::string enum_name(E e, const std::vector<std::pair<const char*, E>>& names) {
  for (auto& [n, v] : names)
    if (v == e) return n;
  return "?";
}

inline const std::vector<std::pair<const char*, meanfield::DiffusionReading>>& diffusion_names() {
  static const std::vector<std::pair<const char*, meanfield::DiffusionReading>> v{
      {"own_state", meanfield::DiffusionReading::own_state}, {"literal", meanfield::DiffusionReading::literal}};
  return v;
}
inline const std::vector<std::pair<const char*, meanfield::EulerCoupling>>& coupling_names() {
  static const std::vector<std::pair<const char*, meanfield::EulerCoupling>> v{
      {"frozen", meanfield::EulerCoupling::frozen}, {"resimulate", meanfield::EulerCoupling::resimulate}};
  return v;
}
inline const std::vector<std::pair<const char*, meanfield::SystemForm>>& form_names() {
  static const std::vector<std::pair<const char*, meanfield::SystemForm>> v{
      {"derived", meanfield::SystemForm::derived}, {"printed", meanfield::SystemForm::printed}};
  return v;
}
inline const std::vector<std::pair<const char*, dynamic::RateReading>>& rate_names() {
  static const std::vector<std::pair<const char*, dynamic::RateReading>> v{
      {"original", dynamic::RateReading::original}, {"raised", dynamic::RateReading::raised}};
  return v;
}
inline const std::vector<std::pair<const char*, discrete::DefectionStart>>& start_names() {
  static const std::vector<std::pair<const char*, discrete::DefectionStart>> v{
      {"worst_case", discrete::DefectionStart::worst_case}, {"fixed", discrete::DefectionStart::fixed}};
  return v;
}

template <class P>
P read_params(const json& obj) {
  P p{};
  std::set<std::string> allowed;
  for (auto& [n, m] : Fields<P>::list()) allowed.insert(n);
  check_keys(obj, "params", allowed);
  for (auto& [n, m] : Fields<P>::list()) read(obj, "params", n, p.*m);
  return p;
}

template <class P>
json write_params(const P& p) {
  json out = json::object();
  for (auto& [n, m] : Fields<P>::list()) out[n] = p.*m;
  return out;
}

}  // namespace detail

/// Parses a JSON configuration. Missing keys take defaults; unknown keys and
/// type mismatches are rejected. `model` and `action` in the document, when
/// present, must agree with the ones given.
inline RunConfig parse_config(const std::string& text, std::optional<Model> model = std::nullopt,
                              std::optional<Action> action = std::nullopt) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  detail::check_keys(doc, "", {"model", "action", "params", "grid", "monte_carlo", "defect", "search", "options"});
  RunConfig c;
  if (doc.contains("model")) {
    if (!doc["model"].is_string()) throw ConfigError("'model' must be a string");
    c.model = parse_model(doc["model"].get<std::string>());
    if (model && *model != c.model)
      throw ConfigError("configuration is for model '" + to_string(c.model) + "' but '" + to_string(*model) +
                        "' was requested");
  } else if (model) {
    c.model = *model;
  } else {
    throw ConfigError("no model given");
  }
  if (doc.contains("action")) {
    if (!doc["action"].is_string()) throw ConfigError("'action' must be a string");
    c.action = parse_action(doc["action"].get<std::string>());
    if (action && *action != c.action)
      throw ConfigError("configuration is for action '" + to_string(c.action) + "' but '" + to_string(*action) +
                        "' was requested");
  } else if (action) {
    c.action = *action;
  }

  const json params = doc.value("params", json::object());
  switch (c.model) {
    case Model::discrete: c.params = detail::read_params<discrete::DuopolyParams>(params); break;
    case Model::dynamic: c.params = detail::read_params<dynamic::DynamicParams>(params); break;
    case Model::meanfield: c.params = detail::read_params<meanfield::MfgParams>(params); break;
  }
  if (doc.contains("grid")) {
    detail::check_keys(doc["grid"], "grid", {"steps"});
    detail::read(doc["grid"], "grid", "steps", c.grid.steps);
  }
  if (doc.contains("monte_carlo")) {
    const auto& m = doc["monte_carlo"];
    detail::check_keys(m, "monte_carlo", {"paths", "seed", "steps", "zero_noise", "diffusion", "euler_coupling"});
    detail::read(m, "monte_carlo", "paths", c.monte_carlo.paths);
    detail::read(m, "monte_carlo", "seed", c.monte_carlo.seed);
    detail::read(m, "monte_carlo", "steps", c.monte_carlo.steps);
    detail::read(m, "monte_carlo", "zero_noise", c.monte_carlo.zero_noise);
    detail::read_enum(m, "monte_carlo", "diffusion", c.monte_carlo.diffusion, detail::diffusion_names());
    detail::read_enum(m, "monte_carlo", "euler_coupling", c.monte_carlo.euler_coupling, detail::coupling_names());
  }
  if (doc.contains("defect")) {
    const auto& d = doc["defect"];
    detail::check_keys(d, "defect", {"k", "t0", "m"});
    detail::read(d, "defect", "k", c.defect.k);
    detail::read(d, "defect", "t0", c.defect.t0);
    detail::read(d, "defect", "m", c.defect.m);
  }
  if (doc.contains("search")) {
    const auto& s = doc["search"];
    detail::check_keys(s, "search", {"periods", "defection_start", "m"});
    detail::read(s, "search", "periods", c.search.periods);
    detail::read_enum(s, "search", "defection_start", c.search.defection_start, detail::start_names());
    detail::read(s, "search", "m", c.search.m);
  }
  if (doc.contains("options")) {
    const auto& o = doc["options"];
    detail::check_keys(o, "options", {"form", "rate_reading"});
    detail::read_enum(o, "options", "form", c.options.form, detail::form_names());
    detail::read_enum(o, "options", "rate_reading", c.options.rate_reading, detail::rate_names());
  }
  return c;
}

inline nlohmann::json config_json(const RunConfig& c) {
  using nlohmann::json;
  json doc;
  doc["model"] = to_string(c.model);
  doc["action"] = to_string(c.action);
  doc["params"] = std::visit([](const auto& p) { return detail::write_params(p); }, c.params);
  doc["grid"] = {{"steps", c.grid.steps}};
  doc["monte_carlo"] = {{"paths", c.monte_carlo.paths},
                        {"seed", c.monte_carlo.seed},
                        {"steps", c.monte_carlo.steps},
                        {"zero_noise", c.monte_carlo.zero_noise},
                        {"diffusion", detail::enum_name(c.monte_carlo.diffusion, detail::diffusion_names())},
                        {"euler_coupling", detail::enum_name(c.monte_carlo.euler_coupling, detail::coupling_names())}};
  doc["defect"] = {{"k", c.defect.k}, {"t0", c.defect.t0}, {"m", c.defect.m}};
  doc["search"] = {{"periods", c.search.periods},
                   {"defection_start", detail::enum_name(c.search.defection_start, detail::start_names())},
                   {"m", c.search.m}};
  doc["options"] = {{"form", detail::enum_name(c.options.form, detail::form_names())},
                    {"rate_reading", detail::enum_name(c.options.rate_reading, detail::rate_names())}};
  return doc;
}

/// Full configuration with every default written out.
inline std::string emit_config(const RunConfig& c) { return config_json(c).dump(2) + "\n"; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read configuration file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace stackel::cli
