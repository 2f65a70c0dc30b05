#pragma once

#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sase/attack.hpp"
#include "sase/common.hpp"
#include "sase/estimator.hpp"
#include "sase/ieee14.hpp"
#include "sase/model.hpp"
#include "sase/schedule.hpp"

namespace sase {

using nlohmann::json;

namespace detail {

/// Strict-schema guard: every present key must be known, every required key
/// present. Unknown keys are hard errors so config typos cannot silently
/// fall back to defaults.
inline void require_keys(const json& j, const std::string& context,
                         const std::vector<std::string>& required,
                         const std::vector<std::string>& optional) {
  if (!j.is_object())
    throw ScenarioError(context + ": expected an object");
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    const bool known =
        std::find(required.begin(), required.end(), key) != required.end() ||
        std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) throw ScenarioError(context + ": unknown key \"" + key + "\"");
  }
  for (const std::string& key : required)
    if (!j.contains(key))
      throw ScenarioError(context + ": missing required key \"" + key + "\"");
}

inline double get_number(const json& j, const std::string& context,
                         const std::string& key) {
  if (!j.at(key).is_number())
    throw ScenarioError(context + ": \"" + key + "\" must be a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v))
    throw ScenarioError(context + ": \"" + key + "\" must be finite");
  return v;
}

inline double get_number_or(const json& j, const std::string& context,
                            const std::string& key, double fallback) {
  return j.contains(key) ? get_number(j, context, key) : fallback;
}

inline int get_int(const json& j, const std::string& context,
                   const std::string& key) {
  if (!j.at(key).is_number_integer())
    throw ScenarioError(context + ": \"" + key + "\" must be an integer");
  return j.at(key).get<int>();
}

inline bool get_bool_or(const json& j, const std::string& context,
                        const std::string& key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean())
    throw ScenarioError(context + ": \"" + key + "\" must be a boolean");
  return j.at(key).get<bool>();
}

inline std::uint64_t get_seed_or(const json& j, const std::string& context,
                                 const std::string& key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_unsigned() && !j.at(key).is_number_integer())
    throw ScenarioError(context + ": \"" + key + "\" must be a nonnegative integer");
  const auto v = j.at(key).get<std::int64_t>();
  if (v < 0)
    throw ScenarioError(context + ": \"" + key + "\" must be a nonnegative integer");
  return std::uint64_t(v);
}

}  // namespace detail

/// Dense matrix <-> nested-array JSON. Rows must be equal length and every
/// entry a finite number.
inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& context) {
  if (!j.is_array() || j.empty())
    throw ScenarioError(context + ": expected a non-empty array of rows");
  const std::size_t rows = j.size();
  if (!j.at(0).is_array() || j.at(0).empty())
    throw ScenarioError(context + ": rows must be non-empty arrays");
  const std::size_t cols = j.at(0).size();
  Eigen::MatrixXd M{Eigen::Index(rows), Eigen::Index(cols)};
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = j.at(r);
    if (!row.is_array() || row.size() != cols)
      throw ScenarioError(context + ": row " + std::to_string(r + 1) +
                          " has inconsistent length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row.at(c).is_number())
        throw ScenarioError(context + ": entry (" + std::to_string(r + 1) + "," +
                            std::to_string(c + 1) + ") is not a number");
      const double v = row.at(c).get<double>();
      if (!std::isfinite(v))
        throw ScenarioError(context + ": entry (" + std::to_string(r + 1) + "," +
                            std::to_string(c + 1) + ") is not finite");
      M(Eigen::Index(r), Eigen::Index(c)) = v;
    }
  }
  return M;
}

inline json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline ContinuousModel model_from_json(const json& j) {
  detail::require_keys(j, "model", {"A", "C", "Q", "Rbar", "Sigma"}, {});
  ContinuousModel model;
  model.A = matrix_from_json(j.at("A"), "model.A");
  model.C = matrix_from_json(j.at("C"), "model.C");
  model.Q = matrix_from_json(j.at("Q"), "model.Q");
  model.Rbar = matrix_from_json(j.at("Rbar"), "model.Rbar");
  model.Sigma = matrix_from_json(j.at("Sigma"), "model.Sigma");
  return model;
}

inline json model_to_json(const ContinuousModel& model) {
  return json{{"A", matrix_to_json(model.A)},
              {"C", matrix_to_json(model.C)},
              {"Q", matrix_to_json(model.Q)},
              {"Rbar", matrix_to_json(model.Rbar)},
              {"Sigma", matrix_to_json(model.Sigma)}};
}

/// Attack actions in config documents use 1-based sensor indices and one of
/// two forms per type: exact (keyed by "time") or windowed (keyed by
/// "time_from"/"time_to"). Required value fields per type:
///   inject:   value (exact and windowed)
///   retime:   retime_to (exact), shift (windowed)
///   dos:      nothing extra
///   generate: value (exact), value + period (windowed)
inline AttackAction action_from_json(const json& j, int m) {
  const std::string context = "attack.actions[]";
  if (!j.is_object()) throw ScenarioError(context + ": expected an object");
  if (!j.contains("type") || !j.at("type").is_string())
    throw ScenarioError(context + ": missing string key \"type\"");
  if (!j.contains("sensor"))
    throw ScenarioError(context + ": missing key \"sensor\"");

  AttackAction a;
  const std::string type = j.at("type").get<std::string>();
  if (type == "inject") a.type = AttackType::kInject;
  else if (type == "retime") a.type = AttackType::kRetime;
  else if (type == "dos") a.type = AttackType::kDos;
  else if (type == "generate") a.type = AttackType::kGenerate;
  else throw ScenarioError(context + ": unknown type \"" + type + "\"");

  const int sensor = detail::get_int(j, context, "sensor");
  if (sensor < 1 || sensor > m)
    throw ScenarioError(context + ": sensor " + std::to_string(sensor) +
                        " out of range 1.." + std::to_string(m));
  a.sensor = sensor - 1;

  const bool windowed = j.contains("time_from") || j.contains("time_to");
  a.windowed = windowed;
  std::vector<std::string> keys = {"type", "sensor"};
  if (windowed) {
    keys.push_back("time_from");
    keys.push_back("time_to");
  } else {
    keys.push_back("time");
  }
  switch (a.type) {
    case AttackType::kInject:
      keys.push_back("value");
      break;
    case AttackType::kRetime:
      keys.push_back(windowed ? "shift" : "retime_to");
      break;
    case AttackType::kDos:
      break;
    case AttackType::kGenerate:
      keys.push_back("value");
      if (windowed) keys.push_back("period");
      break;
  }
  detail::require_keys(j, context + " (" + type + ")", keys, {});

  if (windowed) {
    a.time_from = detail::get_number(j, context, "time_from");
    a.time_to = detail::get_number(j, context, "time_to");
  } else {
    a.time = detail::get_number(j, context, "time");
  }
  if (a.type == AttackType::kInject || a.type == AttackType::kGenerate)
    a.value = detail::get_number(j, context, "value");
  if (a.type == AttackType::kRetime) {
    if (windowed) a.shift = detail::get_number(j, context, "shift");
    else a.retime_to = detail::get_number(j, context, "retime_to");
  }
  if (a.type == AttackType::kGenerate && windowed)
    a.period = detail::get_number(j, context, "period");
  return a;
}

inline json action_to_json(const AttackAction& a) {
  json j;
  j["sensor"] = a.sensor + 1;
  switch (a.type) {
    case AttackType::kInject: j["type"] = "inject"; break;
    case AttackType::kRetime: j["type"] = "retime"; break;
    case AttackType::kDos: j["type"] = "dos"; break;
    case AttackType::kGenerate: j["type"] = "generate"; break;
  }
  if (a.windowed) {
    j["time_from"] = a.time_from;
    j["time_to"] = a.time_to;
  } else {
    j["time"] = a.time;
  }
  if (a.type == AttackType::kInject || a.type == AttackType::kGenerate)
    j["value"] = a.value;
  if (a.type == AttackType::kRetime) {
    if (a.windowed) j["shift"] = a.shift;
    else j["retime_to"] = a.retime_to;
  }
  if (a.type == AttackType::kGenerate && a.windowed) j["period"] = a.period;
  return j;
}

/// Scenario documents: 1-based "corrupted" sensor list, sparsity budget "p",
/// action list, and the optional escape hatch acknowledging an unverified
/// redundancy assumption.
inline AttackScenario scenario_from_json(const json& j, int m) {
  detail::require_keys(j, "attack", {"corrupted", "p", "actions"},
                       {"sparsity_override"});
  AttackScenario sc;
  if (!j.at("corrupted").is_array())
    throw ScenarioError("attack.corrupted: expected an array of sensor indices");
  for (const json& e : j.at("corrupted")) {
    if (!e.is_number_integer())
      throw ScenarioError("attack.corrupted: entries must be integers");
    const int s = e.get<int>();
    if (s < 1 || s > m)
      throw ScenarioError("attack.corrupted: sensor " + std::to_string(s) +
                          " out of range 1.." + std::to_string(m));
    sc.corrupted.push_back(s - 1);
  }
  sc.p = detail::get_int(j, "attack", "p");
  sc.sparsity_override = detail::get_bool_or(j, "attack", "sparsity_override", false);
  if (!j.at("actions").is_array())
    throw ScenarioError("attack.actions: expected an array");
  for (const json& e : j.at("actions")) sc.actions.push_back(action_from_json(e, m));
  validate_scenario(sc, m);
  return sc;
}

inline json scenario_to_json(const AttackScenario& sc) {
  json corrupted = json::array();
  for (int s : sc.corrupted) corrupted.push_back(s + 1);
  json actions = json::array();
  for (const AttackAction& a : sc.actions) actions.push_back(action_to_json(a));
  json j{{"corrupted", corrupted}, {"p", sc.p}, {"actions", actions}};
  if (sc.sparsity_override) j["sparsity_override"] = true;
  return j;
}

/// Per-sensor sampling-schedule generation parameters.
struct ScheduleConfig {
  double t_min = 0.15;
  double t_max = 0.25;
  double horizon = 2.4;
  std::uint64_t seed = 1;
};

/// A full simulation configuration: the model (built-in benchmark grid or
/// inline matrices), sampling schedule, measurement-noise scale, estimator
/// settings, optional attack scenario, and output destination.
struct ScenarioConfig {
  int schema_version = 1;
  bool use_ieee14 = true;
  Ieee14Options ieee14;
  ContinuousModel inline_model;
  double noise_scale = 0.5;  ///< R = noise_scale * Rbar
  ScheduleConfig schedule;
  EstimatorOptions estimator;
  bool has_attack = false;
  AttackScenario attack;
  std::uint64_t seed = 0;  ///< trajectory / measurement noise seed
  std::string output_dir = "out";

  ContinuousModel build_model() const {
    return use_ieee14 ? build_ieee14(ieee14) : inline_model;
  }
  SamplingSchedule build_schedule(int m) const {
    return generate_schedule(m, schedule.t_min, schedule.t_max, schedule.horizon,
                             schedule.seed);
  }
};

inline Ieee14Options ieee14_options_from_json(const json& j) {
  const std::string c = "ieee14_options";
  detail::require_keys(j, c, {},
                       {"mass", "damping", "shunt", "process_noise", "power_noise",
                        "angle_noise", "frequency_noise", "prior_angle",
                        "prior_frequency"});
  Ieee14Options opt;
  opt.mass = detail::get_number_or(j, c, "mass", opt.mass);
  opt.damping = detail::get_number_or(j, c, "damping", opt.damping);
  opt.shunt = detail::get_number_or(j, c, "shunt", opt.shunt);
  opt.process_noise = detail::get_number_or(j, c, "process_noise", opt.process_noise);
  opt.power_noise = detail::get_number_or(j, c, "power_noise", opt.power_noise);
  opt.angle_noise = detail::get_number_or(j, c, "angle_noise", opt.angle_noise);
  opt.frequency_noise =
      detail::get_number_or(j, c, "frequency_noise", opt.frequency_noise);
  opt.prior_angle = detail::get_number_or(j, c, "prior_angle", opt.prior_angle);
  opt.prior_frequency =
      detail::get_number_or(j, c, "prior_frequency", opt.prior_frequency);
  return opt;
}

inline ScenarioConfig config_from_json(const json& j) {
  detail::require_keys(j, "config", {"schema_version", "model", "schedule"},
                       {"ieee14_options", "noise_scale", "estimator", "attack",
                        "seed", "output_dir"});
  ScenarioConfig cfg;
  if (!j.at("schema_version").is_number_integer() ||
      j.at("schema_version").get<int>() != 1)
    throw ScenarioError("config: unsupported schema_version (expected 1)");

  const json& jm = j.at("model");
  if (jm.is_string()) {
    if (jm.get<std::string>() != "ieee14")
      throw ScenarioError("config.model: unknown builtin \"" +
                          jm.get<std::string>() + "\" (expected \"ieee14\")");
    cfg.use_ieee14 = true;
    if (j.contains("ieee14_options"))
      cfg.ieee14 = ieee14_options_from_json(j.at("ieee14_options"));
  } else {
    cfg.use_ieee14 = false;
    if (j.contains("ieee14_options"))
      throw ScenarioError("config: ieee14_options requires model \"ieee14\"");
    cfg.inline_model = model_from_json(jm);
  }

  cfg.noise_scale = detail::get_number_or(j, "config", "noise_scale", 0.5);
  if (!(cfg.noise_scale > 0.0) || cfg.noise_scale > 1.0)
    throw ScenarioError("config.noise_scale: must be in (0, 1] so the running "
                        "noise stays below its model bound");
  cfg.estimator.gammas = {2.0};

  const json& js = j.at("schedule");
  detail::require_keys(js, "schedule", {"t_min", "t_max", "horizon"}, {"seed"});
  cfg.schedule.t_min = detail::get_number(js, "schedule", "t_min");
  cfg.schedule.t_max = detail::get_number(js, "schedule", "t_max");
  cfg.schedule.horizon = detail::get_number(js, "schedule", "horizon");
  cfg.schedule.seed = detail::get_seed_or(js, "schedule", "seed", 1);
  if (!(cfg.schedule.t_min > 0.0) || cfg.schedule.t_max < cfg.schedule.t_min)
    throw ScenarioError("schedule: need 0 < t_min <= t_max");
  if (!(cfg.schedule.horizon > 0.0))
    throw ScenarioError("schedule: horizon must be positive");

  if (j.contains("estimator")) {
    const json& je = j.at("estimator");
    detail::require_keys(je, "estimator", {},
                         {"gammas", "prox_tol", "max_iterations",
                          "mask_off_sample", "max_gain_repairs"});
    if (je.contains("gammas")) {
      if (!je.at("gammas").is_array() || je.at("gammas").empty())
        throw ScenarioError("estimator.gammas: expected a non-empty array");
      cfg.estimator.gammas.clear();
      for (const json& g : je.at("gammas")) {
        if (!g.is_number() || !(g.get<double>() > 0.0))
          throw ScenarioError("estimator.gammas: entries must be positive numbers");
        cfg.estimator.gammas.push_back(g.get<double>());
      }
    }
    cfg.estimator.solver.prox_tol =
        detail::get_number_or(je, "estimator", "prox_tol",
                              cfg.estimator.solver.prox_tol);
    if (!(cfg.estimator.solver.prox_tol > 0.0))
      throw ScenarioError("estimator.prox_tol: must be positive");
    if (je.contains("max_iterations")) {
      cfg.estimator.solver.max_iterations =
          detail::get_int(je, "estimator", "max_iterations");
      if (cfg.estimator.solver.max_iterations < 1)
        throw ScenarioError("estimator.max_iterations: must be at least 1");
    }
    cfg.estimator.mask_off_sample = detail::get_bool_or(
        je, "estimator", "mask_off_sample", cfg.estimator.mask_off_sample);
    if (je.contains("max_gain_repairs")) {
      cfg.estimator.max_gain_repairs =
          detail::get_int(je, "estimator", "max_gain_repairs");
      if (cfg.estimator.max_gain_repairs < 0)
        throw ScenarioError("estimator.max_gain_repairs: must be nonnegative");
    }
  }

  cfg.seed = detail::get_seed_or(j, "config", "seed", 0);
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string())
      throw ScenarioError("config.output_dir: must be a string");
    cfg.output_dir = j.at("output_dir").get<std::string>();
  }

  if (j.contains("attack")) {
    // sensor-range validation needs m, so the model must be buildable first
    const ContinuousModel model = cfg.build_model();
    cfg.attack = scenario_from_json(j.at("attack"), int(model.m()));
    cfg.has_attack = true;
  }
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ScenarioError("config parse error in " + path + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

}  // namespace sase
