#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sase/common.hpp"
#include "sase/model.hpp"
#include "sase/observability.hpp"
#include "sase/schedule.hpp"
#include "sase/trajectory.hpp"
#include "sase/triples.hpp"

namespace sase {

/// The four measurement-stream manipulation primitives.
enum class AttackType { kInject, kRetime, kDos, kGenerate };

inline const char* attack_type_name(AttackType t) {
  switch (t) {
    case AttackType::kInject: return "inject";
    case AttackType::kRetime: return "retime";
    case AttackType::kDos: return "dos";
    case AttackType::kGenerate: return "generate";
  }
  return "unknown";
}

/// One manipulation. Two forms:
///  - exact (windowed = false): targets the single authentic triple of
///    `sensor` at `time` (within the stream time tolerance). No match is a
///    scenario error. inject adds `value` to the reading; retime moves the
///    triple to `retime_to`; dos drops it; generate appends a fabricated
///    triple at `time` with reading `value` (must not collide with an
///    existing triple of the same sensor).
///  - windowed (windowed = true): applies to every triple of `sensor` in
///    [time_from, time_to]. Zero matches is only a warning (legitimate under
///    random schedules). inject adds `value` to each; retime shifts each by
///    `shift`; dos drops each; generate fabricates readings `value` at
///    time_from, time_from + period, ... up to time_to.
struct AttackAction {
  AttackType type = AttackType::kInject;
  int sensor = 0;  ///< 0-based internally; external formats are 1-based
  bool windowed = false;
  double time = 0.0;       ///< exact form: target (or fabricated) time
  double time_from = 0.0;  ///< windowed form: window start
  double time_to = 0.0;    ///< windowed form: window end (inclusive)
  double value = 0.0;      ///< inject: additive bias; generate: fabricated reading
  double retime_to = 0.0;  ///< exact retime: destination time-stamp
  double shift = 0.0;      ///< windowed retime: time-stamp offset
  double period = 0.0;     ///< windowed generate: fabrication period
};

/// A full attack configuration: the (time-fixed) corrupted sensor set, the
/// sparsity budget it must fit in, and the ordered action list. Actions
/// compose sequentially in list order when they touch the same triple.
struct AttackScenario {
  std::vector<int> corrupted;  ///< 0-based, the set C
  int p = 0;                   ///< sparsity budget, |C| <= p
  std::vector<AttackAction> actions;
  /// set when the operator accepts running without the resilience margin
  /// (fewer than 2p removable sensors); recorded, not silently assumed
  bool sparsity_override = false;
};

namespace detail {
inline std::string action_label(const AttackAction& a) {
  std::string s = std::string(attack_type_name(a.type)) + " on sensor " +
                  std::to_string(a.sensor + 1);
  if (a.windowed)
    s += " over [" + std::to_string(a.time_from) + ", " + std::to_string(a.time_to) + "]";
  else
    s += " at t = " + std::to_string(a.time);
  return s;
}
}  // namespace detail

/// Structural validation of a scenario against the sensor count: sensors in
/// range and inside C, |C| <= p, times finite and positive where they must
/// be, windows ordered, windowed generate needs a positive period. Throws
/// ScenarioError with the offending action named.
inline void validate_scenario(const AttackScenario& sc, int m) {
  std::set<int> cset;
  for (int c : sc.corrupted) {
    if (c < 0 || c >= m)
      throw ScenarioError("corrupted sensor " + std::to_string(c + 1) + " outside 1.." +
                          std::to_string(m));
    if (!cset.insert(c).second)
      throw ScenarioError("corrupted sensor " + std::to_string(c + 1) + " listed twice");
  }
  if (sc.p < 0) throw ScenarioError("sparsity budget must be nonnegative");
  if (int(cset.size()) > sc.p)
    throw ScenarioError("corrupted set size " + std::to_string(cset.size()) +
                        " exceeds the sparsity budget p = " + std::to_string(sc.p));
  for (const auto& a : sc.actions) {
    const std::string label = detail::action_label(a);
    if (a.sensor < 0 || a.sensor >= m)
      throw ScenarioError(label + ": sensor outside 1.." + std::to_string(m));
    if (cset.count(a.sensor) == 0)
      throw ScenarioError(label + ": sensor is not in the declared corrupted set");
    if (a.windowed) {
      if (!std::isfinite(a.time_from) || !std::isfinite(a.time_to) || a.time_to < a.time_from)
        throw ScenarioError(label + ": window must be finite with time_from <= time_to");
      if (a.type == AttackType::kGenerate) {
        if (!(a.period > 0.0) || !std::isfinite(a.period))
          throw ScenarioError(label + ": windowed generation needs a positive period");
        if (a.time_from <= kTimeMatchTol)
          throw ScenarioError(label + ": fabricated samples must carry positive time-stamps");
      }
      if (a.type == AttackType::kRetime && !std::isfinite(a.shift))
        throw ScenarioError(label + ": retime shift must be finite");
    } else {
      if (!std::isfinite(a.time) || a.time <= kTimeMatchTol)
        throw ScenarioError(label + ": target time must be finite and positive");
      if (a.type == AttackType::kRetime &&
          (!std::isfinite(a.retime_to) || a.retime_to <= kTimeMatchTol))
        throw ScenarioError(label +
                            ": retime destination must be a finite, strictly positive time");
    }
    if ((a.type == AttackType::kInject || a.type == AttackType::kGenerate) &&
        !std::isfinite(a.value))
      throw ScenarioError(label + ": attack value must be finite");
  }
}

/// Check the resilience margin behind the deviation guarantees: the system
/// must remain observable after removing any 2p sensors. Returns true when
/// the margin holds; false (with a warning) when the scenario carries the
/// explicit override; throws ScenarioError otherwise.
inline bool check_sparse_assumption(const ContinuousModel& model, const AttackScenario& sc,
                                    WarningLog* log = nullptr) {
  const int order = sparse_observability_order(model);
  if (order >= 2 * sc.p) return true;
  if (sc.sparsity_override) {
    warn(log, "sparse-observability margin not met (order " + std::to_string(order) +
                  " < 2p = " + std::to_string(2 * sc.p) +
                  "); continuing under the scenario's explicit override");
    return false;
  }
  throw ScenarioError("system is not resilient to p = " + std::to_string(sc.p) +
                      " corrupted sensors: it stays observable after removing at most " +
                      std::to_string(order) + " sensors (need " + std::to_string(2 * sc.p) +
                      "); set the override flag to run anyway");
}

/// Transform an authentic stream through the scenario's action list, in list
/// order. Exact-form actions must match an existing triple (scenario error
/// otherwise); windowed actions may match nothing (warning). Dropped triples
/// are logged, fabricated ones tagged, edited ones marked modified. The
/// output is re-sorted into arrival order.
inline TripleStream apply_attacks(const TripleStream& clean, const AttackScenario& sc, int m,
                                  WarningLog* log = nullptr) {
  validate_scenario(sc, m);
  TripleStream out = clean;
  auto& ts = out.triples;

  const auto in_window = [](const MeasurementTriple& tr, const AttackAction& a) {
    return tr.sensor == a.sensor && tr.time >= a.time_from - kTimeMatchTol &&
           tr.time <= a.time_to + kTimeMatchTol;
  };
  const auto exact_match = [](const MeasurementTriple& tr, const AttackAction& a) {
    return tr.sensor == a.sensor && std::abs(tr.time - a.time) <= kTimeMatchTol;
  };
  const auto has_sensor_at = [&ts](int sensor, double t) {
    for (const auto& tr : ts)
      if (tr.sensor == sensor && std::abs(tr.time - t) <= kTimeMatchTol) return true;
    return false;
  };
  const auto fabricate = [&](const AttackAction& a, double t) {
    if (has_sensor_at(a.sensor, t))
      throw ScenarioError(detail::action_label(a) + ": fabricated sample collides with an " +
                          "existing sample of the same sensor at t = " + std::to_string(t));
    ts.push_back(MeasurementTriple{a.sensor, t, a.value, Provenance::kGenerated});
  };

  for (const auto& a : sc.actions) {
    const std::string label = detail::action_label(a);
    int hits = 0;
    switch (a.type) {
      case AttackType::kInject:
        for (auto& tr : ts)
          if (a.windowed ? in_window(tr, a) : exact_match(tr, a)) {
            tr.value += a.value;
            tr.provenance = Provenance::kModified;
            ++hits;
          }
        break;
      case AttackType::kRetime:
        for (auto& tr : ts)
          if (a.windowed ? in_window(tr, a) : exact_match(tr, a)) {
            const double dest = a.windowed ? tr.time + a.shift : a.retime_to;
            if (!(dest > kTimeMatchTol))
              throw ScenarioError(label + ": retiming lands at or before the grid origin");
            tr.time = dest;
            tr.provenance = Provenance::kModified;
            ++hits;
          }
        break;
      case AttackType::kDos: {
        auto first = std::stable_partition(ts.begin(), ts.end(),
                                           [&](const MeasurementTriple& tr) {
                                             return !(a.windowed ? in_window(tr, a)
                                                                 : exact_match(tr, a));
                                           });
        hits = int(ts.end() - first);
        out.dropped.insert(out.dropped.end(), first, ts.end());
        ts.erase(first, ts.end());
        break;
      }
      case AttackType::kGenerate:
        if (a.windowed) {
          for (double t = a.time_from; t <= a.time_to + kTimeMatchTol; t += a.period) {
            fabricate(a, t);
            ++hits;
          }
        } else {
          fabricate(a, a.time);
          ++hits;
        }
        break;
    }
    if (hits == 0) {
      if (a.windowed)
        warn(log, label + ": no samples in the window (nothing to do)");
      else
        throw ScenarioError(label + ": no authentic sample at the target time");
    }
  }
  return reorder_buffer(out);
}

/// A clean run and its attacked counterpart sharing one ground-truth
/// trajectory and one noise key, plus the attack-free oracle inputs on the
/// attacked grid: for every (sensor, time) the attacked grid carries, the
/// oracle stream holds the authentic reading the sensor would have taken at
/// that time. Attacked and oracle grids therefore share times and masks and
/// differ only in values (and provenance).
struct ShadowPair {
  Trajectory trajectory;  ///< simulated on the union of both grids
  TripleStream clean_stream;
  MeasurementGrid clean_grid;
  TripleStream attacked_stream;
  MeasurementGrid attacked_grid;
  TripleStream oracle_stream;
  MeasurementGrid oracle_grid;
};

/// Look up the trajectory state at time t (within the stream tolerance).
inline const Eigen::VectorXd& state_at(const Trajectory& traj, double t) {
  const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t - kTimeMatchTol);
  if (it == traj.times.end() || std::abs(*it - t) > kTimeMatchTol)
    throw StreamError("state_at: no trajectory state at t = " + std::to_string(t));
  return traj.states[std::size_t(it - traj.times.begin())];
}

/// Simulate one trajectory and derive from it the clean run, the attacked
/// run, and the attack-free oracle on the attacked grid. Because sensor and
/// process noise are keyed by time-stamp, the clean values here are
/// bit-identical to an attack-free simulation of the same (model, schedule,
/// R, seed) whenever the attack introduces no new grid times.
inline ShadowPair shadow_pair(const ContinuousModel& model, const SamplingSchedule& schedule,
                              const Eigen::MatrixXd& R, const AttackScenario& sc,
                              std::uint64_t seed, WarningLog* log = nullptr) {
  const int m = int(model.m());
  validate_scenario(sc, m);

  // Pass 1 (value-free): discover every time-stamp either grid will carry, so
  // one trajectory covers both runs. Action matching depends on times only.
  const MergedGrid merged = merge_schedule(schedule);
  TripleStream skeleton;
  for (std::size_t k = 1; k < merged.times.size(); ++k)
    for (int i = 0; i < m; ++i)
      if (merged.masks[k][std::size_t(i)])
        skeleton.triples.push_back(MeasurementTriple{i, merged.times[k], 0.0});
  WarningLog scratch;  // pass-1 warnings are repeats of pass 2's; keep them out of the log
  const TripleStream skeleton_attacked = apply_attacks(skeleton, sc, m, &scratch);

  std::vector<double> union_times(merged.times.begin() + 1, merged.times.end());
  for (const auto& tr : skeleton_attacked.triples)
    if (tr.time <= schedule.horizon + kTimeMatchTol) union_times.push_back(tr.time);
  std::sort(union_times.begin(), union_times.end());
  // collapse stamps within the stream tolerance so the trajectory has one
  // state per grid instant
  std::vector<double> times;
  for (double t : union_times)
    if (times.empty() || t - times.back() > kTimeMatchTol) times.push_back(t);

  ShadowPair pair;
  pair.trajectory = simulate_trajectory(model, times, seed);

  // Clean run: authentic readings at the scheduled instants.
  for (std::size_t k = 1; k < merged.times.size(); ++k) {
    const double t = merged.times[k];
    const Eigen::VectorXd y = measure_all(model, state_at(pair.trajectory, t), t, R, seed);
    for (int i = 0; i < m; ++i)
      if (merged.masks[k][std::size_t(i)])
        pair.clean_stream.triples.push_back(
            MeasurementTriple{i, t, y(i), Provenance::kAuthentic});
  }
  pair.clean_grid = build_grid(pair.clean_stream, m, schedule.horizon);

  // Attacked run: the action list applied to the real clean stream.
  pair.attacked_stream = apply_attacks(pair.clean_stream, sc, m, log);
  pair.attacked_grid = build_grid(pair.attacked_stream, m, schedule.horizon);

  // Oracle: authentic readings at every (sensor, time) of the attacked grid.
  for (std::size_t k = 1; k < pair.attacked_grid.steps.size(); ++k) {
    const auto& step = pair.attacked_grid.steps[std::size_t(k)];
    const Eigen::VectorXd y =
        measure_all(model, state_at(pair.trajectory, step.time), step.time, R, seed);
    for (int i = 0; i < m; ++i)
      if (step.mask[std::size_t(i)])
        pair.oracle_stream.triples.push_back(
            MeasurementTriple{i, step.time, y(i), Provenance::kAuthentic});
  }
  pair.oracle_grid = build_grid(pair.oracle_stream, m, schedule.horizon);
  return pair;
}

}  // namespace sase
