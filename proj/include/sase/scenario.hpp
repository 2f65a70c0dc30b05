#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sase/attack.hpp"
#include "sase/common.hpp"
#include "sase/estimator.hpp"
#include "sase/fusion.hpp"
#include "sase/json_io.hpp"
#include "sase/model.hpp"
#include "sase/trajectory.hpp"
#include "sase/triples.hpp"

namespace sase {

/// Everything one grid step contributes to a run's report: ground truth,
/// the three estimates (central filter on the delivered stream, plain
/// fusion, secure fusion per weight), the clean-stream reference estimate,
/// the online weight threshold, and the per-weight worst-case deviation
/// bounds derived from clean-side quantities.
struct StepRow {
  int k = 0;
  double time = 0.0;
  int active_count = 0;
  int gain_repairs = 0;
  double threshold = 0.0;
  Eigen::VectorXd x_true;
  Eigen::VectorXd xhat_kf;
  Eigen::VectorXd x_wls;
  Eigen::VectorXd xhat_oracle;  ///< central filter fed the authentic stream
  std::vector<SecureStepStats> secure;  ///< per configured weight
  /// per configured weight: componentwise certificate-free deviation bound;
  /// empty when the redundancy precheck failed (see RunReport::bounds_defined)
  std::vector<Eigen::VectorXd> bound;
};

/// A completed run: per-step rows plus run-level metadata. Everything the
/// report writer needs is here; wall_seconds is informational only and never
/// lands in a report file (reruns must be byte-identical).
struct RunReport {
  int n = 0;                    ///< state dimension
  bool attacked = false;        ///< whether a manipulation scenario ran
  bool sparse_margin = true;    ///< resilience margin held (always true sans attack)
  bool bounds_defined = true;   ///< every state keeps a clean majority of observers
  std::vector<double> gammas;   ///< secure-fusion weights evaluated each step
  std::vector<StepRow> rows;    ///< one per grid step past the origin
  double wall_seconds = 0.0;
  WarningLog log;
};

namespace detail {

inline void append_log(WarningLog& dst, const WarningLog& src) {
  for (const auto& e : src.entries()) dst.add(e);
}

/// The deviation bounds exist only while every state is watched by strictly
/// more clean sensors than corrupted ones. The check depends on the support
/// pattern alone, so it is decided once per run, not per step.
inline bool clean_majority_everywhere(const ObservabilityIndex& index,
                                      const std::vector<int>& corrupted) {
  for (int j = 0; j < index.n; ++j) {
    int bad = 0;
    for (int i : index.observers[std::size_t(j)])
      if (std::find(corrupted.begin(), corrupted.end(), i) != corrupted.end()) ++bad;
    const int clean = int(index.observers[std::size_t(j)].size()) - bad;
    if (clean <= bad) return false;
  }
  return true;
}

/// Shared per-step assembly: fold one estimator step (plus the matching
/// clean-reference step) into a report row.
inline StepRow make_row(const Trajectory& traj, StepRecord&& rec,
                        const StepRecord& rec_oracle, const ObservabilityIndex& index,
                        const std::vector<double>& gammas,
                        const std::vector<int>& corrupted, bool bounds_defined) {
  StepRow row;
  row.k = rec.k;
  row.time = rec.time;
  row.active_count = rec.active_count;
  row.gain_repairs = rec.gain_repairs;
  row.threshold = rec.threshold;
  row.x_true = state_at(traj, rec.time);
  row.xhat_kf = rec.xhat;
  row.x_wls = rec.x_wls;
  row.xhat_oracle = rec_oracle.xhat;
  row.secure = std::move(rec.secure);
  if (bounds_defined) {
    row.bound.reserve(gammas.size());
    for (double g : gammas)
      row.bound.push_back(conservative_attack_error_bound(
          rec_oracle.theta, rec_oracle.workspace->Wt, g, index, corrupted));
  }
  return row;
}

}  // namespace detail

/// Execute a configured run end to end: build the model, scale the sensor
/// noise, draw the sampling schedule, simulate ground truth, deliver the
/// (possibly manipulated) measurement stream to the estimation pipeline, and
/// collect per-step rows.
///
/// Without an attack section one pipeline serves as its own clean reference.
/// With one, two pipelines advance in lockstep over grids that share times
/// and masks by construction: the delivered stream drives the reported
/// estimates while the authentic stream drives the reference estimate and
/// the deviation bounds (whose clean-side inputs the delivered stream cannot
/// provide). A horizon too short for any sample yields a report with zero
/// rows, not an error.
inline RunReport run_scenario(const ScenarioConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();

  const ContinuousModel model = cfg.build_model();
  const Eigen::MatrixXd R = cfg.noise_scale * model.Rbar;
  const SamplingSchedule schedule = cfg.build_schedule(int(model.m()));

  RunReport rep;
  rep.n = int(model.n());
  rep.attacked = cfg.has_attack;
  rep.gammas = cfg.estimator.gammas;

  if (!cfg.has_attack) {
    const CleanRun run = make_clean_stream(model, schedule, R, cfg.seed);
    EstimatorOptions opt = cfg.estimator;
    opt.fuse = true;
    opt.keep_workspace = true;  // the run is its own clean reference
    Estimator est = make_estimator(model, R, opt, cfg.seed);
    const std::vector<int> no_corrupted;
    if (run.grid.steps.size() > 1) rep.rows.reserve(run.grid.steps.size() - 1);
    for (std::size_t k = 1; k < run.grid.steps.size(); ++k) {
      StepRecord rec = estimator_step(est, run.grid.steps[k]);
      const StepRecord& self_reference = rec;
      rep.rows.push_back(detail::make_row(run.trajectory, StepRecord(rec), self_reference,
                                          est.index, rep.gammas, no_corrupted,
                                          rep.bounds_defined));
    }
    detail::append_log(rep.log, est.log);
  } else {
    rep.sparse_margin = check_sparse_assumption(model, cfg.attack, &rep.log);
    const ShadowPair pair = shadow_pair(model, schedule, R, cfg.attack, cfg.seed, &rep.log);

    EstimatorOptions opt_attacked = cfg.estimator;
    opt_attacked.fuse = true;
    opt_attacked.keep_workspace = false;
    Estimator est_attacked = make_estimator(model, R, opt_attacked, cfg.seed);

    EstimatorOptions opt_oracle = cfg.estimator;
    opt_oracle.gammas.clear();  // the reference needs no secure solves,
    opt_oracle.fuse = true;     // but must fuse: the bounds use its residual
    opt_oracle.keep_workspace = true;
    Estimator est_oracle = make_estimator(model, R, opt_oracle, cfg.seed);

    rep.bounds_defined =
        detail::clean_majority_everywhere(est_attacked.index, cfg.attack.corrupted);
    if (!rep.bounds_defined)
      warn(&rep.log,
           "run_scenario: some state lacks a clean majority of observers, so the "
           "worst-case deviation bounds are undefined and will be reported as nan");

    const auto& ga = pair.attacked_grid.steps;
    const auto& go = pair.oracle_grid.steps;
    if (ga.size() != go.size())
      throw StreamError("run_scenario: delivered and authentic grids fell out of step");
    if (ga.size() > 1) rep.rows.reserve(ga.size() - 1);
    for (std::size_t k = 1; k < ga.size(); ++k) {
      if (std::abs(ga[k].time - go[k].time) > kTimeMatchTol)
        throw StreamError("run_scenario: delivered and authentic grids fell out of step");
      StepRecord rec = estimator_step(est_attacked, ga[k]);
      const StepRecord rec_oracle = estimator_step(est_oracle, go[k]);
      rep.rows.push_back(detail::make_row(pair.trajectory, std::move(rec), rec_oracle,
                                          est_attacked.index, rep.gammas,
                                          cfg.attack.corrupted, rep.bounds_defined));
    }
    detail::append_log(rep.log, est_attacked.log);
    detail::append_log(rep.log, est_oracle.log);
  }

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

}  // namespace sase
