#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sase/common.hpp"
#include "sase/decomposition.hpp"
#include "sase/fusion.hpp"
#include "sase/kalman.hpp"
#include "sase/linalg.hpp"
#include "sase/model.hpp"
#include "sase/observability.hpp"
#include "sase/rng.hpp"
#include "sase/triples.hpp"

namespace sase {

/// Settings for the full per-step pipeline.
struct EstimatorOptions {
  std::vector<double> gammas;  ///< secure-fusion weights to evaluate each step
  SecureFuseOptions solver;    ///< tolerance template (gamma overridden per value)
  /// pin absorber entries of off-sample sensors at zero (their transformed
  /// local estimates are purely model-propagated, hence trustworthy); turn
  /// off to solve the unconstrained form the deviation bounds assume
  bool mask_off_sample = true;
  /// run the fusion stage each step; disable to get the bare central filter
  /// plus bank (e.g. the contaminated-filter baseline in benchmarks)
  bool fuse = true;
  int max_gain_repairs = 5;  ///< attempts before a rank collapse is fatal
  /// attach each step's fusion workspace to its record so callers can derive
  /// per-step quantities (deviation bounds need the transformed covariance).
  /// The workspace is large; loops that keep every record should consume and
  /// release it step by step instead of archiving the whole run
  bool keep_workspace = false;
};

/// Secure-fusion outcome for one gamma at one step.
struct SecureStepStats {
  double gamma = 0.0;
  Eigen::VectorXd estimate;
  Eigen::VectorXd vartheta;
  int iterations = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  bool converged = true;
};

/// Everything a grid step produced, aligned across the three estimators.
struct StepRecord {
  int k = 0;
  double time = 0.0;
  double dt = 0.0;
  int active_count = 0;
  Eigen::VectorXd xhat;   ///< central filter estimate
  Eigen::VectorXd x_wls;  ///< plain fused estimate (equals xhat by design)
  Eigen::VectorXd theta;  ///< transformed residual the fusion stage solved on
  double threshold = 0.0; ///< this step's regularization threshold
  std::vector<SecureStepStats> secure;  ///< one entry per configured gamma
  int gain_repairs = 0;
  /// set only under EstimatorOptions::keep_workspace
  std::shared_ptr<const FusionWorkspace> workspace;
};

/// The running pipeline: central filter, decomposed bank, and per-gamma
/// solver warm starts. Fields are public so property tests can check the
/// internal identities (gain products, split weights) at every step.
struct Estimator {
  ContinuousModel model;
  Eigen::MatrixXd R;
  EstimatorOptions opt;
  ObservabilityIndex index;
  KfState kf;
  LocalBank bank;
  double time = 0.0;
  int k = 0;
  std::uint64_t seed = 0;  ///< keys the gain-repair perturbations
  std::vector<Eigen::VectorXd> warm;  ///< per gamma, previous step's absorber
  WarningLog log;
};

inline Estimator make_estimator(const ContinuousModel& model, const Eigen::MatrixXd& R,
                                EstimatorOptions opt = {}, std::uint64_t seed = 0) {
  validate_model_structure(model);
  if (R.rows() != model.m() || R.cols() != model.m())
    throw std::invalid_argument("make_estimator: sensor noise dimension mismatch");
  for (double g : opt.gammas)
    if (!(g > 0.0))
      throw std::invalid_argument("make_estimator: secure-fusion gamma must be positive");
  Estimator est;
  est.model = model;
  est.R = R;
  est.opt = std::move(opt);
  est.index = observable_sets(model);
  est.kf = init_kf(model);
  est.bank = init_bank(model, est.index);
  est.seed = seed;
  est.warm.assign(est.opt.gammas.size(), Eigen::VectorXd());
  return est;
}

namespace detail {
/// Candidate split-weight update for rank checking, identical to the bank's
/// own update rule but without committing anything.
inline std::vector<Eigen::MatrixXd> candidate_G(const LocalBank& bank, const KfStepOutput& out) {
  std::vector<Eigen::MatrixXd> Gn(bank.G.size());
  for (std::size_t i = 0; i < bank.G.size(); ++i) {
    Gn[i] = out.Pi * bank.G[i] * out.Ainv;
    if (out.mask[i]) Gn[i].noalias() += out.K.col(int(i)) * out.Cmask.row(int(i));
  }
  return Gn;
}

/// Indices of sensors whose updated split weight lost rank against the
/// sensor's observable-subspace dimension. An exact-arithmetic collapse
/// leaves rounding relics instead of zeros, so besides the relative rank we
/// flag a whole-matrix implosion against the pre-update scale (a legitimate
/// update changes the magnitude by bounded per-step factors only).
inline std::vector<int> rank_drops(const std::vector<Eigen::MatrixXd>& Gn,
                                   const std::vector<Eigen::MatrixXd>& G_prev,
                                   const ObservabilityIndex& index) {
  std::vector<int> bad;
  for (std::size_t i = 0; i < Gn.size(); ++i) {
    const bool imploded = max_abs(Gn[i]) < kRankTol * max_abs(G_prev[i]);
    if (imploded || numeric_rank(Gn[i]) < index.rank[i]) bad.push_back(int(i));
  }
  return bad;
}
}  // namespace detail

/// Advance the pipeline by one grid step. Runs the central filter, repairs
/// the gain if the split-weight update would collapse a sensor's rowspan (a
/// measure-zero event: the gain is nudged along the column space of the
/// predicted cross covariance and everything downstream is recomputed),
/// advances the bank, and solves the fusion problems.
inline StepRecord estimator_step(Estimator& est, const GridStep& step) {
  const double dt = step.time - est.time;
  if (!(dt > 0.0))
    throw StreamError("estimator_step: grid time " + std::to_string(step.time) +
                      " does not advance past " + std::to_string(est.time));

  auto [kf_next, out] = kf_step(est.kf, est.model, dt, step.mask, step.y, est.R, &est.log);

  StepRecord rec;
  rec.dt = dt;
  rec.time = step.time;
  rec.active_count = out.active_count;

  // rank preservation: each sensor's split weight must keep the rank of its
  // observable subspace; repair by nudging the active gain columns
  std::vector<Eigen::MatrixXd> Gn = detail::candidate_G(est.bank, out);
  std::vector<int> bad = detail::rank_drops(Gn, est.bank.G, est.index);
  while (!bad.empty()) {
    if (rec.gain_repairs >= est.opt.max_gain_repairs)
      throw NumericalError("estimator_step: sensor " + std::to_string(bad.front() + 1) +
                           "'s split weight lost rank at t = " + std::to_string(step.time) +
                           " and " + std::to_string(rec.gain_repairs) +
                           " gain repairs did not restore it");
    ++rec.gain_repairs;
    KeyedStream rng(est.seed, rng_domain::kGainRepair, time_key(step.time),
                    std::uint64_t(rec.gain_repairs));
    const Eigen::MatrixXd span = out.P_pred * out.Cmask.transpose();  // n x m
    const double eps =
        1e-9 * std::max(1.0, max_abs(out.K)) * double(rec.gain_repairs);
    for (int i : active_sensors(out.mask)) {
      Eigen::VectorXd dir = span * rng.normal_vector(est.model.m());
      const double norm = dir.norm();
      if (norm > 0.0) out.K.col(i) += (eps / norm) * dir;
    }
    refresh_gain_products(out, kf_next);
    Gn = detail::candidate_G(est.bank, out);
    bad = detail::rank_drops(Gn, est.bank.G, est.index);
    warn(&est.log, "estimator_step: gain repair " + std::to_string(rec.gain_repairs) +
                       " at t = " + std::to_string(step.time) +
                       (bad.empty() ? " restored the split-weight ranks"
                                    : " did not restore the split-weight ranks"));
  }

  step_bank(est.bank, out, step.y);
  est.kf = kf_next;
  est.time = step.time;
  est.k += 1;
  rec.k = est.k;
  rec.xhat = est.kf.xhat;
  if (!est.opt.fuse) return rec;

  std::vector<VBlock> V;
  V.reserve(std::size_t(est.index.m));
  for (int i = 0; i < est.index.m; ++i)
    V.push_back(compute_V(est.bank.G[std::size_t(i)], est.index.support[std::size_t(i)],
                          kRankTol, &est.log));
  auto ws_ptr = std::make_shared<const FusionWorkspace>(
      make_fusion_workspace(est.bank.W, V, est.index.support, &est.log));
  const FusionWorkspace& ws = *ws_ptr;
  const Eigen::VectorXd vz = stack_transformed(V, est.bank.zeta);
  const FusionResult wls = wls_fuse(ws, vz);
  rec.x_wls = wls.estimate;
  rec.theta = wls.theta;
  rec.threshold = gamma_threshold(wls.theta, ws.Wt_llt);
  if (est.opt.keep_workspace) rec.workspace = ws_ptr;

  const std::vector<std::uint8_t> all_on(std::size_t(est.index.m), 1);
  for (std::size_t gi = 0; gi < est.opt.gammas.size(); ++gi) {
    SecureFuseOptions so = est.opt.solver;
    so.gamma = est.opt.gammas[gi];
    if (est.warm[gi].size() == vz.size()) so.warm_start = &est.warm[gi];
    const FusionResult sec =
        secure_fuse(ws, vz, est.opt.mask_off_sample ? step.mask : all_on, so);
    est.warm[gi] = sec.vartheta;
    SecureStepStats stats;
    stats.gamma = so.gamma;
    stats.estimate = sec.estimate;
    stats.vartheta = sec.vartheta;
    stats.iterations = sec.iterations;
    stats.objective = sec.objective;
    stats.kkt_residual = sec.kkt_residual;
    stats.converged = sec.converged;
    rec.secure.push_back(std::move(stats));
  }
  return rec;
}

/// Run the pipeline across a full measurement grid (steps after the origin).
inline std::vector<StepRecord> run_estimator(Estimator& est, const MeasurementGrid& grid) {
  if (grid.m != int(est.model.m()))
    throw std::invalid_argument("run_estimator: grid sensor count mismatch");
  std::vector<StepRecord> records;
  records.reserve(grid.steps.size());
  for (std::size_t k = 1; k < grid.steps.size(); ++k)
    records.push_back(estimator_step(est, grid.steps[k]));
  return records;
}

}  // namespace sase
