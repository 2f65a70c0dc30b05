#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sase/common.hpp"
#include "sase/discretize.hpp"
#include "sase/linalg.hpp"
#include "sase/model.hpp"
#include "sase/rng.hpp"
#include "sase/schedule.hpp"
#include "sase/triples.hpp"

namespace sase {

/// Sampled ground truth: states on a time grid whose first entry is always
/// the t = 0 origin. All noise is keyed by (seed, purpose, time bits), so a
/// second run sharing the seed reproduces the same x(t) and the same sensor
/// noise at every time-stamp the two runs have in common — provided they
/// simulate over the same grid.
struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::uint64_t seed = 0;

  std::size_t steps() const { return times.size(); }
};

/// One exact-discretization step: A_d x + w with w ~ N(0, Q_d) drawn through
/// a symmetric square-root factor. Deterministic given the stream state.
inline Eigen::VectorXd simulate_step(const Eigen::VectorXd& x, const Eigen::MatrixXd& Ad,
                                     const Eigen::MatrixXd& Qd, KeyedStream& rng) {
  if (Ad.rows() != Ad.cols() || Ad.cols() != x.size() || Qd.rows() != x.size() ||
      Qd.cols() != x.size())
    throw std::invalid_argument("simulate_step: dimension mismatch");
  const Eigen::MatrixXd root = symmetric_sqrt(Qd, 1e-9, "process noise covariance");
  return Ad * x + root * rng.normal_vector(x.size());
}

/// Simulate the plant exactly on the given strictly ascending, strictly
/// positive sample times. x[0] ~ N(0, Sigma) at the prepended origin; each
/// gap is discretized exactly and the process noise for the step landing at
/// time t is keyed by (seed, t).
inline Trajectory simulate_trajectory(const ContinuousModel& model,
                                      const std::vector<double>& sample_times,
                                      std::uint64_t seed) {
  const Eigen::Index n = model.n();
  Trajectory traj;
  traj.seed = seed;
  traj.times.reserve(sample_times.size() + 1);
  traj.states.reserve(sample_times.size() + 1);
  traj.times.push_back(0.0);
  KeyedStream init(seed, rng_domain::kInitialState);
  const Eigen::MatrixXd sigma_root = symmetric_sqrt(model.Sigma, 1e-9, "initial-state covariance");
  Eigen::VectorXd x = sigma_root * init.normal_vector(n);
  traj.states.push_back(x);
  double prev = 0.0;
  for (double t : sample_times) {
    if (!std::isfinite(t) || !(t > prev))
      throw std::invalid_argument(
          "simulate_trajectory: sample times must be finite, strictly positive and strictly "
          "ascending");
    const Discretization d = discretize(model.A, model.Q, t - prev);
    KeyedStream w(seed, rng_domain::kProcess, time_key(t));
    x = simulate_step(x, d.A, d.Q, w);
    traj.times.push_back(t);
    traj.states.push_back(x);
    prev = t;
  }
  return traj;
}

/// Verify 0 <= R_t <= Rbar (as quadratic forms) within a small relative
/// tolerance. The sensor-noise covariance may vary over time but never
/// beyond its stated bound.
inline void validate_noise_bound(const Eigen::MatrixXd& R_t, const Eigen::MatrixXd& Rbar) {
  if (R_t.rows() != Rbar.rows() || R_t.cols() != Rbar.cols())
    throw ModelError("sensor noise covariance has the wrong dimensions");
  if (!is_symmetric(R_t, 1e-9)) throw ModelError("sensor noise covariance is not symmetric");
  const double tol = 1e-9 * std::max(1.0, max_abs(Rbar));
  if (min_eigenvalue(Eigen::MatrixXd(0.5 * (R_t + R_t.transpose()))) < -tol)
    throw ModelError("sensor noise covariance is not positive semidefinite");
  Eigen::MatrixXd gap = Rbar - R_t;
  symmetrize(gap);
  if (min_eigenvalue(gap) < -tol)
    throw ModelError("sensor noise covariance exceeds its stated upper bound");
}

/// Joint sensor readout at time t: C x + v with v ~ N(0, R_t), the noise
/// keyed by (seed, t). Sensors sampling at the same instant therefore share
/// one correlated draw, and repeated calls at the same t reproduce it.
inline Eigen::VectorXd measure_all(const ContinuousModel& model, const Eigen::VectorXd& x,
                                   double t, const Eigen::MatrixXd& R_t, std::uint64_t seed) {
  if (x.size() != model.n()) throw std::invalid_argument("measure_all: state dimension mismatch");
  validate_noise_bound(R_t, model.Rbar);
  const Eigen::MatrixXd root = symmetric_sqrt(R_t, 1e-9, "sensor noise covariance");
  KeyedStream v(seed, rng_domain::kMeasurement, time_key(t));
  return model.C * x + root * v.normal_vector(model.m());
}

/// One sensor's authentic sample at time t, taken out of the joint draw so
/// that cross-sensor noise correlation is honored.
inline MeasurementTriple measure(const ContinuousModel& model, const Eigen::VectorXd& x,
                                 int sensor, double t, const Eigen::MatrixXd& R_t,
                                 std::uint64_t seed) {
  if (sensor < 0 || sensor >= model.m())
    throw std::invalid_argument("measure: sensor index out of range");
  const Eigen::VectorXd y = measure_all(model, x, t, R_t, seed);
  return MeasurementTriple{sensor, t, y(sensor), Provenance::kAuthentic};
}

/// A fully simulated attack-free run: ground truth on the merged schedule
/// grid, the authentic triple stream, and its grid view (which reproduces
/// the merged schedule's times and masks exactly).
struct CleanRun {
  Trajectory trajectory;
  TripleStream stream;
  MeasurementGrid grid;
};

/// Simulate the plant over a schedule and read every scheduled sample.
/// Triples carry the canonical merged-grid time of their step, so rebuilding
/// the grid from the stream is exact.
inline CleanRun make_clean_stream(const ContinuousModel& model, const SamplingSchedule& schedule,
                                  const Eigen::MatrixXd& R, std::uint64_t seed,
                                  double tie_tol = kTimeMatchTol) {
  if (schedule.m() != model.m())
    throw ScenarioError("make_clean_stream: schedule sensor count " +
                        std::to_string(schedule.m()) + " does not match the model's " +
                        std::to_string(model.m()));
  const MergedGrid merged = merge_schedule(schedule, tie_tol);
  for (double t : merged.times)
    if (t > schedule.horizon + tie_tol)
      throw ScenarioError("make_clean_stream: schedule contains samples beyond its horizon");
  const std::vector<double> sample_times(merged.times.begin() + 1, merged.times.end());
  CleanRun run;
  run.trajectory = simulate_trajectory(model, sample_times, seed);
  for (std::size_t k = 1; k < merged.times.size(); ++k) {
    const Eigen::VectorXd y = measure_all(model, run.trajectory.states[k], merged.times[k], R, seed);
    for (int i = 0; i < model.m(); ++i)
      if (merged.masks[k][std::size_t(i)])
        run.stream.triples.push_back(
            MeasurementTriple{i, merged.times[k], y(i), Provenance::kAuthentic});
  }
  run.grid = build_grid(run.stream, int(model.m()), schedule.horizon, tie_tol);
  return run;
}

}  // namespace sase
