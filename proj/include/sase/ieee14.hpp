#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>

#include "sase/common.hpp"
#include "sase/model.hpp"

namespace sase {

/// One transmission branch of the 14-bus benchmark grid: 1-based bus ids (the
/// conventional numbering of the test case) and series reactance in per-unit.
struct GridBranch {
  int from = 0;
  int to = 0;
  double x = 0.0;
};

/// The 20-branch line list of the IEEE 14-bus test system (per-unit series
/// reactances on the 100 MVA base).
inline const std::array<GridBranch, 20>& ieee14_branches() {
  static const std::array<GridBranch, 20> branches = {{
      {1, 2, 0.05917},  {1, 5, 0.22304},  {2, 3, 0.19797},  {2, 4, 0.17632},
      {2, 5, 0.17388},  {3, 4, 0.17103},  {4, 5, 0.04211},  {4, 7, 0.20912},
      {4, 9, 0.55618},  {5, 6, 0.25202},  {6, 11, 0.19890}, {6, 12, 0.25581},
      {6, 13, 0.13027}, {7, 8, 0.17615},  {7, 9, 0.11001},  {9, 10, 0.08450},
      {9, 14, 0.27038}, {10, 11, 0.19207}, {12, 13, 0.19988}, {13, 14, 0.34802},
  }};
  return branches;
}

inline constexpr int kIeee14Buses = 14;

/// Susceptance-weighted graph Laplacian of the benchmark grid:
/// L(i,i) = sum of incident susceptances 1/x, L(i,j) = -1/x for a branch
/// (i,j). Row sums are zero; the matrix is symmetric positive semidefinite
/// with a single zero mode (the grid is connected).
inline Eigen::MatrixXd ieee14_laplacian() {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(kIeee14Buses, kIeee14Buses);
  for (const GridBranch& br : ieee14_branches()) {
    const int i = br.from - 1;
    const int j = br.to - 1;
    const double b = 1.0 / br.x;
    L(i, i) += b;
    L(j, j) += b;
    L(i, j) -= b;
    L(j, i) -= b;
  }
  return L;
}

/// Tunable physical and noise parameters of the benchmark model. The swing
/// dynamics per bus are  d(delta)/dt = omega,
/// mass * d(omega)/dt = -damping * omega - (L + shunt*I) * delta:
/// uniform inertia and damping, with a small shunt leak added to the
/// Laplacian so the rigid-rotation mode becomes (slowly) stable and the
/// dynamics matrix is invertible.
struct Ieee14Options {
  double mass = 1.0;
  double damping = 0.5;
  double shunt = 0.05;
  /// process-noise power spectral density (diagonal, all states)
  double process_noise = 0.05;
  /// measurement-noise variance bounds per sensor family
  double power_noise = 0.1;
  double angle_noise = 0.02;
  double frequency_noise = 0.02;
  /// initial-state covariance (diagonal, per block)
  double prior_angle = 0.25;
  double prior_frequency = 0.25;
};

/// Sensor index helpers: buses use the conventional 1-based numbering, the
/// returned sensor index is 0-based (three sensors per bus, in the order
/// power, angle, frequency).
inline int ieee14_power_sensor(int bus) { return 3 * (bus - 1); }
inline int ieee14_angle_sensor(int bus) { return 3 * (bus - 1) + 1; }
inline int ieee14_frequency_sensor(int bus) { return 3 * (bus - 1) + 2; }

/// Build the 28-state / 42-sensor benchmark model: states are the 14 bus
/// angles followed by the 14 bus frequencies; each bus carries an electric
/// power sensor (the shunted Laplacian row applied to the angle block:
/// sum_j B_ij (delta_i - delta_j) plus the local shunt draw, normalised to
/// unit row norm so every bus reports in per-unit of its local line
/// strength), an angle sensor, and a frequency sensor. The structural
/// validation (including the distinct-eigenvalue requirement) runs at
/// build; a failure suggests adjusting the shunt.
inline ContinuousModel build_ieee14(const Ieee14Options& opt = {}) {
  if (!(opt.mass > 0.0) || !(opt.damping > 0.0) || !(opt.shunt > 0.0))
    throw ModelError("build_ieee14: mass, damping and shunt must be positive");
  if (!(opt.process_noise > 0.0) || !(opt.power_noise > 0.0) ||
      !(opt.angle_noise > 0.0) || !(opt.frequency_noise > 0.0))
    throw ModelError("build_ieee14: noise scales must be positive");
  if (!(opt.prior_angle > 0.0) || !(opt.prior_frequency > 0.0))
    throw ModelError("build_ieee14: prior variances must be positive");

  const int nb = kIeee14Buses;
  const int n = 2 * nb;
  const int m = 3 * nb;
  const Eigen::MatrixXd L = ieee14_laplacian();

  ContinuousModel model;
  model.A = Eigen::MatrixXd::Zero(n, n);
  model.A.topRightCorner(nb, nb).setIdentity();
  model.A.bottomLeftCorner(nb, nb) =
      -(L + opt.shunt * Eigen::MatrixXd::Identity(nb, nb)) / opt.mass;
  model.A.bottomRightCorner(nb, nb) =
      -(opt.damping / opt.mass) * Eigen::MatrixXd::Identity(nb, nb);

  // The power reading at a bus includes the flow drawn by that bus's shunt
  // load - the same shunt that stabilises the rigid-rotation mode in the
  // dynamics. Without it the power sensors would be exactly blind to that
  // mode (L annihilates the constant vector) and their observable subspaces
  // would not align with any coordinate set, which the decomposition
  // requires. Each power row is reported in per-unit of the local line
  // strength (unit row norm): raw Laplacian rows range over two orders of
  // magnitude across buses, and feeding those scales straight into the
  // filter makes the per-sensor split weights ill-conditioned enough to
  // destroy the fusion transform within a fraction of a second.
  const Eigen::MatrixXd Ls =
      L + opt.shunt * Eigen::MatrixXd::Identity(nb, nb);
  model.C = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd r_diag(m);
  for (int bus = 1; bus <= nb; ++bus) {
    const int b = bus - 1;
    model.C.row(ieee14_power_sensor(bus)).head(nb) =
        Ls.row(b) / Ls.row(b).norm();
    model.C(ieee14_angle_sensor(bus), b) = 1.0;
    model.C(ieee14_frequency_sensor(bus), nb + b) = 1.0;
    r_diag(ieee14_power_sensor(bus)) = opt.power_noise;
    r_diag(ieee14_angle_sensor(bus)) = opt.angle_noise;
    r_diag(ieee14_frequency_sensor(bus)) = opt.frequency_noise;
  }

  model.Q = opt.process_noise * Eigen::MatrixXd::Identity(n, n);
  model.Rbar = r_diag.asDiagonal();
  Eigen::VectorXd s_diag(n);
  s_diag.head(nb).setConstant(opt.prior_angle);
  s_diag.tail(nb).setConstant(opt.prior_frequency);
  model.Sigma = s_diag.asDiagonal();

  try {
    validate_model_structure(model);
  } catch (const ModelError& e) {
    throw ModelError(std::string("build_ieee14: constructed model failed "
                                 "structural validation (try a different "
                                 "shunt): ") +
                     e.what());
  }
  return model;
}

}  // namespace sase
