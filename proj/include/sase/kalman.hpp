#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sase/common.hpp"
#include "sase/discretize.hpp"
#include "sase/linalg.hpp"
#include "sase/model.hpp"

namespace sase {

/// Filter state after grid step k.
struct KfState {
  Eigen::VectorXd xhat;  ///< estimate x[k|k]
  Eigen::MatrixXd P;     ///< covariance P[k|k], symmetric PSD
  int k = 0;             ///< grid index
  double last_t = 0.0;   ///< time of this step
};

/// Start from the prior: zero estimate with the initial-state covariance.
inline KfState init_kf(const ContinuousModel& model) {
  KfState s;
  s.xhat = Eigen::VectorXd::Zero(model.n());
  s.P = model.Sigma;
  return s;
}

/// Everything one filter step used or produced besides the new state. The
/// decomposition consumes these: the gap transition and its inverse, the
/// masked gain, and the closed-loop propagator Pi = (I - K C) A_gap.
struct KfStepOutput {
  double dt = 0.0;
  Eigen::MatrixXd Ad;    ///< transition over the gap
  Eigen::MatrixXd Qd;    ///< accumulated process noise over the gap
  Eigen::MatrixXd Ainv;  ///< inverse transition (exponential of the negated gap)
  Eigen::MatrixXd Cmask; ///< C with inactive sensor rows zeroed
  Eigen::MatrixXd Rk;    ///< sensor noise with inactive rows/columns zeroed
  std::vector<std::uint8_t> mask;
  Eigen::VectorXd xhat_pred;   ///< predicted estimate before the update
  Eigen::MatrixXd P_pred;      ///< predicted covariance before the update
  Eigen::VectorXd innovation;  ///< y - C xhat_pred on active rows, zero elsewhere
  Eigen::MatrixXd K;           ///< gain; inactive columns are exactly zero
  Eigen::MatrixXd Pi;          ///< (I - K C) Ad
  int active_count = 0;
  int innovation_rank = 0;  ///< numeric rank of the active innovation covariance
};

inline std::vector<int> active_sensors(const std::vector<std::uint8_t>& mask) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(int(i));
  return idx;
}

/// (Re)derive everything downstream of the gain: the updated estimate, the
/// Joseph-form covariance, and Pi. Callers that nudge K (rank repair in the
/// decomposition) call this again to keep state and outputs consistent.
inline void refresh_gain_products(KfStepOutput& out, KfState& st) {
  const Eigen::Index n = out.P_pred.rows();
  const Eigen::MatrixXd J =
      Eigen::MatrixXd::Identity(n, n) - out.K * out.Cmask;
  st.xhat = out.xhat_pred + out.K * out.innovation;
  st.P = J * out.P_pred * J.transpose() + out.K * out.Rk * out.K.transpose();
  symmetrize(st.P);
  out.Pi = J * out.Ad;
}

/// One asynchronous filter step over a gap of length dt, updating with the
/// sensors flagged in `mask` (y entries elsewhere are ignored). The gain is
/// computed on the active submatrix through an SVD pseudo-inverse, so
/// columns of K for silent sensors are exactly zero — K C equals K (masked C)
/// bit-for-bit. A rank-deficient active innovation covariance is legal but
/// logged. The covariance update is Joseph-form.
inline std::pair<KfState, KfStepOutput> kf_step(const KfState& prev, const ContinuousModel& model,
                                                double dt, const std::vector<std::uint8_t>& mask,
                                                const Eigen::VectorXd& y,
                                                const Eigen::MatrixXd& R_t,
                                                WarningLog* log = nullptr) {
  const Eigen::Index n = model.n();
  const Eigen::Index m = model.m();
  if (prev.xhat.size() != n || prev.P.rows() != n)
    throw std::invalid_argument("kf_step: state dimension mismatch");
  if (Eigen::Index(mask.size()) != m || y.size() != m || R_t.rows() != m || R_t.cols() != m)
    throw std::invalid_argument("kf_step: sensor-side dimension mismatch");
  if (!(dt >= 0.0)) throw std::invalid_argument("kf_step: dt must be >= 0");

  KfStepOutput out;
  out.dt = dt;
  out.mask = mask;
  const Discretization d = discretize(model.A, model.Q, dt);
  out.Ad = d.A;
  out.Qd = d.Q;
  out.Ainv = discrete_inverse(model.A, dt);

  out.xhat_pred = out.Ad * prev.xhat;
  out.P_pred = out.Ad * prev.P * out.Ad.transpose() + out.Qd;
  symmetrize(out.P_pred);

  const std::vector<int> act = active_sensors(mask);
  out.active_count = int(act.size());
  out.Cmask = Eigen::MatrixXd::Zero(m, n);
  out.Rk = Eigen::MatrixXd::Zero(m, m);
  out.innovation = Eigen::VectorXd::Zero(m);
  out.K = Eigen::MatrixXd::Zero(n, m);

  if (!act.empty()) {
    const Eigen::Index a = Eigen::Index(act.size());
    Eigen::MatrixXd Ca(a, n);
    Eigen::MatrixXd Ra(a, a);
    Eigen::VectorXd ya(a);
    for (Eigen::Index r = 0; r < a; ++r) {
      Ca.row(r) = model.C.row(act[std::size_t(r)]);
      ya(r) = y(act[std::size_t(r)]);
      for (Eigen::Index c = 0; c < a; ++c)
        Ra(r, c) = R_t(act[std::size_t(r)], act[std::size_t(c)]);
    }
    Eigen::MatrixXd S = Ca * out.P_pred * Ca.transpose() + Ra;
    symmetrize(S);
    int rank = 0;
    const Eigen::MatrixXd Sinv = pinv_svd(S, kPinvCutoff, &rank);
    out.innovation_rank = rank;
    if (rank < int(a))
      warn(log, "kf_step: innovation covariance rank " + std::to_string(rank) + " below the " +
                    std::to_string(a) + " active sensors at t=" + std::to_string(prev.last_t) +
                    "+dt=" + std::to_string(dt));
    const Eigen::MatrixXd Ka = out.P_pred * Ca.transpose() * Sinv;
    const Eigen::VectorXd innov_a = ya - Ca * out.xhat_pred;
    for (Eigen::Index r = 0; r < a; ++r) {
      out.K.col(act[std::size_t(r)]) = Ka.col(r);
      out.Cmask.row(act[std::size_t(r)]) = Ca.row(r);
      out.innovation(act[std::size_t(r)]) = innov_a(r);
      for (Eigen::Index c = 0; c < a; ++c) out.Rk(act[std::size_t(r)], act[std::size_t(c)]) = Ra(r, c);
    }
  }

  KfState next;
  next.k = prev.k + 1;
  next.last_t = prev.last_t + dt;
  refresh_gain_products(out, next);
  return {std::move(next), std::move(out)};
}

/// Extreme covariance eigenvalues over a run; the empirical counterpart of
/// the uniform covariance bounds that non-pathological sampling guarantees.
struct CovarianceBounds {
  double p_min = 0.0;
  double p_max = 0.0;
};

inline CovarianceBounds covariance_bounds_check(const std::vector<Eigen::MatrixXd>& history) {
  if (history.empty()) throw std::invalid_argument("covariance_bounds_check: empty history");
  CovarianceBounds b;
  b.p_min = std::numeric_limits<double>::infinity();
  b.p_max = -std::numeric_limits<double>::infinity();
  for (const auto& P : history) {
    b.p_min = std::min(b.p_min, min_eigenvalue(P));
    b.p_max = std::max(b.p_max, max_eigenvalue(P));
  }
  return b;
}

}  // namespace sase
