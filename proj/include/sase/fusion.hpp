#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sase/common.hpp"
#include "sase/decomposition.hpp"
#include "sase/linalg.hpp"
#include "sase/observability.hpp"

namespace sase {

/// Per-step fusion workspace: the transformed bank covariance, its Cholesky
/// factor, and the normal-equation pieces shared by every fusion call at this
/// grid step. Build once per step, reuse across gamma values.
struct FusionWorkspace {
  int n = 0;  ///< state dimension
  int m = 0;  ///< sensor count
  Eigen::MatrixXd H;       ///< mn x n stacked coordinate projectors
  Eigen::MatrixXd Wt;      ///< V W V^T, symmetric positive definite
  Eigen::LLT<Eigen::MatrixXd> Wt_llt;
  Eigen::MatrixXd WinvH;   ///< Wt^{-1} H
  Eigen::MatrixXd N;       ///< H^T Wt^{-1} H (normal matrix)
  Eigen::LLT<Eigen::MatrixXd> N_llt;
};

/// Stack the per-sensor coordinate projectors H_i = diag(support_i) into the
/// mn x n regressor. Every state must appear in at least one support, else
/// the normal matrix is structurally singular.
inline Eigen::MatrixXd stack_support_projectors(const std::vector<std::vector<int>>& support,
                                                int n) {
  const int m = int(support.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m * n, n);
  for (int i = 0; i < m; ++i)
    for (int j : support[std::size_t(i)]) {
      if (j < 0 || j >= n)
        throw std::invalid_argument("stack_support_projectors: support index out of range");
      H(i * n + j, j) = 1.0;
    }
  return H;
}

/// Apply the block-diagonal transformation to the stacked local estimates.
inline Eigen::VectorXd stack_transformed(const std::vector<VBlock>& V,
                                         const std::vector<Eigen::VectorXd>& zeta) {
  if (V.size() != zeta.size())
    throw std::invalid_argument("stack_transformed: block count mismatch");
  const int m = int(V.size());
  const Eigen::Index n = m > 0 ? zeta[0].size() : 0;
  Eigen::VectorXd out(m * n);
  for (int i = 0; i < m; ++i) out.segment(i * n, n) = V[std::size_t(i)].V * zeta[std::size_t(i)];
  return out;
}

/// Build the fusion workspace from the bank covariance and the per-sensor
/// transformations: Wt = V W V^T assembled block by block, factored once.
/// A Cholesky failure (the recursion can lose definiteness to rounding on
/// long ill-conditioned runs) is repaired by clamping the spectrum, with a
/// warning; a singular normal matrix means the supports no longer cover the
/// state space and is a hard error.
inline FusionWorkspace make_fusion_workspace(const Eigen::MatrixXd& W,
                                             const std::vector<VBlock>& V,
                                             const std::vector<std::vector<int>>& support,
                                             WarningLog* log = nullptr) {
  FusionWorkspace ws;
  ws.m = int(V.size());
  if (ws.m == 0) throw std::invalid_argument("make_fusion_workspace: no sensors");
  ws.n = int(V[0].V.rows());
  const int n = ws.n, m = ws.m;
  if (W.rows() != m * n || W.cols() != m * n)
    throw std::invalid_argument("make_fusion_workspace: bank covariance dimension mismatch");
  if (int(support.size()) != m)
    throw std::invalid_argument("make_fusion_workspace: support count mismatch");

  ws.H = stack_support_projectors(support, n);
  ws.Wt.resize(m * n, m * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      ws.Wt.block(i * n, j * n, n, n) =
          V[std::size_t(i)].V * W.block(i * n, j * n, n, n) * V[std::size_t(j)].V.transpose();
  symmetrize(ws.Wt);

  ws.Wt_llt.compute(ws.Wt);
  if (ws.Wt_llt.info() != Eigen::Success) {
    const double shift = clamp_to_psd(ws.Wt, 1e-12);
    warn(log, "make_fusion_workspace: transformed covariance lost definiteness "
              "(spectrum clamped by " +
                  std::to_string(shift) + ")");
    ws.Wt_llt.compute(ws.Wt);
    if (ws.Wt_llt.info() != Eigen::Success)
      throw NumericalError("make_fusion_workspace: transformed covariance is not "
                           "positive definite even after clamping");
  }

  ws.WinvH = ws.Wt_llt.solve(ws.H);
  ws.N = ws.H.transpose() * ws.WinvH;
  symmetrize(ws.N);
  const double n_max = max_eigenvalue(ws.N);
  const double n_min = min_eigenvalue(ws.N);
  if (!(n_min > 1e-12 * std::max(n_max, 1.0)))
    throw NumericalError(
        "fusion normal matrix is numerically singular (broken state coverage or a "
        "degenerate weight): eigenvalue range [" +
        std::to_string(n_min) + ", " + std::to_string(n_max) + "]");
  ws.N_llt.compute(ws.N);
  if (ws.N_llt.info() != Eigen::Success)
    throw NumericalError("fusion normal matrix factorization failed");
  return ws;
}

/// Result of a fusion solve. For the plain weighted solve, `theta` is the
/// whitened residual and `vartheta` is zero; for the sparse-absorber solve,
/// `theta` holds the dense part (mu) and `vartheta` the sparse part.
struct FusionResult {
  Eigen::VectorXd estimate;   ///< fused state estimate
  Eigen::VectorXd theta;      ///< dense residual part
  Eigen::VectorXd vartheta;   ///< sparse attack absorber (zero when unused)
  int iterations = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  bool converged = true;
};

/// Weighted least-squares fusion: estimate = N^{-1} H^T Wt^{-1} (V zeta).
/// With the bank initialized so the column-sum identity holds, this equals
/// the central filter estimate at every step.
inline FusionResult wls_fuse(const FusionWorkspace& ws, const Eigen::VectorXd& vzeta) {
  if (vzeta.size() != Eigen::Index(ws.m) * ws.n)
    throw std::invalid_argument("wls_fuse: stacked estimate dimension mismatch");
  FusionResult r;
  r.estimate = ws.N_llt.solve(ws.WinvH.transpose() * vzeta);
  r.theta = vzeta - ws.H * r.estimate;
  r.vartheta = Eigen::VectorXd::Zero(vzeta.size());
  const Eigen::VectorXd wtheta = ws.Wt_llt.solve(r.theta);
  r.objective = 0.5 * r.theta.dot(wtheta);
  r.kkt_residual = (ws.H.transpose() * wtheta).cwiseAbs().maxCoeff();
  r.iterations = 0;
  r.converged = true;
  return r;
}

/// The regularization threshold: above ||Wt^{-1} theta||_inf the sparse
/// absorber of an attack-free step collapses to zero and the secure solve
/// reproduces the weighted least-squares solution exactly.
inline double gamma_threshold(const Eigen::VectorXd& theta,
                              const Eigen::LLT<Eigen::MatrixXd>& Wt_llt) {
  return Wt_llt.solve(theta).cwiseAbs().maxCoeff();
}

inline double gamma_threshold(const Eigen::VectorXd& theta, const Eigen::MatrixXd& Wt) {
  Eigen::LLT<Eigen::MatrixXd> llt(Wt);
  if (llt.info() != Eigen::Success)
    throw NumericalError("gamma_threshold: covariance is not positive definite");
  return gamma_threshold(theta, llt);
}

struct SecureFuseOptions {
  double gamma = 2.0;   ///< l1 weight; must be > 0
  double prox_tol = 1e-9;  ///< scaled optimality-residual stop (the only convergence test)
  int max_iterations = 50000;
  const Eigen::VectorXd* warm_start = nullptr;  ///< previous step's absorber
};

/// Secure fusion: minimize 1/2 mu^T Wt^{-1} mu + gamma ||vartheta||_1
/// subject to V zeta = H x + mu + vartheta, with absorber entries of sensors
/// outside `sensor_mask` pinned to zero (their transformed values are purely
/// model-propagated, hence trustworthy). Solved by eliminating mu and x
/// analytically and running an accelerated proximal-gradient loop with
/// monotone restart on the absorber marginal, restricted to the free
/// coordinates:
///   g(v) = 1/2 (z - v)^T Pperp (z - v),
///   Pperp = Wt^{-1} - Wt^{-1} H N^{-1} H^T Wt^{-1}
/// where only the free-coordinate square of Pperp is ever formed.
inline FusionResult secure_fuse(const FusionWorkspace& ws, const Eigen::VectorXd& vzeta,
                                const std::vector<std::uint8_t>& sensor_mask,
                                const SecureFuseOptions& opt = {}) {
  const Eigen::Index d = Eigen::Index(ws.m) * ws.n;
  if (vzeta.size() != d) throw std::invalid_argument("secure_fuse: dimension mismatch");
  if (int(sensor_mask.size()) != ws.m)
    throw std::invalid_argument("secure_fuse: sensor mask size mismatch");
  if (!(opt.gamma > 0.0)) throw std::invalid_argument("secure_fuse: gamma must be positive");

  // free coordinates: all entries of currently sampling sensors
  std::vector<Eigen::Index> free_ix;
  for (int i = 0; i < ws.m; ++i)
    if (sensor_mask[std::size_t(i)])
      for (int j = 0; j < ws.n; ++j) free_ix.push_back(Eigen::Index(i) * ws.n + j);
  const Eigen::Index u = Eigen::Index(free_ix.size());

  FusionResult r;
  r.vartheta = Eigen::VectorXd::Zero(d);
  if (u == 0) {  // nothing to absorb: plain weighted solve
    FusionResult wls = wls_fuse(ws, vzeta);
    wls.vartheta = Eigen::VectorXd::Zero(d);
    return wls;
  }

  // free-coordinate square of the eliminated quadratic form:
  //   Pperp_UU = (Wt^{-1})_UU - B N^{-1} B^T,  B = (Wt^{-1} H) rows U
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(d, u);
  for (Eigen::Index c = 0; c < u; ++c) E(free_ix[std::size_t(c)], c) = 1.0;
  const Eigen::MatrixXd WinvE = ws.Wt_llt.solve(E);
  Eigen::MatrixXd Puu(u, u);
  Eigen::MatrixXd B(u, ws.n);
  for (Eigen::Index rI = 0; rI < u; ++rI) {
    Puu.row(rI) = WinvE.row(free_ix[std::size_t(rI)]);
    B.row(rI) = ws.WinvH.row(free_ix[std::size_t(rI)]);
  }
  Puu.noalias() -= B * ws.N_llt.solve(B.transpose());
  symmetrize(Puu);

  // q = (Pperp z) restricted to the free coordinates
  const Eigen::VectorXd Winvz = ws.Wt_llt.solve(vzeta);
  const Eigen::VectorXd Pz_full =
      Winvz - ws.WinvH * ws.N_llt.solve(ws.WinvH.transpose() * vzeta);
  Eigen::VectorXd q(u);
  for (Eigen::Index rI = 0; rI < u; ++rI) q(rI) = Pz_full(free_ix[std::size_t(rI)]);
  const double const_term = 0.5 * vzeta.dot(Pz_full);

  const double L = std::max(max_eigenvalue(Puu), 0.0);
  const double gamma = opt.gamma;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(u);
  if (opt.warm_start != nullptr && opt.warm_start->size() == d)
    for (Eigen::Index rI = 0; rI < u; ++rI) x(rI) = (*opt.warm_start)(free_ix[std::size_t(rI)]);

  const auto soft = [gamma](Eigen::VectorXd v, double step) {
    const double tau = gamma * step;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v(i) = v(i) > tau ? v(i) - tau : (v(i) < -tau ? v(i) + tau : 0.0);
    return v;
  };
  const auto objective = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& Pv) {
    return 0.5 * v.dot(Pv) - v.dot(q) + const_term + gamma * v.lpNorm<1>();
  };
  // entrywise optimality residual of the l1-regularized problem
  const auto kkt_of = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& grad) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double gi = grad(i);
      const double res = v(i) != 0.0 ? std::abs(gi + gamma * (v(i) > 0.0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::abs(gi) - gamma);
      worst = std::max(worst, res);
    }
    return worst;
  };

  int it = 0;
  bool converged = false;
  double kkt = 0.0;
  if (L <= 1e-300) {
    // the quadratic part does not see these coordinates: minimizer is zero
    x.setZero();
    converged = true;
    kkt = kkt_of(x, Eigen::VectorXd(-q));
  } else {
    const double step = 1.0 / L;
    Eigen::VectorXd y = x;
    Eigen::VectorXd Px = Puu * x;
    double Fx = objective(x, Px);
    double t = 1.0;
    const double scale = std::max({1.0, gamma, q.cwiseAbs().maxCoeff()});
    int stalled = 0;
    for (it = 1; it <= opt.max_iterations; ++it) {
      const Eigen::VectorXd grad_y = Puu * y - q;
      Eigen::VectorXd x_new = soft(y - step * grad_y, step);
      Eigen::VectorXd Px_new = Puu * x_new;
      double F_new = objective(x_new, Px_new);
      if (F_new > Fx) {  // monotone restart: drop momentum, retry from x
        y = x;
        const Eigen::VectorXd grad_x = Px - q;
        x_new = soft(x - step * grad_x, step);
        Px_new = Puu * x_new;
        F_new = objective(x_new, Px_new);
        t = 1.0;
      }
      const Eigen::VectorXd grad_new = Px_new - q;
      kkt = kkt_of(x_new, grad_new);
      const double move = (x_new - x).cwiseAbs().maxCoeff();
      const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_new + ((t - 1.0) / t_new) * (x_new - x);
      x = x_new;
      Px = Px_new;
      Fx = F_new;
      t = t_new;
      if (kkt <= opt.prox_tol * scale) {
        converged = true;
        break;
      }
      // machine-precision fixed point: no further progress is possible
      stalled = move <= 1e-16 * std::max(1.0, x.cwiseAbs().maxCoeff()) ? stalled + 1 : 0;
      if (stalled >= 20) break;
    }
    if (it > opt.max_iterations) it = opt.max_iterations;
  }

  for (Eigen::Index rI = 0; rI < u; ++rI) r.vartheta(free_ix[std::size_t(rI)]) = x(rI);
  r.estimate = ws.N_llt.solve(ws.WinvH.transpose() * (vzeta - r.vartheta));
  r.theta = vzeta - ws.H * r.estimate - r.vartheta;
  r.objective = 0.5 * r.theta.dot(ws.Wt_llt.solve(r.theta)) + gamma * r.vartheta.lpNorm<1>();
  r.iterations = it;
  r.kkt_residual = kkt;
  r.converged = converged;
  return r;
}

/// The a-th largest element of a vector, duplicates counted with
/// multiplicity (a = 1 gives the maximum).
inline double h_largest(const Eigen::VectorXd& v, int a) {
  if (a < 1 || Eigen::Index(a) > v.size())
    throw std::invalid_argument("h_largest: order statistic out of range");
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end(), std::greater<double>());
  return s[std::size_t(a - 1)];
}

namespace detail {
/// Shared skeleton of the per-state deviation bounds: build the per-state
/// vector eta over uncorrupted observers and take the two-sided order
/// statistic. `gamma_term(i, j)` supplies the regularization contribution
/// for observer i of state j (row index n(i-1)+j of Wt, 0-based n*i+j).
template <typename GammaTerm>
Eigen::VectorXd deviation_bound_impl(const std::vector<Eigen::VectorXd>& theta_blocks,
                                     const ObservabilityIndex& index,
                                     const std::vector<int>& corrupted,
                                     GammaTerm&& gamma_term) {
  const int n = index.n;
  std::vector<char> bad(std::size_t(index.m), 0);
  for (int c : corrupted) {
    if (c < 0 || c >= index.m)
      throw std::invalid_argument("deviation bound: corrupted sensor out of range");
    bad[std::size_t(c)] = 1;
  }
  Eigen::VectorXd bound(n);
  for (int j = 0; j < n; ++j) {
    const auto& obs = index.observers[std::size_t(j)];
    std::vector<double> eta;
    int corrupted_observers = 0;
    for (int i : obs) {
      if (bad[std::size_t(i)]) {
        ++corrupted_observers;
        continue;
      }
      eta.push_back(theta_blocks[std::size_t(i)](j) + gamma_term(i, j));
    }
    const int clean = int(eta.size());
    if (clean <= corrupted_observers)
      throw ModelError("deviation bound undefined for state " + std::to_string(j + 1) +
                       ": corrupted observers (" + std::to_string(corrupted_observers) +
                       ") are not outnumbered by clean ones (" + std::to_string(clean) + ")");
    const int c = (clean - corrupted_observers + 1) / 2;  // ceil of half the margin
    Eigen::VectorXd e = Eigen::Map<Eigen::VectorXd>(eta.data(), clean);
    bound(j) = std::max(std::abs(h_largest(e, c)), std::abs(-h_largest(-e, c)));
  }
  return bound;
}
}  // namespace detail

/// Per-state upper bound on |secure estimate - clean weighted estimate|
/// using a subgradient certificate c_cert in [-1, 1]^{mn}: the eta entries
/// are theta_i[j] + gamma * (Wt c_cert)_{n i + j} over clean observers.
inline Eigen::VectorXd attack_error_bound(const Eigen::VectorXd& theta_oracle,
                                          const Eigen::MatrixXd& Wt, double gamma,
                                          const ObservabilityIndex& index,
                                          const std::vector<int>& corrupted,
                                          const Eigen::VectorXd& c_cert) {
  const int n = index.n, m = index.m;
  if (theta_oracle.size() != Eigen::Index(m) * n || c_cert.size() != Eigen::Index(m) * n)
    throw std::invalid_argument("attack_error_bound: dimension mismatch");
  if (c_cert.cwiseAbs().maxCoeff() > 1.0 + 1e-12)
    throw std::invalid_argument("attack_error_bound: certificate outside [-1, 1]");
  const Eigen::VectorXd wc = Wt * c_cert;
  std::vector<Eigen::VectorXd> blocks;
  for (int i = 0; i < m; ++i) blocks.push_back(theta_oracle.segment(i * n, n));
  return detail::deviation_bound_impl(blocks, index, corrupted, [&](int i, int j) {
    return gamma * wc(Eigen::Index(i) * n + j);
  });
}

/// Conservative variant: the certificate is unknown, so each eta entry is
/// widened to its worst case over all certificates, gamma times the absolute
/// row sum of Wt. Both signed corners are evaluated and the larger order
/// statistic wins, so the result dominates every certificate-based bound.
inline Eigen::VectorXd conservative_attack_error_bound(const Eigen::VectorXd& theta_oracle,
                                                       const Eigen::MatrixXd& Wt, double gamma,
                                                       const ObservabilityIndex& index,
                                                       const std::vector<int>& corrupted) {
  const int n = index.n, m = index.m;
  if (theta_oracle.size() != Eigen::Index(m) * n)
    throw std::invalid_argument("conservative_attack_error_bound: dimension mismatch");
  const Eigen::VectorXd row_abs = Wt.cwiseAbs().rowwise().sum();
  std::vector<Eigen::VectorXd> blocks;
  for (int i = 0; i < m; ++i) blocks.push_back(theta_oracle.segment(i * n, n));
  const Eigen::VectorXd hi = detail::deviation_bound_impl(
      blocks, index, corrupted,
      [&](int i, int j) { return gamma * row_abs(Eigen::Index(i) * n + j); });
  const Eigen::VectorXd lo = detail::deviation_bound_impl(
      blocks, index, corrupted,
      [&](int i, int j) { return -gamma * row_abs(Eigen::Index(i) * n + j); });
  return hi.cwiseMax(lo);
}

}  // namespace sase
