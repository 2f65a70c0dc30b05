#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sase/common.hpp"
#include "sase/kalman.hpp"
#include "sase/linalg.hpp"
#include "sase/model.hpp"
#include "sase/observability.hpp"
#include "sase/rng.hpp"
#include "sase/schedule.hpp"
#include "sase/trajectory.hpp"

namespace sase {

/// Initial split weights: G_i[0] is diagonal with entry 1/|E_j| at state j
/// when sensor i observes state j, zero otherwise. The weights of each
/// state's observers share it equally, so the G's sum to the identity.
inline std::vector<Eigen::MatrixXd> init_G(const ObservabilityIndex& index) {
  std::vector<Eigen::MatrixXd> G(std::size_t(index.m),
                                 Eigen::MatrixXd::Zero(index.n, index.n));
  for (int j = 0; j < index.n; ++j) {
    const auto& obs = index.observers[std::size_t(j)];
    if (obs.empty())
      throw ModelError("init_G: state " + std::to_string(j + 1) + " has no observing sensor");
    const double share = 1.0 / double(obs.size());
    for (int i : obs) G[std::size_t(i)](j, j) = share;
  }
  return G;
}

/// Initial residual covariance across the sensor bank, stacked mn x mn.
/// Blocks are built from diagonal weights so that three properties hold by
/// construction and are re-verified numerically here: symmetry, strict
/// positive definiteness, and the block-column-sum identity
///   sum_i W_ij[0] = Sigma G_j[0]^T,
/// which seeds the bank-covariance recursion (the recursion preserves it with
/// the filter covariance in place of Sigma). The identity constrains the
/// initial-state covariance: it must commute with every G_i[0] (a diagonal
/// Sigma always works); otherwise this throws.
inline Eigen::MatrixXd init_W0(const ObservabilityIndex& index, const Eigen::MatrixXd& Sigma) {
  const int n = index.n;
  const int m = index.m;
  if (Sigma.rows() != n || Sigma.cols() != n)
    throw std::invalid_argument("init_W0: Sigma dimension mismatch");
  const std::vector<Eigen::MatrixXd> G = init_G(index);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m * n, m * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd d;  // diagonal of the weight block
      if (i == j)
        d = G[std::size_t(i)].diagonal().array() + double(m - 1);
      else
        d = Eigen::VectorXd::Constant(n, -1.0);
      W.block(i * n, j * n, n, n) =
          Eigen::VectorXd(d.array() * Sigma.diagonal().array()).asDiagonal();
    }
  }
  // verify all three required properties
  if (!is_symmetric(W, 1e-12)) throw ModelError("init_W0: construction lost symmetry");
  const double lam_min = min_eigenvalue(W);
  if (!(lam_min > 0.0))
    throw ModelError("init_W0: initial bank covariance is not positive definite "
                     "(smallest eigenvalue " +
                     std::to_string(lam_min) + "); the initial-state covariance must be > 0");
  const double scale = std::max(1.0, max_abs(Sigma));
  for (int j = 0; j < m; ++j) {
    Eigen::MatrixXd col_sum = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < m; ++i) col_sum += W.block(i * n, j * n, n, n);
    const Eigen::MatrixXd target = Sigma * G[std::size_t(j)].transpose();
    if (max_abs(col_sum - target) > 1e-10 * scale)
      throw ModelError(
          "init_W0: block-column-sum identity failed for sensor " + std::to_string(j + 1) +
          "; the initial-state covariance must commute with the initial split weights "
          "(a diagonal Sigma always works)");
  }
  return W;
}

/// The transformation V_i with V_i G_i = H_i plus its health indicators.
struct VBlock {
  Eigen::MatrixXd V;
  int rank = 0;       ///< numeric rank of the G it was built from
  double cond = 0.0;  ///< condition number of V
};

/// Build the invertible V_i mapping the split weight G_i onto its coordinate
/// projector H_i = diag(support): pseudo-inverse rows where H_i is active,
/// unit left-null-space rows of G_i filling the silent states. Throws when
/// the rowspan of G_i no longer covers the support (the degenerate event the
/// caller must repair upstream by nudging the gain); warns when V_i is
/// ill-conditioned.
inline VBlock compute_V(const Eigen::MatrixXd& G, const std::vector<int>& support,
                        double rank_tol = 1e-8, WarningLog* log = nullptr) {
  const Eigen::Index n = G.rows();
  if (G.cols() != n) throw std::invalid_argument("compute_V: G must be square");
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  for (int j : support) {
    if (j < 0 || j >= int(n)) throw std::invalid_argument("compute_V: support index out of range");
    H(j, j) = 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rank_tol * smax && sv(i) > 0.0) ++rank;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (int i = 0; i < rank; ++i) inv(i) = 1.0 / sv(i);
  const Eigen::MatrixXd Gdag = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();

  // the support must lie inside the rowspan of G, else no V can reach H
  const Eigen::MatrixXd residual = H * Gdag * G - H;
  if (max_abs(residual) > 100.0 * rank_tol)
    throw ModelError("compute_V: split weight no longer spans its observable support "
                     "(rowspan defect " +
                     std::to_string(max_abs(residual)) + ")");

  VBlock out;
  out.rank = rank;
  out.V = H * Gdag;
  // fill the zero rows (states outside the support) with unit vectors
  // spanning the left null space of G
  std::vector<int> zero_rows;
  for (Eigen::Index r = 0; r < n; ++r)
    if (out.V.row(r).norm() < rank_tol) zero_rows.push_back(int(r));
  const int null_dim = int(n) - rank;
  if (int(zero_rows.size()) != null_dim)
    throw ModelError("compute_V: " + std::to_string(zero_rows.size()) +
                     " silent states but a null space of dimension " + std::to_string(null_dim) +
                     "; support and rank disagree");
  for (int q = 0; q < null_dim; ++q)
    out.V.row(zero_rows[std::size_t(q)]) = svd.matrixU().col(rank + q).transpose();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd_v(out.V);
  const Eigen::VectorXd sv_v = svd_v.singularValues();
  out.cond = sv_v(sv_v.size() - 1) > 0.0
                 ? sv_v(0) / sv_v(sv_v.size() - 1)
                 : std::numeric_limits<double>::infinity();
  if (!(out.cond < 1e12))
    warn(log, "compute_V: ill-conditioned transformation (cond " + std::to_string(out.cond) + ")");
  return out;
}

/// Advance the bank residual covariance one grid step:
///   W' = (I (x) Pi) W (I (x) Pi)^T + S Q S^T + (K K^T) o (R (x) 1)
/// with S stacking Pi G_i Ainv and K the step gain. Exploits the Kronecker
/// block structure as m^2 independent n x n products.
inline Eigen::MatrixXd step_W(const Eigen::MatrixXd& W, const KfStepOutput& out,
                              const std::vector<Eigen::MatrixXd>& G) {
  const Eigen::Index n = out.Pi.rows();
  const Eigen::Index m = Eigen::Index(G.size());
  if (W.rows() != m * n || W.cols() != m * n)
    throw std::invalid_argument("step_W: bank covariance dimension mismatch");
  std::vector<Eigen::MatrixXd> S(static_cast<std::size_t>(m));
  std::vector<Eigen::MatrixXd> SQ(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    S[std::size_t(i)] = out.Pi * G[std::size_t(i)] * out.Ainv;
    SQ[std::size_t(i)] = S[std::size_t(i)] * out.Qd;
  }
  Eigen::MatrixXd Wn(m * n, m * n);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) {
      Eigen::MatrixXd blk = out.Pi * W.block(i * n, j * n, n, n) * out.Pi.transpose();
      blk.noalias() += SQ[std::size_t(i)] * S[std::size_t(j)].transpose();
      if (out.Rk(i, j) != 0.0)
        blk.noalias() += out.Rk(i, j) * (out.K.col(i) * out.K.col(j).transpose());
      Wn.block(i * n, j * n, n, n) = blk;
      if (j != i) Wn.block(j * n, i * n, n, n) = blk.transpose();
    }
  }
  symmetrize(Wn);
  if (!is_finite(Wn)) throw NumericalError("step_W: non-finite bank covariance");
  return Wn;
}

/// The decomposed estimator bank: per-sensor local estimates and split
/// weights whose sums reproduce the central filter, plus the joint residual
/// covariance of the stacked local residuals eps_i = zeta_i - G_i x.
struct LocalBank {
  std::vector<Eigen::VectorXd> zeta;  ///< per sensor, sums to the central estimate
  std::vector<Eigen::MatrixXd> G;     ///< per sensor, sums to the identity
  Eigen::MatrixXd W;                  ///< mn x mn residual covariance
  int k = 0;

  int m() const { return int(G.size()); }
  Eigen::Index n() const { return G.empty() ? 0 : G[0].rows(); }
};

inline LocalBank init_bank(const ContinuousModel& model, const ObservabilityIndex& index) {
  LocalBank bank;
  bank.zeta.assign(std::size_t(index.m), Eigen::VectorXd::Zero(model.n()));
  bank.G = init_G(index);
  bank.W = init_W0(index, model.Sigma);
  return bank;
}

/// Advance the bank through one filter step:
///   zeta_i' = Pi zeta_i + K_i y_i,   G_i' = Pi G_i Ainv + K_i C_i,
/// with the covariance advanced first (it consumes the pre-step G's).
/// Sensors outside the step's mask contribute nothing (their gain column is
/// exactly zero).
inline void step_bank(LocalBank& bank, const KfStepOutput& out, const Eigen::VectorXd& y) {
  const Eigen::Index m = Eigen::Index(bank.m());
  if (y.size() != m) throw std::invalid_argument("step_bank: measurement dimension mismatch");
  bank.W = step_W(bank.W, out, bank.G);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::VectorXd z = out.Pi * bank.zeta[std::size_t(i)];
    Eigen::MatrixXd g = out.Pi * bank.G[std::size_t(i)] * out.Ainv;
    if (out.mask[std::size_t(i)]) {
      z.noalias() += out.K.col(i) * y(i);
      g.noalias() += out.K.col(i) * out.Cmask.row(i);
    }
    bank.zeta[std::size_t(i)] = std::move(z);
    bank.G[std::size_t(i)] = std::move(g);
  }
  ++bank.k;
}

/// Monte-Carlo estimate of the bank residual moments at selected grid steps,
/// for validating the covariance recursion against simulated residuals
/// eps_i[k] = zeta_i[k] - G_i[k] x[k]. The filter chain (gains, propagators,
/// weights) is data-independent, so it is computed once; runs differ only in
/// their noise seeds, reproducing exactly what full simulations would do.
struct ResidualMoments {
  std::vector<int> ks;                ///< evaluated grid indices
  std::vector<Eigen::VectorXd> mean;  ///< empirical residual mean, stacked mn
  std::vector<Eigen::MatrixXd> cov;   ///< empirical residual covariance
  std::vector<Eigen::MatrixXd> W;     ///< the recursion's covariance at those steps
  int runs = 0;
};

inline ResidualMoments residual_monte_carlo(const ContinuousModel& model,
                                            const SamplingSchedule& schedule,
                                            const Eigen::MatrixXd& R,
                                            const ObservabilityIndex& index,
                                            const std::vector<int>& eval_ks, int runs,
                                            std::uint64_t seed0) {
  const Eigen::Index n = model.n();
  const int m = int(model.m());
  const MergedGrid grid = merge_schedule(schedule);
  const int last_k = int(grid.steps()) - 1;
  for (int k : eval_ks)
    if (k < 0 || k > last_k)
      throw std::invalid_argument("residual_monte_carlo: grid index out of range");

  // one pass for the data-independent chain: per-step discretization, gain,
  // propagator, split weights, and the covariance recursion
  struct StepCache {
    Eigen::MatrixXd Ad, Qd_root, Pi, K;
    Eigen::MatrixXd R_root;
    std::vector<std::uint8_t> mask;
    double t = 0.0;
  };
  std::vector<StepCache> chain;
  std::vector<std::vector<Eigen::MatrixXd>> G_at(eval_ks.size());
  ResidualMoments out;
  out.ks = eval_ks;
  out.runs = runs;
  out.mean.assign(eval_ks.size(), Eigen::VectorXd::Zero(m * n));
  out.cov.assign(eval_ks.size(), Eigen::MatrixXd::Zero(m * n, m * n));
  out.W.resize(eval_ks.size());

  LocalBank bank = init_bank(model, index);
  KfState kf = init_kf(model);
  const Eigen::MatrixXd R_root = symmetric_sqrt(R, 1e-9, "sensor noise covariance");
  for (std::size_t e = 0; e < eval_ks.size(); ++e)
    if (eval_ks[e] == 0) {
      G_at[e] = bank.G;
      out.W[e] = bank.W;
    }
  for (int k = 1; k <= last_k; ++k) {
    const double dt = grid.times[std::size_t(k)] - grid.times[std::size_t(k - 1)];
    auto [kf1, so] = kf_step(kf, model, dt, grid.masks[std::size_t(k)],
                             Eigen::VectorXd::Zero(m), R);
    kf = kf1;
    StepCache c;
    c.Ad = so.Ad;
    c.Qd_root = symmetric_sqrt(so.Qd, 1e-9, "process noise covariance");
    c.Pi = so.Pi;
    c.K = so.K;
    c.R_root = R_root;
    c.mask = grid.masks[std::size_t(k)];
    c.t = grid.times[std::size_t(k)];
    chain.push_back(std::move(c));
    bank.W = step_W(bank.W, so, bank.G);
    for (int i = 0; i < m; ++i) {
      Eigen::MatrixXd g = so.Pi * bank.G[std::size_t(i)] * so.Ainv;
      if (so.mask[std::size_t(i)]) g.noalias() += so.K.col(i) * so.Cmask.row(i);
      bank.G[std::size_t(i)] = std::move(g);
    }
    ++bank.k;
    for (std::size_t e = 0; e < eval_ks.size(); ++e)
      if (eval_ks[e] == k) {
        G_at[e] = bank.G;
        out.W[e] = bank.W;
      }
  }

  // seeded runs: simulate x and y with the standard keying, propagate the
  // local estimates, and accumulate the stacked residuals
  Eigen::VectorXd eps(m * n);
  for (int r = 0; r < runs; ++r) {
    const std::uint64_t seed = seed0 + std::uint64_t(r);
    KeyedStream init(seed, rng_domain::kInitialState);
    const Eigen::MatrixXd sigma_root = symmetric_sqrt(model.Sigma, 1e-9, "initial-state covariance");
    Eigen::VectorXd x = sigma_root * init.normal_vector(n);
    std::vector<Eigen::VectorXd> zeta(std::size_t(m), Eigen::VectorXd::Zero(n));
    for (std::size_t e = 0; e < eval_ks.size(); ++e)
      if (eval_ks[e] == 0) {
        for (int i = 0; i < m; ++i) eps.segment(i * n, n) = -G_at[e][std::size_t(i)] * x;
        out.mean[e] += eps;
        out.cov[e] += eps * eps.transpose();
      }
    for (std::size_t s = 0; s < chain.size(); ++s) {
      const StepCache& c = chain[s];
      KeyedStream w(seed, rng_domain::kProcess, time_key(c.t));
      x = c.Ad * x + c.Qd_root * w.normal_vector(n);
      KeyedStream vs(seed, rng_domain::kMeasurement, time_key(c.t));
      const Eigen::VectorXd y = model.C * x + c.R_root * vs.normal_vector(m);
      for (int i = 0; i < m; ++i) {
        zeta[std::size_t(i)] = c.Pi * zeta[std::size_t(i)];
        if (c.mask[std::size_t(i)]) zeta[std::size_t(i)] += c.K.col(i) * y(i);
      }
      for (std::size_t e = 0; e < eval_ks.size(); ++e)
        if (eval_ks[e] == int(s) + 1) {
          for (int i = 0; i < m; ++i)
            eps.segment(i * n, n) = zeta[std::size_t(i)] - G_at[e][std::size_t(i)] * x;
          out.mean[e] += eps;
          out.cov[e] += eps * eps.transpose();
        }
    }
  }
  for (std::size_t e = 0; e < eval_ks.size(); ++e) {
    out.mean[e] /= double(runs);
    out.cov[e] /= double(runs);
    out.cov[e] -= out.mean[e] * out.mean[e].transpose();
  }
  return out;
}

}  // namespace sase
