#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <string>
#include <vector>

#include "sase/common.hpp"
#include "sase/linalg.hpp"

namespace sase {

/// Continuous-time LTI plant
///
///   dx = A x dt + dw,          cov(dw) = Q dt      (n states)
///   y_i(t) = C_i x(t) + v_i(t), cov(v(t)) = R(t)    (m sensors)
///
/// with x(0) ~ N(0, Sigma) and R(t) bounded above by Rbar. Sensors sample
/// asynchronously; per-gap discretization happens downstream.
struct ContinuousModel {
  Eigen::MatrixXd A;      ///< n x n drift
  Eigen::MatrixXd C;      ///< m x n output map (row i = sensor i)
  Eigen::MatrixXd Q;      ///< n x n process noise intensity, > 0
  Eigen::MatrixXd Rbar;   ///< m x m measurement noise upper bound, > 0
  Eigen::MatrixXd Sigma;  ///< n x n initial-state covariance, >= 0

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return C.rows(); }
};

/// Eigenstructure of A used by the observability machinery. `separated`
/// means all eigenvalues are pairwise distinct beyond tolerance, so right /
/// left eigenvectors are well defined mode by mode.
struct ModeDecomposition {
  Eigen::VectorXcd eigenvalues;
  Eigen::MatrixXcd V;  ///< right eigenvectors (columns)
  Eigen::MatrixXcd W;  ///< left eigenvectors (rows), W = V^{-1} when separated
  bool separated = false;
  double min_separation = 0.0;
  double scale = 1.0;  ///< max |eigenvalue|, floored at 1
};

inline ModeDecomposition analyze_modes(const Eigen::MatrixXd& A, double sep_tol = 1e-8) {
  if (A.rows() != A.cols()) throw std::invalid_argument("analyze_modes: A must be square");
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success)
    throw NumericalError("analyze_modes: eigendecomposition of A failed");
  ModeDecomposition md;
  md.eigenvalues = es.eigenvalues();
  md.V = es.eigenvectors();
  const Eigen::Index n = A.rows();
  md.scale = std::max(1.0, md.eigenvalues.cwiseAbs().maxCoeff());
  md.min_separation = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b)
      md.min_separation = std::min(md.min_separation, std::abs(md.eigenvalues(a) - md.eigenvalues(b)));
  if (n == 1) md.min_separation = std::numeric_limits<double>::infinity();
  md.separated = md.min_separation > sep_tol * md.scale;
  if (md.separated) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(md.V);
    if (!lu.isInvertible()) {
      md.separated = false;
    } else {
      md.W = lu.inverse();
    }
  }
  return md;
}

/// Every repeated eigenvalue must have geometric multiplicity one (the
/// per-sensor observable subspaces are unions of eigenspaces only then).
/// Eigenvalues are clustered at sep_tol * scale; each cluster's multiplicity
/// is checked via rank(A - lambda I).
inline void check_unit_geometric_multiplicity(const Eigen::MatrixXd& A,
                                              double sep_tol = 1e-8,
                                              double rank_tol = kRankTol) {
  const Eigen::Index n = A.rows();
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw NumericalError("geometric multiplicity check: eigendecomposition failed");
  const Eigen::VectorXcd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  std::vector<bool> used(n, false);
  for (Eigen::Index a = 0; a < n; ++a) {
    if (used[a]) continue;
    std::vector<Eigen::Index> cluster{a};
    for (Eigen::Index b = a + 1; b < n; ++b) {
      if (!used[b] && std::abs(ev(a) - ev(b)) <= sep_tol * scale) {
        used[b] = true;
        cluster.push_back(b);
      }
    }
    if (cluster.size() < 2) continue;
    std::complex<double> mean(0, 0);
    for (auto idx : cluster) mean += ev(idx);
    mean /= double(cluster.size());
    Eigen::MatrixXcd shifted = A.cast<std::complex<double>>();
    shifted.diagonal().array() -= mean;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(shifted);
    const auto& sv = svd.singularValues();
    const double cutoff = rank_tol * std::max(sv(0), 1e-300);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > cutoff) ++rank;
    const Eigen::Index gm = n - rank;
    if (gm > 1)
      throw ModelError("eigenvalue " + std::to_string(mean.real()) + "+" +
                       std::to_string(mean.imag()) +
                       "i has geometric multiplicity " + std::to_string(gm) +
                       " (must be 1)");
  }
}

namespace detail {

inline void require_square(const Eigen::MatrixXd& M, Eigen::Index n, const char* name) {
  if (M.rows() != n || M.cols() != n)
    throw ModelError(std::string(name) + " must be " + std::to_string(n) + "x" +
                     std::to_string(n));
}

inline void require_symmetric_with(const Eigen::MatrixXd& M, const char* name) {
  if (!is_symmetric(M, 1e-10))
    throw ModelError(std::string(name) + " must be symmetric");
}

}  // namespace detail

/// Structural validation of a model: shapes, symmetry, definiteness
/// (eigenvalue floor), finite entries, Assumption-level eigenvalue
/// multiplicity. Observability is checked separately (see observability.hpp)
/// because it needs the mode machinery.
inline void validate_model_structure(const ContinuousModel& model) {
  const Eigen::Index n = model.n();
  const Eigen::Index m = model.m();
  if (n < 1) throw ModelError("model needs at least one state");
  if (m < 1) throw ModelError("model needs at least one sensor");
  if (model.C.cols() != n) throw ModelError("C must have n columns");
  detail::require_square(model.A, n, "A");
  detail::require_square(model.Q, n, "Q");
  detail::require_square(model.Sigma, n, "Sigma");
  detail::require_square(model.Rbar, m, "Rbar");
  for (const auto* M : {&model.A, &model.C, &model.Q, &model.Rbar, &model.Sigma})
    if (!is_finite(*M)) throw ModelError("model matrices must be finite");
  detail::require_symmetric_with(model.Q, "Q");
  detail::require_symmetric_with(model.Rbar, "Rbar");
  detail::require_symmetric_with(model.Sigma, "Sigma");

  const double q_min = min_eigenvalue(model.Q);
  if (q_min <= 1e-12 * std::max(1.0, max_abs(model.Q)))
    throw ModelError("Q must be strictly positive definite (min eigenvalue " +
                     std::to_string(q_min) + ")");
  const double r_min = min_eigenvalue(model.Rbar);
  if (r_min <= 1e-12 * std::max(1.0, max_abs(model.Rbar)))
    throw ModelError("Rbar must be strictly positive definite (min eigenvalue " +
                     std::to_string(r_min) + ")");
  const double s_min = min_eigenvalue(model.Sigma);
  if (s_min < -1e-12 * std::max(1.0, max_abs(model.Sigma)))
    throw ModelError("Sigma must be positive semidefinite (min eigenvalue " +
                     std::to_string(s_min) + ")");
  check_unit_geometric_multiplicity(model.A);
}

}  // namespace sase
