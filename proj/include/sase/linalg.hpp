#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "sase/common.hpp"

namespace sase {

/// Default relative cutoff for pseudo-inverse singular values.
inline constexpr double kPinvCutoff = 1e-12;
/// Default relative tolerance for numeric rank decisions.
inline constexpr double kRankTol = 1e-10;

inline bool is_finite(const Eigen::MatrixXd& M) { return M.allFinite(); }

inline void symmetrize(Eigen::MatrixXd& M) {
  M = 0.5 * (M + M.transpose()).eval();
}

inline double max_abs(const Eigen::MatrixXd& M) {
  return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

/// Moore-Penrose pseudo-inverse by SVD; singular values below
/// rel_cutoff * sigma_max are treated as zero. Optionally reports rank.
inline Eigen::MatrixXd pinv_svd(const Eigen::MatrixXd& M,
                                double rel_cutoff = kPinvCutoff,
                                int* rank_out = nullptr) {
  if (M.size() == 0) {
    if (rank_out != nullptr) *rank_out = 0;
    return Eigen::MatrixXd::Zero(M.cols(), M.rows());
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = rel_cutoff * (sv.size() > 0 ? sv(0) : 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) {
      inv(i) = 1.0 / sv(i);
      ++rank;
    }
  }
  if (rank_out != nullptr) *rank_out = rank;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Numeric rank: count of singular values above rel_tol * sigma_max.
inline int numeric_rank(const Eigen::MatrixXd& M, double rel_tol = kRankTol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double cutoff = rel_tol * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  return rank;
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eigenvalue(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Largest eigenvalue of a symmetric matrix.
inline double max_eigenvalue(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// Symmetric square root of a PSD matrix via eigendecomposition. Eigenvalues
/// in [-tol*scale, 0) are clamped to zero; anything more negative raises,
/// because the caller handed in something that is not a covariance.
inline Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& M,
                                      double rel_tol = 1e-9,
                                      const std::string& what = "matrix") {
  if (M.rows() != M.cols()) throw NumericalError(what + ": square root of a non-square matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success)
    throw NumericalError(what + ": eigendecomposition failed in symmetric_sqrt");
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd root(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -rel_tol * scale)
      throw NumericalError(what + ": negative eigenvalue " + std::to_string(ev(i)) +
                           " in symmetric square root");
    root(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// Project a symmetric matrix onto the PSD cone by clamping eigenvalues at
/// floor_rel * max(|lambda|). Returns the smallest eigenvalue seen.
inline double clamp_to_psd(Eigen::MatrixXd& M, double floor_rel = 0.0) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success)
    throw NumericalError("clamp_to_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double lo = ev.minCoeff();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  const double floor = floor_rel * scale;
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::max(ev(i), floor);
  M = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  symmetrize(M);
  return lo;
}

/// True when M is symmetric within rel_tol (relative to its largest entry).
inline bool is_symmetric(const Eigen::MatrixXd& M, double rel_tol = 1e-12) {
  if (M.rows() != M.cols()) return false;
  const double scale = std::max(max_abs(M), 1.0);
  return max_abs(M - M.transpose()) <= rel_tol * scale;
}

}  // namespace sase
