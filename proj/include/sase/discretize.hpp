#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <unsupported/Eigen/MatrixFunctions>

#include "sase/common.hpp"
#include "sase/linalg.hpp"

namespace sase {

/// Matrix exponential (scaling-and-squaring with Padé approximants, via
/// Eigen). Raises NumericalError when the result overflows to non-finite.
inline Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("matrix_exp: non-square input");
  Eigen::MatrixXd E = M.exp();
  if (!is_finite(E)) throw NumericalError("matrix_exp: non-finite result (argument too large?)");
  return E;
}

/// Exact zero-order-hold discretization of dx = A x dt + dw, cov(dw) = Q dt,
/// over a gap of length dt:
///
///   Ad = exp(dt A),   Qd = integral_0^dt exp(tau A) Q exp(tau A)^T dtau.
///
/// Both come out of one exponential of the 2n x 2n block matrix
/// [[-A, Q], [0, A^T]] * dt (Van Loan): with exp = [[*, F12], [0, F22]],
/// Ad = F22^T and Qd = F22^T * F12. Qd is symmetrized on return.
struct Discretization {
  Eigen::MatrixXd A;  ///< state transition over the gap
  Eigen::MatrixXd Q;  ///< accumulated process-noise covariance over the gap
};

inline Discretization discretize(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q,
                                 double dt) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n) throw std::invalid_argument("discretize: A must be square");
  if (Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("discretize: Q must match A's dimension");
  if (!(dt >= 0.0)) throw std::invalid_argument("discretize: dt must be >= 0");

  if (dt == 0.0) {
    return {Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Zero(n, n)};
  }
  Eigen::MatrixXd M(2 * n, 2 * n);
  M.topLeftCorner(n, n) = -A * dt;
  M.topRightCorner(n, n) = Q * dt;
  M.bottomLeftCorner(n, n).setZero();
  M.bottomRightCorner(n, n) = A.transpose() * dt;
  const Eigen::MatrixXd E = matrix_exp(M);
  Discretization d;
  d.A = E.bottomRightCorner(n, n).transpose();
  d.Q = d.A * E.topRightCorner(n, n);
  symmetrize(d.Q);
  return d;
}

/// Inverse one-gap transition, computed as exp(-dt A) rather than by
/// inverting Ad (the exponential of a real matrix is always invertible and
/// this form never amplifies conditioning).
inline Eigen::MatrixXd discrete_inverse(const Eigen::MatrixXd& A, double dt) {
  if (!(dt >= 0.0)) throw std::invalid_argument("discrete_inverse: dt must be >= 0");
  return matrix_exp(-dt * A);
}

}  // namespace sase
