#include "sase/discretize.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "sase/linalg.hpp"

namespace {

using Eigen::MatrixXd;
using sase::discretize;
using sase::discrete_inverse;
using sase::matrix_exp;

// Independent oracle: adaptive Simpson quadrature of the noise integral
// integral_0^dt exp(tau A) Q exp(tau A)^T dtau, entirely separate from the
// augmented-matrix route used by the implementation.
MatrixXd integrand(const MatrixXd& A, const MatrixXd& Q, double tau) {
  const MatrixXd E = (tau * A).exp();
  return E * Q * E.transpose();
}

MatrixXd simpson(const MatrixXd& A, const MatrixXd& Q, double a, double b,
                 const MatrixXd& fa, const MatrixXd& fm, const MatrixXd& fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

MatrixXd adaptive_simpson(const MatrixXd& A, const MatrixXd& Q, double a, double b,
                          const MatrixXd& fa, const MatrixXd& fm, const MatrixXd& fb,
                          const MatrixXd& whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const MatrixXd flm = integrand(A, Q, 0.5 * (a + m));
  const MatrixXd frm = integrand(A, Q, 0.5 * (m + b));
  const MatrixXd left = simpson(A, Q, a, m, fa, flm, fm);
  const MatrixXd right = simpson(A, Q, m, b, fm, frm, fb);
  const MatrixXd sum = left + right;
  if (depth <= 0 || sase::max_abs(sum - whole) < 15.0 * tol) {
    return sum + (sum - whole) / 15.0;
  }
  return adaptive_simpson(A, Q, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(A, Q, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

MatrixXd quadrature_Qd(const MatrixXd& A, const MatrixXd& Q, double dt, double tol = 1e-13) {
  const MatrixXd fa = integrand(A, Q, 0.0);
  const MatrixXd fb = integrand(A, Q, dt);
  const MatrixXd fm = integrand(A, Q, 0.5 * dt);
  const MatrixXd whole = simpson(A, Q, 0.0, dt, fa, fm, fb);
  return adaptive_simpson(A, Q, 0.0, dt, fa, fm, fb, whole, tol, 40);
}

TEST(Discretize, ScalarClosedForm) {
  MatrixXd A(1, 1), Q(1, 1);
  A << -1.0;
  Q << 2.0;
  const auto d = discretize(A, Q, 1.0);
  // Ad = e^{-1}; Qd = 2 * integral_0^1 e^{-2 tau} dtau = 1 - e^{-2}.
  EXPECT_NEAR(d.A(0, 0), std::exp(-1.0), 1e-14);
  EXPECT_NEAR(d.Q(0, 0), 1.0 - std::exp(-2.0), 1e-13);
}

TEST(Discretize, DoubleIntegratorClosedForm) {
  // A = [[0,1],[0,0]], Q = I: exp(tau A) = [[1, tau],[0, 1]] gives
  // Qd = [[dt + dt^3/3, dt^2/2], [dt^2/2, dt]].
  MatrixXd A(2, 2);
  A << 0, 1, 0, 0;
  const MatrixXd Q = MatrixXd::Identity(2, 2);
  const double dt = 0.7;
  const auto d = discretize(A, Q, dt);
  MatrixXd Ad_ref(2, 2), Qd_ref(2, 2);
  Ad_ref << 1, dt, 0, 1;
  Qd_ref << dt + dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt;
  EXPECT_LT(sase::max_abs(d.A - Ad_ref), 1e-13);
  EXPECT_LT(sase::max_abs(d.Q - Qd_ref), 1e-13);
}

TEST(Discretize, MatchesQuadratureOracle) {
  MatrixXd A(3, 3), L(3, 3);
  A << -0.8, 0.4, 0.1, -0.3, -1.1, 0.9, 0.2, -0.5, -0.6;
  L << 0.9, 0, 0, 0.3, 1.2, 0, -0.4, 0.1, 0.7;
  const MatrixXd Q = L * L.transpose();
  for (double dt : {0.05, 0.31, 1.4}) {
    const auto d = discretize(A, Q, dt);
    EXPECT_LT(sase::max_abs(d.A - (dt * A).exp()), 1e-12);
    EXPECT_LT(sase::max_abs(d.Q - quadrature_Qd(A, Q, dt)), 1e-10)
        << "dt=" << dt;
  }
}

TEST(Discretize, ZeroGapIsIdentityAndZero) {
  MatrixXd A(2, 2);
  A << 0.3, -1.0, 2.0, -0.4;
  const auto d = discretize(A, MatrixXd::Identity(2, 2), 0.0);
  EXPECT_TRUE(d.A.isIdentity(0.0));
  EXPECT_TRUE(d.Q.isZero(0.0));
}

TEST(Discretize, SemigroupComposition) {
  MatrixXd A(2, 2), Q(2, 2);
  A << -0.2, 1.1, -0.9, -0.5;
  Q << 1.0, 0.2, 0.2, 0.8;
  const double dt1 = 0.4, dt2 = 0.9;
  const auto d1 = discretize(A, Q, dt1);
  const auto d2 = discretize(A, Q, dt2);
  const auto d12 = discretize(A, Q, dt1 + dt2);
  EXPECT_LT(sase::max_abs(d12.A - d2.A * d1.A), 1e-12);
  EXPECT_LT(sase::max_abs(d12.Q - (d2.A * d1.Q * d2.A.transpose() + d2.Q)), 1e-10);
}

TEST(Discretize, QdIsSymmetricPsd) {
  MatrixXd A(4, 4);
  A << -1.2, 0.3, 0.0, 0.5, -0.1, -0.7, 0.8, 0.0, 0.4, -0.6, -0.9, 0.2, 0.0,
      0.1, -0.3, -1.5;
  MatrixXd G(4, 2);
  G << 1, 0, 0.5, 0.2, -0.3, 1.1, 0.0, 0.7;
  const MatrixXd Q = G * G.transpose() + 1e-6 * MatrixXd::Identity(4, 4);
  const auto d = discretize(A, Q, 0.8);
  EXPECT_TRUE(sase::is_symmetric(d.Q));
  EXPECT_GE(sase::min_eigenvalue(d.Q), -1e-12 * sase::max_abs(d.Q));
}

TEST(Discretize, InverseTransitionMatchesNegatedGenerator) {
  MatrixXd A(3, 3);
  A << -0.5, 0.8, 0.0, -0.2, -0.1, 0.9, 0.3, 0.0, -1.0;
  const double dt = 0.6;
  const auto d = discretize(A, MatrixXd::Identity(3, 3), dt);
  const MatrixXd Ainv = discrete_inverse(A, dt);
  EXPECT_LT(sase::max_abs(d.A * Ainv - MatrixXd::Identity(3, 3)), 1e-9);
  EXPECT_LT(sase::max_abs(Ainv * d.A - MatrixXd::Identity(3, 3)), 1e-9);
}

TEST(Discretize, RejectsBadArguments) {
  MatrixXd A(2, 2);
  A.setZero();
  EXPECT_THROW(discretize(A, MatrixXd::Identity(2, 2), -0.1), std::invalid_argument);
  EXPECT_THROW(discretize(A, MatrixXd::Identity(3, 3), 0.1), std::invalid_argument);
  EXPECT_THROW(discretize(MatrixXd::Zero(2, 3), MatrixXd::Identity(2, 2), 0.1),
               std::invalid_argument);
  EXPECT_THROW(matrix_exp(MatrixXd::Zero(2, 3)), std::invalid_argument);
}

TEST(Discretize, OverflowRaisesNumericalError) {
  MatrixXd A(1, 1), Q(1, 1);
  A << 800.0;  // exp(800) overflows double
  Q << 1.0;
  EXPECT_THROW(discretize(A, Q, 1.0), sase::NumericalError);
}

}  // namespace
