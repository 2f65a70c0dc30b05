#include "sase/observability.hpp"

#include <gtest/gtest.h>

#include "sase/linalg.hpp"

namespace {

using Eigen::MatrixXd;
using sase::ContinuousModel;
using sase::observable_sets;

ContinuousModel diag_model() {
  // Diagonal A: eigenvectors are the coordinate axes, so supports can be
  // read off the C sparsity directly.
  ContinuousModel m;
  m.A = Eigen::Vector3d(-1.0, -2.0, -3.0).asDiagonal();
  m.C = MatrixXd(3, 3);
  m.C << 1.0, 1.0, 0.0,  //
      0.0, 0.0, 2.0,     //
      1.0, 0.0, 4.0;
  m.Q = MatrixXd::Identity(3, 3);
  m.Rbar = MatrixXd::Identity(3, 3);
  m.Sigma = MatrixXd::Identity(3, 3);
  return m;
}

TEST(ObservableSets, DiagonalSystemSupportsMatchSparsity) {
  const auto idx = observable_sets(diag_model());
  EXPECT_TRUE(idx.used_mode_route);
  EXPECT_EQ(idx.support[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(idx.support[1], (std::vector<int>{2}));
  EXPECT_EQ(idx.support[2], (std::vector<int>{0, 2}));
  EXPECT_EQ(idx.rank[0], 2);
  EXPECT_EQ(idx.rank[1], 1);
  EXPECT_EQ(idx.rank[2], 2);
  EXPECT_EQ(idx.observers[0], (std::vector<int>{0, 2}));
  EXPECT_EQ(idx.observers[1], (std::vector<int>{0}));
  EXPECT_EQ(idx.observers[2], (std::vector<int>{1, 2}));
  // h rows mirror the supports.
  MatrixXd h_ref(3, 3);
  h_ref << 1, 1, 0, 0, 0, 1, 1, 0, 1;
  EXPECT_LT(sase::max_abs(idx.h - h_ref), 0.0 + 1e-15);
}

TEST(ObservableSets, SingleAxisSensorOnDiagonalA) {
  ContinuousModel m = diag_model();
  m.C = MatrixXd(2, 3);
  m.C << 1, 0, 0,  //
      1, 1, 1;
  m.Rbar = MatrixXd::Identity(2, 2);
  const auto idx = observable_sets(m);
  EXPECT_EQ(idx.support[0], (std::vector<int>{0}));
  EXPECT_EQ(idx.support[1], (std::vector<int>{0, 1, 2}));
}

TEST(ObservableSets, RotationBlockSensorSeesBothStates) {
  ContinuousModel m;
  m.A = MatrixXd(2, 2);
  m.A << 0, 1, -1, 0;
  m.C = MatrixXd(1, 2);
  m.C << 1, 0;
  m.Q = MatrixXd::Identity(2, 2);
  m.Rbar = MatrixXd::Identity(1, 1);
  m.Sigma = MatrixXd::Identity(2, 2);
  const auto idx = observable_sets(m);
  EXPECT_EQ(idx.support[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(idx.rank[0], 2);
}

TEST(ObservableSets, ModeAndLiteralRoutesAgree) {
  const auto m = diag_model();
  const auto via_modes = observable_sets(m);
  const auto via_literal = sase::detail::observable_sets_literal(m, sase::kRankTol);
  ASSERT_EQ(via_modes.support.size(), via_literal.support.size());
  for (std::size_t i = 0; i < via_modes.support.size(); ++i) {
    EXPECT_EQ(via_modes.support[i], via_literal.support[i]) << "sensor " << i;
    EXPECT_EQ(via_modes.rank[i], via_literal.rank[i]) << "sensor " << i;
  }
}

TEST(ObservableSets, MisalignedSubspaceIsRejected) {
  // C = [1, -1] annihilates the eigenvector (1,1) of A, so the sensor sees
  // only the first mode -- whose left eigenvector touches both coordinates.
  // The observable subspace is a line off the axes: not coordinate-aligned.
  ContinuousModel m;
  m.A = MatrixXd(2, 2);
  m.A << 1, 1, 0, 2;
  m.C = MatrixXd(1, 2);
  m.C << 1, -1;
  m.Q = MatrixXd::Identity(2, 2);
  m.Rbar = MatrixXd::Identity(1, 1);
  m.Sigma = MatrixXd::Identity(2, 2);
  EXPECT_THROW(observable_sets(m), sase::ModelError);
}

TEST(ObservableSets, UnobservedStateIsRejected) {
  ContinuousModel m;
  m.A = Eigen::Vector2d(-1.0, -2.0).asDiagonal();
  m.C = MatrixXd(1, 2);
  m.C << 1, 0;
  m.Q = MatrixXd::Identity(2, 2);
  m.Rbar = MatrixXd::Identity(1, 1);
  m.Sigma = MatrixXd::Identity(2, 2);
  EXPECT_THROW(observable_sets(m), sase::ModelError);
  EXPECT_THROW(sase::validate_model(m), sase::ModelError);
}

TEST(ObservabilityMatrix, LiteralStackForDefectiveA) {
  // Double integrator: position sensor observes everything, velocity sensor
  // only itself. Repeated eigenvalue (gm 1) forces the literal route.
  ContinuousModel m;
  m.A = MatrixXd(2, 2);
  m.A << 0, 1, 0, 0;
  m.C = MatrixXd(2, 2);
  m.C << 1, 0,  //
      0, 1;
  m.Q = MatrixXd::Identity(2, 2);
  m.Rbar = MatrixXd::Identity(2, 2);
  m.Sigma = MatrixXd::Identity(2, 2);
  const auto idx = observable_sets(m);
  EXPECT_FALSE(idx.used_mode_route);
  EXPECT_EQ(idx.support[0], (std::vector<int>{0, 1}));
  EXPECT_EQ(idx.support[1], (std::vector<int>{1}));
  EXPECT_EQ(idx.observers[0], (std::vector<int>{0}));
  EXPECT_EQ(idx.observers[1], (std::vector<int>{0, 1}));
}

// Brute-force cross-check of the sparse-observability order: enumerate all
// removals directly and find the largest safe removal size.
int brute_force_order(const ContinuousModel& m) {
  const int msens = int(m.m());
  const int n = int(m.n());
  for (int s = 1; s < msens; ++s) {
    // iterate all subsets of size s
    std::vector<int> comb(s);
    for (int i = 0; i < s; ++i) comb[i] = i;
    while (true) {
      std::vector<bool> removed(msens, false);
      for (int i : comb) removed[i] = true;
      MatrixXd Csub(msens - s, n);
      int r = 0;
      for (int i = 0; i < msens; ++i)
        if (!removed[i]) Csub.row(r++) = m.C.row(i);
      if (sase::numeric_rank(sase::observability_matrix(m.A, Csub)) < n) return s - 1;
      int pos = s - 1;
      while (pos >= 0 && comb[pos] == msens - s + pos) --pos;
      if (pos < 0) break;
      ++comb[pos];
      for (int i = pos + 1; i < s; ++i) comb[i] = comb[i - 1] + 1;
    }
  }
  return msens - 1;
}

TEST(SparseObservability, OrderMatchesBruteForce) {
  ContinuousModel m;
  m.A = Eigen::Vector2d(-1.0, -2.0).asDiagonal();
  m.C = MatrixXd(4, 2);
  m.C << 1, 0,  //
      0, 1,     //
      1, 1,     //
      1, -1;
  m.Q = MatrixXd::Identity(2, 2);
  m.Rbar = MatrixXd::Identity(4, 4);
  m.Sigma = MatrixXd::Identity(2, 2);
  const int order = sase::sparse_observability_order(m);
  EXPECT_EQ(order, 2);
  EXPECT_EQ(order, brute_force_order(m));
}

TEST(SparseObservability, AxisSensorsGiveOrderZero) {
  ContinuousModel m;
  m.A = Eigen::Vector2d(-1.0, -2.0).asDiagonal();
  m.C = MatrixXd(2, 2);
  m.C << 1, 0, 0, 1;
  m.Q = MatrixXd::Identity(2, 2);
  m.Rbar = MatrixXd::Identity(2, 2);
  m.Sigma = MatrixXd::Identity(2, 2);
  EXPECT_EQ(sase::sparse_observability_order(m), 0);
  EXPECT_EQ(brute_force_order(m), 0);
}

TEST(ValidateModel, AcceptsObservableRejectsBlind) {
  ContinuousModel m = diag_model();
  EXPECT_NO_THROW(sase::validate_model(m));
}

}  // namespace
