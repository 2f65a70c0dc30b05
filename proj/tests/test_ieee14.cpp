#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "sase/ieee14.hpp"
#include "sase/observability.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

TEST(Ieee14, DimensionsMatchTheBenchmark) {
  const sase::ContinuousModel model = sase::build_ieee14();
  EXPECT_EQ(model.n(), 28);
  EXPECT_EQ(model.m(), 42);
}

TEST(Ieee14, UnshuntedLaplacianRowSumsAreZero) {
  const MatrixXd L = sase::ieee14_laplacian();
  ASSERT_EQ(L.rows(), 14);
  const VectorXd row_sums = L.rowwise().sum();
  EXPECT_LT(row_sums.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((L - L.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

// Rebuild the Laplacian through a different assembly route - incidence
// matrix times branch-weight diagonal - from an independently transcribed
// susceptance table (1/x computed here, not shared with the library path).
TEST(Ieee14, LaplacianMatchesIncidenceReconstruction) {
  struct Line {
    int a, b;
    double susceptance;
  };
  const std::array<Line, 20> lines = {{
      {1, 2, 1.0 / 0.05917},   {1, 5, 1.0 / 0.22304},
      {2, 3, 1.0 / 0.19797},   {2, 4, 1.0 / 0.17632},
      {2, 5, 1.0 / 0.17388},   {3, 4, 1.0 / 0.17103},
      {4, 5, 1.0 / 0.04211},   {4, 7, 1.0 / 0.20912},
      {4, 9, 1.0 / 0.55618},   {5, 6, 1.0 / 0.25202},
      {6, 11, 1.0 / 0.19890},  {6, 12, 1.0 / 0.25581},
      {6, 13, 1.0 / 0.13027},  {7, 8, 1.0 / 0.17615},
      {7, 9, 1.0 / 0.11001},   {9, 10, 1.0 / 0.08450},
      {9, 14, 1.0 / 0.27038},  {10, 11, 1.0 / 0.19207},
      {12, 13, 1.0 / 0.19988}, {13, 14, 1.0 / 0.34802},
  }};
  MatrixXd E = MatrixXd::Zero(20, 14);
  VectorXd w(20);
  for (int k = 0; k < 20; ++k) {
    E(k, lines[std::size_t(k)].a - 1) = 1.0;
    E(k, lines[std::size_t(k)].b - 1) = -1.0;
    w(k) = lines[std::size_t(k)].susceptance;
  }
  const MatrixXd oracle = E.transpose() * w.asDiagonal() * E;
  const MatrixXd L = sase::ieee14_laplacian();
  EXPECT_LT((L - oracle).cwiseAbs().maxCoeff(), 1e-12 * oracle.cwiseAbs().maxCoeff());
}

TEST(Ieee14, DynamicsBlocksFollowTheSwingEquation) {
  sase::Ieee14Options opt;
  opt.mass = 2.0;
  opt.damping = 0.8;
  opt.shunt = 0.03;
  const sase::ContinuousModel model = sase::build_ieee14(opt);
  const MatrixXd L = sase::ieee14_laplacian();
  const MatrixXd I14 = MatrixXd::Identity(14, 14);

  EXPECT_LT(model.A.topLeftCorner(14, 14).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((model.A.topRightCorner(14, 14) - I14).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((model.A.bottomLeftCorner(14, 14) + (L + 0.03 * I14) / 2.0)
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
  EXPECT_LT((model.A.bottomRightCorner(14, 14) + 0.4 * I14).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(Ieee14, SensorRowsMeasurePowerAngleAndFrequency) {
  const sase::ContinuousModel model = sase::build_ieee14();
  const MatrixXd L = sase::ieee14_laplacian();
  for (int bus = 1; bus <= 14; ++bus) {
    const int b = bus - 1;
    const auto p = model.C.row(sase::ieee14_power_sensor(bus));
    const auto a = model.C.row(sase::ieee14_angle_sensor(bus));
    const auto f = model.C.row(sase::ieee14_frequency_sensor(bus));
    // power row: shunted Laplacian row on the angle block, reported in
    // per-unit of the local line strength (unit row norm), silent on the
    // frequency block; off-diagonal flow terms cancel so the row sums to
    // the shunt conductance divided by that strength
    const VectorXd raw = L.row(b).transpose() + 0.05 * VectorXd::Unit(14, b);
    EXPECT_LT((p.head(14).transpose() - raw / raw.norm()).cwiseAbs().maxCoeff(),
              1e-15);
    EXPECT_NEAR(p.head(14).norm(), 1.0, 1e-12);
    EXPECT_LT(p.tail(14).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(p.head(14).sum(), 0.05 / raw.norm(), 1e-12);
    // angle and frequency rows: unit selectors
    EXPECT_DOUBLE_EQ(a(b), 1.0);
    EXPECT_DOUBLE_EQ(a.cwiseAbs().sum(), 1.0);
    EXPECT_DOUBLE_EQ(f(14 + b), 1.0);
    EXPECT_DOUBLE_EQ(f.cwiseAbs().sum(), 1.0);
  }
}

TEST(Ieee14, ModesAreStableAndSlowEnoughForLongRuns) {
  const sase::ContinuousModel model = sase::build_ieee14();
  const Eigen::VectorXcd ev = model.A.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    EXPECT_LT(ev(i).real(), 0.0);
    EXPECT_GT(ev(i).real(), -0.5);
  }
}

TEST(Ieee14, EveryStateIsRedundantlyObservable) {
  const sase::ContinuousModel model = sase::build_ieee14();
  const sase::ObservabilityIndex index = sase::observable_sets(model);
  for (int j = 0; j < model.n(); ++j)
    EXPECT_GE(int(index.observers[std::size_t(j)].size()), 3)
        << "state " << j << " has too few observers";
}

TEST(Ieee14, SparseObservabilityCoversTheBenchmarkAttack) {
  const sase::ContinuousModel model = sase::build_ieee14();
  // the shipped attacked scenario corrupts four sensors
  EXPECT_GE(sase::sparse_observability_order(model), 8);
}

TEST(Ieee14, RejectsNonPositiveParameters) {
  sase::Ieee14Options opt;
  opt.shunt = 0.0;
  EXPECT_THROW(sase::build_ieee14(opt), sase::ModelError);
  opt = {};
  opt.power_noise = -1.0;
  EXPECT_THROW(sase::build_ieee14(opt), sase::ModelError);
}

}  // namespace
