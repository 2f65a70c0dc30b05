#include "sase/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>

namespace {

using sase::KeyedStream;
using sase::time_key;

TEST(KeyedStream, SameKeySameSequence) {
  KeyedStream a(7, sase::rng_domain::kMeasurement, 3, time_key(1.25));
  KeyedStream b(7, sase::rng_domain::kMeasurement, 3, time_key(1.25));
  for (int i = 0; i < 64; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(KeyedStream, KeyComponentsMatter) {
  const std::uint64_t base = KeyedStream(7, 1, 2, 3).next_u64();
  EXPECT_NE(base, KeyedStream(8, 1, 2, 3).next_u64());
  EXPECT_NE(base, KeyedStream(7, 2, 2, 3).next_u64());
  EXPECT_NE(base, KeyedStream(7, 1, 3, 3).next_u64());
  EXPECT_NE(base, KeyedStream(7, 1, 2, 4).next_u64());
}

TEST(KeyedStream, TimeKeyIsExactBits) {
  EXPECT_EQ(time_key(0.1), time_key(0.1));
  EXPECT_NE(time_key(0.1), time_key(0.1 + 1e-15));
  EXPECT_NE(time_key(0.0), time_key(-0.0));  // distinct bit patterns by design
}

TEST(KeyedStream, UnitDrawsLieInHalfOpenInterval) {
  KeyedStream s(1, sase::rng_domain::kGeneric);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.next_unit();
    EXPECT_GT(u, 0.0);
    EXPECT_LE(u, 1.0);
  }
}

TEST(KeyedStream, UniformRespectsBounds) {
  KeyedStream s(2, sase::rng_domain::kSchedule, 5);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.next_uniform(0.01, 0.05);
    EXPECT_GE(u, 0.01);
    EXPECT_LT(u, 0.05);
  }
}

// Monte-Carlo moment check for the normal generator: with N = 400k draws the
// standard error of the mean is 1/sqrt(N) ~ 1.6e-3 and of the variance
// sqrt(2/N) ~ 2.2e-3; 4-sigma bands keep this deterministic test safely away
// from flakiness while still catching a broken transform.
TEST(KeyedStream, NormalMomentsMatchStandardGaussian) {
  KeyedStream s(123, sase::rng_domain::kGeneric, 9);
  const int N = 400000;
  double sum = 0.0, sum2 = 0.0, sum3 = 0.0;
  for (int i = 0; i < N; ++i) {
    const double z = s.next_normal();
    sum += z;
    sum2 += z * z;
    sum3 += z * z * z;
  }
  const double mean = sum / N;
  const double var = sum2 / N - mean * mean;
  const double skew = sum3 / N;
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(double(N)));
  EXPECT_NEAR(var, 1.0, 4.0 * std::sqrt(2.0 / N));
  EXPECT_NEAR(skew, 0.0, 4.0 * std::sqrt(15.0 / N));
}

TEST(KeyedStream, NormalVectorHasRequestedSizeAndIsDeterministic) {
  KeyedStream a(5, sase::rng_domain::kProcess, 0, time_key(0.75));
  KeyedStream b(5, sase::rng_domain::kProcess, 0, time_key(0.75));
  const Eigen::VectorXd za = a.normal_vector(17);
  const Eigen::VectorXd zb = b.normal_vector(17);
  ASSERT_EQ(za.size(), 17);
  EXPECT_TRUE(za == zb);  // bitwise identical
}

// Frozen regression values: trace reproducibility across refactors depends on
// the generator never changing behaviour for a fixed key. If this test ever
// fails, previously written traces are no longer reproducible -- that is a
// breaking change, not a test to update casually.
TEST(KeyedStream, FrozenReferenceDraws) {
  KeyedStream s(42, sase::rng_domain::kGeneric, 0, 0);
  EXPECT_EQ(s.next_u64(), 9920405954342579326ULL);
  EXPECT_EQ(s.next_u64(), 12816525408041442197ULL);
  KeyedStream t(42, sase::rng_domain::kGeneric, 0, 0);
  EXPECT_DOUBLE_EQ(t.next_normal(), -0.3787058157213728);
  EXPECT_DOUBLE_EQ(t.next_normal(), -1.0474588213737321);
}

}  // namespace
