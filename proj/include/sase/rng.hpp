#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>

namespace sase {

// Deterministic, stateless-keyable random streams.
//
// Every random draw in the library is keyed by (seed, domain, a, b) rather
// than consumed from one global sequence. That makes paired runs possible:
// two measurement streams that share a seed produce bit-identical noise for
// every (sensor, time-stamp) they have in common, regardless of how many
// other draws happen in between, and a time-stamp created later (e.g. by a
// retimed or generated sample) gets a fresh but reproducible draw.

namespace detail {

/// 64-bit finalizer (splitmix64 variant); full avalanche.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Domain tags keep independent purposes on independent streams.
namespace rng_domain {
inline constexpr std::uint64_t kInitialState = 0x1A5E11;
inline constexpr std::uint64_t kProcess = 0x2B6F22;
inline constexpr std::uint64_t kMeasurement = 0x3C7A33;
inline constexpr std::uint64_t kSchedule = 0x4D8B44;
inline constexpr std::uint64_t kGainRepair = 0x5E9C55;
inline constexpr std::uint64_t kGeneric = 0x6FAD66;
}  // namespace rng_domain

/// Map a time-stamp to a key component by exact bit pattern, so a triple
/// carried between runs keys the same stream without any tolerance games.
inline std::uint64_t time_key(double t) { return std::bit_cast<std::uint64_t>(t); }

/// A small counter-based generator seeded from a 4-part key.
class KeyedStream {
 public:
  KeyedStream(std::uint64_t seed, std::uint64_t domain, std::uint64_t a = 0,
              std::uint64_t b = 0) {
    std::uint64_t h = detail::mix64(seed ^ 0x9E3779B97F4A7C15ULL);
    h = detail::mix64(h ^ domain);
    h = detail::mix64(h ^ a);
    state_ = detail::mix64(h ^ b);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on (0, 1] (never returns 0, safe under log()).
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
  }

  /// Uniform on [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(next_u64() >> 11) * 0x1p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Vector of independent standard normals.
  Eigen::VectorXd normal_vector(Eigen::Index size) {
    Eigen::VectorXd z(size);
    for (Eigen::Index i = 0; i < size; ++i) z(i) = next_normal();
    return z;
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sase
